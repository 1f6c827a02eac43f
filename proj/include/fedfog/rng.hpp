#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace fedfog {

/// Derives an independent stream seed from a master seed and a salt
/// (splitmix64 finalizer). Chainable: mix_seed(mix_seed(s, a), b).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// Seeded random source. The engine is std::mt19937_64 (sequence pinned by
/// the standard); all transforms are implemented here because the std::
/// distribution objects are implementation-defined and would break
/// cross-toolchain reproducibility of experiment outputs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform double in [a, b).
    double uniform(double a, double b);

    /// Uniform index in [0, n). Requires n > 0.
    std::size_t index(std::size_t n);

    /// Standard normal (Box-Muller).
    double normal();

    /// Gamma(shape, scale=1), Marsaglia-Tsang. Requires shape > 0.
    double gamma(double shape);

    /// Symmetric Dirichlet(alpha) over n components.
    std::vector<double> dirichlet(double alpha, int n);

private:
    std::mt19937_64 engine_;
};

} // namespace fedfog
