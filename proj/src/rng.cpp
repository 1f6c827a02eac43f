#include "fedfog/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfog {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) {
    return a + (b - a) * uniform();
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be > 0");
    return static_cast<std::size_t>(engine_() % n);
}

double Rng::normal() {
    // 1 - uniform() lies in (0, 1], so the log argument is never zero.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("Rng::gamma: shape must be > 0");
    if (shape < 1.0) {
        // Boost to shape+1 and scale back.
        double u = 1.0 - uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = 1.0 - uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> Rng::dirichlet(double alpha, int n) {
    if (n <= 0) throw std::invalid_argument("Rng::dirichlet: n must be > 0");
    std::vector<double> out(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& g : out) {
        g = gamma(alpha);
        total += g;
    }
    if (total <= 0.0) {
        // All-underflow draw; fall back to a uniform simplex point.
        for (auto& g : out) g = 1.0 / n;
        return out;
    }
    for (auto& g : out) g /= total;
    return out;
}

} // namespace fedfog
