#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace fedfog {

/// Dense labeled dataset, features stored row-major.
struct Dataset {
    int dim = 0;
    int classes = 0;
    std::vector<double> features; // size() == rows * dim
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    std::span<const double> row(int i) const {
        return {features.data() + static_cast<std::size_t>(i) * dim,
                static_cast<std::size_t>(dim)};
    }
};

struct Shard {
    int owner = -1;
    std::vector<int> indices;
};

/// Gaussian mixture: one unit-noise blob per class, class means drawn on a
/// sphere of radius `separation`.
Dataset generate_synthetic(int classes, int dim, int n_per_class, double separation,
                           std::uint64_t seed);

/// Non-iid split: per class, node proportions ~ Dirichlet(alpha), samples
/// assigned multinomially. Empty shards are repaired by moving one sample
/// from the currently largest shard.
std::vector<Shard> dirichlet_partition(const Dataset& dataset, int num_nodes, double alpha,
                                       std::uint64_t seed);

/// Stratified split of an index subset; returns (train, test) indices.
std::pair<std::vector<int>, std::vector<int>>
split_indices(const Dataset& dataset, const std::vector<int>& indices, double test_fraction,
              std::uint64_t seed);

std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double test_fraction,
                                             std::uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<int>& indices);

/// Shannon entropy (nats) of the label distribution over `indices`.
double label_entropy(const Dataset& dataset, const std::vector<int>& indices);

} // namespace fedfog
