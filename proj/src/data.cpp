#include "fedfog/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedfog/errors.hpp"
#include "fedfog/rng.hpp"

namespace fedfog {

Dataset generate_synthetic(int classes, int dim, int n_per_class, double separation,
                           std::uint64_t seed) {
    if (classes <= 0 || dim <= 0 || n_per_class <= 0) {
        throw DataError("generate_synthetic: classes, dim, n_per_class must be positive");
    }
    if (separation < 0.0) throw DataError("generate_synthetic: separation must be >= 0");

    Dataset ds;
    ds.dim = dim;
    ds.classes = classes;
    ds.features.reserve(static_cast<std::size_t>(classes) * n_per_class * dim);
    ds.labels.reserve(static_cast<std::size_t>(classes) * n_per_class);

    Rng rng(seed);
    for (int c = 0; c < classes; ++c) {
        std::vector<double> mean(static_cast<std::size_t>(dim));
        double norm = 0.0;
        for (auto& m : mean) {
            m = rng.normal();
            norm += m * m;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (auto& m : mean) m *= separation / norm;
        }
        for (int i = 0; i < n_per_class; ++i) {
            for (int k = 0; k < dim; ++k) {
                ds.features.push_back(mean[static_cast<std::size_t>(k)] + rng.normal());
            }
            ds.labels.push_back(c);
        }
    }
    return ds;
}

std::vector<Shard> dirichlet_partition(const Dataset& dataset, int num_nodes, double alpha,
                                       std::uint64_t seed) {
    if (num_nodes < 1) throw PartitionError("dirichlet_partition: num_nodes must be >= 1");
    if (alpha <= 0.0) throw PartitionError("dirichlet_partition: alpha must be > 0");
    if (dataset.size() < num_nodes) {
        throw PartitionError("dirichlet_partition: dataset has " +
                             std::to_string(dataset.size()) + " samples for " +
                             std::to_string(num_nodes) + " nodes");
    }

    std::vector<Shard> shards(static_cast<std::size_t>(num_nodes));
    for (int n = 0; n < num_nodes; ++n) shards[static_cast<std::size_t>(n)].owner = n;

    Rng rng(seed);
    for (int c = 0; c < dataset.classes; ++c) {
        std::vector<double> props = rng.dirichlet(alpha, num_nodes);
        // CDF inversion per sample of this class, in index order.
        std::vector<double> cdf(props.size());
        double acc = 0.0;
        for (std::size_t n = 0; n < props.size(); ++n) {
            acc += props[n];
            cdf[n] = acc;
        }
        cdf.back() = 1.0;
        for (int i = 0; i < dataset.size(); ++i) {
            if (dataset.labels[static_cast<std::size_t>(i)] != c) continue;
            double u = rng.uniform();
            auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
            auto n = static_cast<std::size_t>(it - cdf.begin());
            if (n >= shards.size()) n = shards.size() - 1;
            shards[n].indices.push_back(i);
        }
    }

    // FedAvg weights must stay positive: feed empty shards from the largest one.
    for (auto& empty : shards) {
        if (!empty.indices.empty()) continue;
        auto largest = std::max_element(
            shards.begin(), shards.end(), [](const Shard& a, const Shard& b) {
                return a.indices.size() < b.indices.size();
            });
        if (largest->indices.size() <= 1) {
            throw PartitionError("dirichlet_partition: not enough samples to repair empty shards");
        }
        empty.indices.push_back(largest->indices.back());
        largest->indices.pop_back();
    }
    for (auto& shard : shards) std::sort(shard.indices.begin(), shard.indices.end());
    return shards;
}

std::pair<std::vector<int>, std::vector<int>>
split_indices(const Dataset& dataset, const std::vector<int>& indices, double test_fraction,
              std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw DataError("split_indices: test_fraction must lie in (0, 1)");
    }
    Rng rng(seed);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.classes));
    for (int idx : indices) {
        by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(idx)])]
            .push_back(idx);
    }
    std::vector<int> train, test;
    for (auto& group : by_class) {
        // Fisher-Yates with the pinned rng.
        for (std::size_t i = group.size(); i > 1; --i) {
            std::swap(group[i - 1], group[rng.index(i)]);
        }
        auto n_test = static_cast<std::size_t>(
            std::floor(test_fraction * static_cast<double>(group.size()) + 0.5));
        for (std::size_t i = 0; i < group.size(); ++i) {
            (i < n_test ? test : train).push_back(group[i]);
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double test_fraction,
                                             std::uint64_t seed) {
    std::vector<int> all(static_cast<std::size_t>(dataset.size()));
    for (int i = 0; i < dataset.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    auto [train_idx, test_idx] = split_indices(dataset, all, test_fraction, seed);
    return {subset(dataset, train_idx), subset(dataset, test_idx)};
}

Dataset subset(const Dataset& dataset, const std::vector<int>& indices) {
    Dataset out;
    out.dim = dataset.dim;
    out.classes = dataset.classes;
    out.features.reserve(indices.size() * static_cast<std::size_t>(dataset.dim));
    out.labels.reserve(indices.size());
    for (int idx : indices) {
        auto row = dataset.row(idx);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(dataset.labels[static_cast<std::size_t>(idx)]);
    }
    return out;
}

double label_entropy(const Dataset& dataset, const std::vector<int>& indices) {
    if (indices.empty()) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(dataset.classes), 0.0);
    for (int idx : indices) {
        counts[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(idx)])] += 1.0;
    }
    double entropy = 0.0;
    for (double n : counts) {
        if (n == 0.0) continue;
        double p = n / static_cast<double>(indices.size());
        entropy -= p * std::log(p);
    }
    return entropy;
}

} // namespace fedfog
