#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfog/channel.hpp"
#include "fedfog/model.hpp"
#include "fedfog/protocol.hpp"
#include "fedfog/topology.hpp"

#include <json.hpp>

namespace fedfog {

struct DataParams {
    int classes = 10;
    int dim = 32;
    int n_per_class = 300;      // per class, per task
    double alpha = 0.1;         // Dirichlet concentration across a task's devices
    double test_fraction = 0.2;
    double separation = 3.5;    // class-mean radius of the Gaussian mixture
    int num_tasks = 2;          // clusters alternate tasks round-robin
};

struct ExperimentConfig {
    TopologyConfig topology;
    ChannelParams channel;
    ModelSpec model; // input_dim / num_classes / num_tasks mirror the data section
    DataParams data;
    AggregationPolicy policy; // policy.strategy is set per run from `strategies`
    std::vector<Strategy> strategies{Strategy::Star, Strategy::Hier, Strategy::HierD2D};
    int rounds = 0;
    double learning_rate = 0.3;
    int batch_size = 16;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
};

/// Strict parse: unknown keys are rejected with their path, every value is
/// type-checked, and the result passes all module validations.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config(const std::string& path);

/// Every field explicit, defaults included; stable key order.
nlohmann::json resolved_json(const ExperimentConfig& config);

} // namespace fedfog
