#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedfog/channel.hpp"
#include "fedfog/data.hpp"
#include "fedfog/metrics.hpp"
#include "fedfog/model.hpp"
#include "fedfog/topology.hpp"

namespace fedfog {

enum class Strategy { Star, Hier, HierD2D };

const char* strategy_label(Strategy strategy);
std::optional<Strategy> parse_strategy(const std::string& name);
std::vector<std::string> strategy_names();

enum class AggDepth { EdgeOnly, Cloud };

struct ModuleOverride {
    AggDepth depth = AggDepth::Cloud;
    int period = 1; // participate in aggregation only on rounds divisible by this
};

struct AggregationPolicy {
    Strategy strategy = Strategy::Hier;
    int e_local = 1;    // local epochs per round
    int e_agg = 2;      // edge aggregations per cloud aggregation
    bool edge_only = false; // suppress cloud aggregation entirely
    std::map<ModuleKind, ModuleOverride> module_overrides;
};

void validate_policy(const AggregationPolicy& policy);

/// Per-device training material plus the task its cluster solves.
struct DeviceData {
    Dataset train;
    int task = 0;
};

/// Everything a round needs besides mutable training state. Built once per
/// (config, seed) and shared by all strategies so they start identically.
struct SimEnv {
    NetworkTopology topo;
    ChannelParams chan;
    ModelSpec spec;
    std::vector<DeviceData> devices;   // by device id
    std::vector<int> cluster_task;     // by cluster id
    std::vector<Dataset> cluster_test; // per-cluster slice of its task's held-out test set
    double learning_rate = 0.1;
    int batch_size = 32;
    // member -> node sequence member..head, per cluster; heads map to {head}
    std::vector<std::map<int, std::vector<int>>> cluster_paths;
};

std::vector<std::map<int, std::vector<int>>> all_cluster_paths(const NetworkTopology& topo);

struct TrainState {
    Strategy strategy = Strategy::Star;
    int round = 0; // completed rounds, 1-based during a round
    std::vector<ModularModel> device_models;
    // Values each aggregation point last broadcast (post cloud merge on cloud
    // rounds): by edge server id for Hier, by cluster id for HierD2D.
    std::map<int, std::vector<BlockValues>> edge_aggregates;
    std::map<int, std::vector<BlockValues>> cluster_aggregates;
    std::vector<BlockValues> cloud_blocks;
    TransferLedger* ledger = nullptr;
};

/// All devices start from one shared initialization.
TrainState init_state(const SimEnv& env, Strategy strategy, std::uint64_t model_seed,
                      TransferLedger& ledger);

/// Element-wise weighted mean, summed in the order given. Callers order
/// updates by ascending owner id so different groupings stay bit-comparable.
std::vector<double> fedavg(const std::vector<std::vector<double>>& values,
                           const std::vector<double>& weights);

/// fedavg across aligned block sets (same kinds, same order).
std::vector<BlockValues> fedavg_block_sets(const std::vector<std::vector<BlockValues>>& updates,
                                           const std::vector<double>& weights);

/// e_local sequential passes of minibatch SGD over the device's train shard.
void train_local(ModularModel& model, const DeviceData& data, int e_local, double lr,
                 int batch_size);

void run_round_star(TrainState& state, const AggregationPolicy& policy, const SimEnv& env);
void run_round_hier(TrainState& state, const AggregationPolicy& policy, const SimEnv& env);
void run_round_hier_d2d(TrainState& state, const AggregationPolicy& policy, const SimEnv& env);
void run_round(TrainState& state, const AggregationPolicy& policy, const SimEnv& env);

/// Star: the shared model over the pooled test data. Hier variants: mean over
/// clusters of each cluster's own model on its own test shard.
double evaluate_accuracy(const TrainState& state, const SimEnv& env);

} // namespace fedfog
