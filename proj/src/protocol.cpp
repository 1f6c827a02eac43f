#include "fedfog/protocol.hpp"

#include <algorithm>
#include <numeric>

#include "fedfog/errors.hpp"

namespace fedfog {

namespace {

EventKind to_event_kind(LinkKind kind) {
    switch (kind) {
    case LinkKind::Uplink: return EventKind::Uplink;
    case LinkKind::Downlink: return EventKind::Downlink;
    case LinkKind::D2D: return EventKind::D2D;
    case LinkKind::Backhaul: return EventKind::Backhaul;
    }
    return EventKind::Uplink;
}

// One synchronization stage: parallel chains of sequential events. Stage
// latency is the slowest chain; its events get the critical-path stamp.
class StageRecorder {
public:
    explicit StageRecorder(TransferLedger& ledger) : ledger_(ledger) {}

    int new_chain() {
        chains_.emplace_back();
        latency_.push_back(0.0);
        return static_cast<int>(chains_.size()) - 1;
    }

    void add(int chain, std::size_t event_index, double latency_s) {
        chains_[static_cast<std::size_t>(chain)].push_back(event_index);
        latency_[static_cast<std::size_t>(chain)] += latency_s;
    }

    double close() {
        if (chains_.empty()) return 0.0;
        std::size_t best = 0;
        for (std::size_t i = 1; i < latency_.size(); ++i) {
            if (latency_[i] > latency_[best]) best = i;
        }
        for (std::size_t idx : chains_[best]) ledger_.mark_critical(idx);
        return latency_[best];
    }

private:
    TransferLedger& ledger_;
    std::vector<std::vector<std::size_t>> chains_;
    std::vector<double> latency_;
};

struct LoggedTransfer {
    std::size_t index = 0;
    double latency_s = 0.0;
};

LoggedTransfer log_transfer(TransferLedger& ledger, const SimEnv& env, Strategy strategy,
                            int round, int src, int dst, LinkKind kind, std::uint64_t bytes) {
    const Node& from = env.topo.node(src);
    double dist = 0.0;
    if (kind == LinkKind::Uplink || kind == LinkKind::D2D) {
        const Node& to = env.topo.node(dst);
        if (!from.position || !to.position) {
            throw AccountingError("transfer over a positionless node on a wireless link");
        }
        dist = distance_m(*from.position, *to.position);
    }
    const double tx_power =
        kind == LinkKind::D2D ? from.tx_power_d2d_w : from.tx_power_uplink_w;
    const double rate = link_rate_bps(dist, tx_power, kind, env.chan);
    const TransferCost cost = transfer_cost(bytes, rate, tx_power, env.chan);

    TransferEvent event;
    event.strategy = strategy_label(strategy);
    event.round = round;
    event.src = src;
    event.dst = dst;
    event.kind = to_event_kind(kind);
    event.bytes = bytes;
    event.latency_s = cost.latency_s;
    event.energy_j = cost.energy_j;
    return {ledger.record_transfer(std::move(event)), cost.latency_s};
}

bool participates(const AggregationPolicy& policy, const ModuleKind& kind, int round) {
    auto it = policy.module_overrides.find(kind);
    const int period = it == policy.module_overrides.end() ? 1 : it->second.period;
    return round % period == 0;
}

bool ascends(const AggregationPolicy& policy, const ModuleKind& kind) {
    auto it = policy.module_overrides.find(kind);
    return it == policy.module_overrides.end() || it->second.depth == AggDepth::Cloud;
}

std::vector<BlockValues> filter_ascending(const std::vector<BlockValues>& set,
                                          const AggregationPolicy& policy) {
    std::vector<BlockValues> out;
    for (const auto& entry : set) {
        if (ascends(policy, entry.first)) out.push_back(entry);
    }
    return out;
}

void upsert_blocks(std::vector<BlockValues>& dst, const std::vector<BlockValues>& src) {
    for (const auto& entry : src) {
        auto it = std::find_if(dst.begin(), dst.end(),
                               [&](const BlockValues& b) { return b.first == entry.first; });
        if (it == dst.end()) {
            dst.push_back(entry);
        } else {
            it->second = entry.second;
        }
    }
}

// Broadcast view on a cloud round: cloud values for the blocks that ascended,
// the local (edge/cluster) aggregate for the rest.
std::vector<BlockValues> merged_view(std::vector<BlockValues> base,
                                     const std::vector<BlockValues>& cloud) {
    for (auto& entry : base) {
        auto it = std::find_if(cloud.begin(), cloud.end(),
                               [&](const BlockValues& b) { return b.first == entry.first; });
        if (it != cloud.end()) entry.second = it->second;
    }
    return base;
}

void train_all(TrainState& state, const AggregationPolicy& policy, const SimEnv& env,
               int round) {
    StageRecorder stage(*state.ledger);
    for (int d = 0; d < env.topo.num_devices(); ++d) {
        train_local(state.device_models[static_cast<std::size_t>(d)],
                    env.devices[static_cast<std::size_t>(d)], policy.e_local,
                    env.learning_rate, env.batch_size);
        const Node& node = env.topo.node(d);
        const double seconds = policy.e_local * node.compute_time_per_epoch_s;
        const double joules = seconds * node.compute_power_w;
        const std::size_t idx = state.ledger->record_compute(
            strategy_label(state.strategy), round, d, seconds, joules);
        const int chain = stage.new_chain();
        stage.add(chain, idx, seconds);
    }
    stage.close();
}

double shard_weight(const SimEnv& env, int device) {
    return static_cast<double>(env.devices[static_cast<std::size_t>(device)].train.size());
}

int correct_count(const ModularModel& model, const Dataset& dataset, int task) {
    if (dataset.size() == 0) return 0;
    const auto probs = forward(model, dataset, task);
    const int C = model.spec.num_classes;
    int correct = 0;
    for (int r = 0; r < dataset.size(); ++r) {
        const double* pr = probs.data() + static_cast<std::size_t>(r) * C;
        int best = 0;
        for (int c = 1; c < C; ++c) {
            if (pr[c] > pr[best]) best = c;
        }
        if (best == dataset.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    return correct;
}

} // namespace

const char* strategy_label(Strategy strategy) {
    switch (strategy) {
    case Strategy::Star: return "star";
    case Strategy::Hier: return "hier";
    case Strategy::HierD2D: return "hier-d2d";
    }
    return "?";
}

std::optional<Strategy> parse_strategy(const std::string& name) {
    if (name == "star") return Strategy::Star;
    if (name == "hier") return Strategy::Hier;
    if (name == "hier-d2d") return Strategy::HierD2D;
    return std::nullopt;
}

std::vector<std::string> strategy_names() {
    return {"star", "hier", "hier-d2d"};
}

void validate_policy(const AggregationPolicy& policy) {
    if (policy.e_local < 1) throw ConfigError("policy.e_local must be >= 1");
    if (policy.e_agg < 1) throw ConfigError("policy.e_agg must be >= 1");
    for (const auto& [kind, override_] : policy.module_overrides) {
        if (override_.period < 1) {
            throw ConfigError("policy.module_overrides[" + kind_name(kind) +
                              "].period must be >= 1");
        }
    }
}

std::vector<std::map<int, std::vector<int>>> all_cluster_paths(const NetworkTopology& topo) {
    std::vector<std::map<int, std::vector<int>>> paths;
    paths.reserve(topo.clusters.size());
    for (const auto& cluster : topo.clusters) {
        std::map<int, std::vector<int>> by_member;
        for (int m : cluster.members) {
            by_member[m] = m == cluster.head ? std::vector<int>{cluster.head}
                                             : shortest_path(cluster, m, cluster.head);
        }
        paths.push_back(std::move(by_member));
    }
    return paths;
}

TrainState init_state(const SimEnv& env, Strategy strategy, std::uint64_t model_seed,
                      TransferLedger& ledger) {
    TrainState state;
    state.strategy = strategy;
    state.ledger = &ledger;
    const ModularModel shared = init_model(env.spec, model_seed);
    state.device_models.assign(static_cast<std::size_t>(env.topo.num_devices()), shared);
    return state;
}

std::vector<double> fedavg(const std::vector<std::vector<double>>& values,
                           const std::vector<double>& weights) {
    if (values.empty()) throw AggregationError("fedavg: no updates");
    if (weights.size() != values.size()) {
        throw AggregationError("fedavg: weight count does not match update count");
    }
    const std::size_t n = values.front().size();
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw AggregationError("fedavg: negative weight");
        total += w;
    }
    if (total <= 0.0) throw AggregationError("fedavg: zero total weight");

    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k].size() != n) throw AggregationError("fedavg: update length mismatch");
        const double w = weights[k];
        for (std::size_t i = 0; i < n; ++i) out[i] += w * values[k][i];
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<BlockValues> fedavg_block_sets(const std::vector<std::vector<BlockValues>>& updates,
                                           const std::vector<double>& weights) {
    if (updates.empty()) throw AggregationError("fedavg: no updates");
    const std::size_t blocks = updates.front().size();
    std::vector<BlockValues> out;
    out.reserve(blocks);
    for (std::size_t j = 0; j < blocks; ++j) {
        const ModuleKind& kind = updates.front()[j].first;
        std::vector<std::vector<double>> values;
        values.reserve(updates.size());
        for (const auto& update : updates) {
            if (update.size() != blocks || !(update[j].first == kind)) {
                throw AggregationError("fedavg: misaligned block sets");
            }
            values.push_back(update[j].second);
        }
        out.emplace_back(kind, fedavg(values, weights));
    }
    return out;
}

void train_local(ModularModel& model, const DeviceData& data, int e_local, double lr,
                 int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const int n = data.train.size();
    if (n == 0) return;
    for (int epoch = 0; epoch < e_local; ++epoch) {
        for (int start = 0; start < n; start += batch_size) {
            const int end = std::min(start + batch_size, n);
            std::vector<int> idx(static_cast<std::size_t>(end - start));
            std::iota(idx.begin(), idx.end(), start);
            const Dataset batch = subset(data.train, idx);
            auto [loss, grads] = loss_and_grads(model, batch, data.task);
            (void)loss;
            sgd_step(model, grads, lr);
        }
    }
}

void run_round_star(TrainState& state, const AggregationPolicy& policy, const SimEnv& env) {
    if (policy.strategy != Strategy::Star || state.strategy != Strategy::Star) {
        throw ConfigError("run_round_star: strategy is not star");
    }
    TransferLedger& ledger = *state.ledger;
    const int round = state.round + 1;
    const int cloud = env.topo.cloud_id();

    train_all(state, policy, env, round);

    // Star pays no attention to module overrides; the whole trainable payload
    // moves every round.
    const std::uint64_t bytes =
        payload_bytes(state.device_models.front(), select_trainable());

    StageRecorder ascent(ledger);
    for (int d = 0; d < env.topo.num_devices(); ++d) {
        const int parent = env.topo.node(d).parent;
        const int chain = ascent.new_chain();
        auto up = log_transfer(ledger, env, state.strategy, round, d, parent,
                               LinkKind::Uplink, bytes);
        ascent.add(chain, up.index, up.latency_s);
        auto relay = log_transfer(ledger, env, state.strategy, round, parent, cloud,
                                  LinkKind::Backhaul, bytes);
        ascent.add(chain, relay.index, relay.latency_s);
    }
    ascent.close();

    std::vector<std::vector<BlockValues>> updates;
    std::vector<double> weights;
    for (int d = 0; d < env.topo.num_devices(); ++d) {
        updates.push_back(extract_blocks(state.device_models[static_cast<std::size_t>(d)],
                                         select_trainable()));
        weights.push_back(shard_weight(env, d));
    }
    const auto aggregate = fedavg_block_sets(updates, weights);
    state.cloud_blocks = aggregate;

    StageRecorder descent(ledger);
    for (int d = 0; d < env.topo.num_devices(); ++d) {
        const int parent = env.topo.node(d).parent;
        const int chain = descent.new_chain();
        auto relay = log_transfer(ledger, env, state.strategy, round, cloud, parent,
                                  LinkKind::Backhaul, bytes);
        descent.add(chain, relay.index, relay.latency_s);
        auto down = log_transfer(ledger, env, state.strategy, round, parent, d,
                                 LinkKind::Downlink, bytes);
        descent.add(chain, down.index, down.latency_s);
    }
    descent.close();

    for (auto& model : state.device_models) load_blocks(model, aggregate);
    state.round = round;
}

void run_round_hier(TrainState& state, const AggregationPolicy& policy, const SimEnv& env) {
    if (policy.strategy != Strategy::Hier || state.strategy != Strategy::Hier) {
        throw ConfigError("run_round_hier: strategy is not hier");
    }
    TransferLedger& ledger = *state.ledger;
    const int round = state.round + 1;
    const int cloud = env.topo.cloud_id();
    const bool cloud_round = !policy.edge_only && round % policy.e_agg == 0;

    train_all(state, policy, env, round);

    const BlockSelector part = [&policy, round](const ParamBlock& b) {
        return b.trainable && participates(policy, b.kind, round);
    };
    const auto sample = extract_blocks(state.device_models.front(), part);
    if (sample.empty()) {
        // Every trainable block sat this round out; purely local training.
        state.round = round;
        return;
    }
    const std::uint64_t bytes_all = payload_bytes(state.device_models.front(), part);

    StageRecorder uplink(ledger);
    for (int d = 0; d < env.topo.num_devices(); ++d) {
        const int chain = uplink.new_chain();
        auto up = log_transfer(ledger, env, state.strategy, round, d,
                               env.topo.node(d).parent, LinkKind::Uplink, bytes_all);
        uplink.add(chain, up.index, up.latency_s);
    }
    uplink.close();

    const int first_server = env.topo.num_devices();
    const int num_servers = static_cast<int>(env.topo.nodes.size()) - first_server - 1;
    std::vector<int> active_servers;
    std::map<int, std::vector<BlockValues>> server_agg;
    std::map<int, double> server_weight;
    for (int s = first_server; s < first_server + num_servers; ++s) {
        const auto members = env.topo.devices_of_server(s);
        if (members.empty()) continue;
        std::vector<std::vector<BlockValues>> updates;
        std::vector<double> weights;
        for (int m : members) {
            updates.push_back(
                extract_blocks(state.device_models[static_cast<std::size_t>(m)], part));
            weights.push_back(shard_weight(env, m));
        }
        active_servers.push_back(s);
        server_agg[s] = fedavg_block_sets(updates, weights);
        server_weight[s] = std::accumulate(weights.begin(), weights.end(), 0.0);
    }

    if (cloud_round) {
        const auto cloud_sample = filter_ascending(sample, policy);
        if (!cloud_sample.empty()) {
            const BlockSelector cloud_sel = [&policy, &part](const ParamBlock& b) {
                return part(b) && ascends(policy, b.kind);
            };
            const std::uint64_t bytes_cloud =
                payload_bytes(state.device_models.front(), cloud_sel);

            StageRecorder backhaul_up(ledger);
            for (int s : active_servers) {
                const int chain = backhaul_up.new_chain();
                auto up = log_transfer(ledger, env, state.strategy, round, s, cloud,
                                       LinkKind::Backhaul, bytes_cloud);
                backhaul_up.add(chain, up.index, up.latency_s);
            }
            backhaul_up.close();

            std::vector<std::vector<BlockValues>> updates;
            std::vector<double> weights;
            for (int s : active_servers) {
                updates.push_back(filter_ascending(server_agg[s], policy));
                weights.push_back(server_weight[s]);
            }
            const auto cloud_agg = fedavg_block_sets(updates, weights);
            upsert_blocks(state.cloud_blocks, cloud_agg);

            StageRecorder backhaul_down(ledger);
            for (int s : active_servers) {
                const int chain = backhaul_down.new_chain();
                auto down = log_transfer(ledger, env, state.strategy, round, cloud, s,
                                         LinkKind::Backhaul, bytes_cloud);
                backhaul_down.add(chain, down.index, down.latency_s);
            }
            backhaul_down.close();

            for (int s : active_servers) {
                server_agg[s] = merged_view(std::move(server_agg[s]), cloud_agg);
            }
        }
    }

    StageRecorder downlink(ledger);
    for (int s : active_servers) {
        for (int m : env.topo.devices_of_server(s)) {
            const int chain = downlink.new_chain();
            auto down = log_transfer(ledger, env, state.strategy, round, s, m,
                                     LinkKind::Downlink, bytes_all);
            downlink.add(chain, down.index, down.latency_s);
        }
    }
    downlink.close();

    for (int s : active_servers) {
        for (int m : env.topo.devices_of_server(s)) {
            load_blocks(state.device_models[static_cast<std::size_t>(m)], server_agg[s]);
        }
        state.edge_aggregates[s] = std::move(server_agg[s]);
    }
    state.round = round;
}

void run_round_hier_d2d(TrainState& state, const AggregationPolicy& policy, const SimEnv& env) {
    if (policy.strategy != Strategy::HierD2D || state.strategy != Strategy::HierD2D) {
        throw ConfigError("run_round_hier_d2d: strategy is not hier-d2d");
    }
    TransferLedger& ledger = *state.ledger;
    const int round = state.round + 1;
    const int cloud = env.topo.cloud_id();
    const bool cloud_round = !policy.edge_only && round % policy.e_agg == 0;

    std::vector<std::map<int, std::vector<int>>> local_paths;
    const auto* paths = &env.cluster_paths;
    if (paths->size() != env.topo.clusters.size()) {
        local_paths = all_cluster_paths(env.topo);
        paths = &local_paths;
    }

    train_all(state, policy, env, round);

    const BlockSelector part = [&policy, round](const ParamBlock& b) {
        return b.trainable && participates(policy, b.kind, round);
    };
    const auto sample = extract_blocks(state.device_models.front(), part);
    if (sample.empty()) {
        state.round = round;
        return;
    }
    const std::uint64_t bytes_all = payload_bytes(state.device_models.front(), part);

    // Members relay to the head hop by hop; a chain per member, full payload
    // on every hop (store-and-forward).
    StageRecorder collect(ledger);
    for (const auto& cluster : env.topo.clusters) {
        const auto& by_member = (*paths)[static_cast<std::size_t>(cluster.id)];
        for (int m : cluster.members) {
            if (m == cluster.head) continue;
            const auto& path = by_member.at(m);
            const int chain = collect.new_chain();
            for (std::size_t i = 0; i + 1 < path.size(); ++i) {
                auto hop = log_transfer(ledger, env, state.strategy, round, path[i],
                                        path[i + 1], LinkKind::D2D, bytes_all);
                collect.add(chain, hop.index, hop.latency_s);
            }
        }
    }
    collect.close();

    std::map<int, std::vector<BlockValues>> cluster_agg;
    std::map<int, double> cluster_weight;
    for (const auto& cluster : env.topo.clusters) {
        std::vector<std::vector<BlockValues>> updates;
        std::vector<double> weights;
        for (int m : cluster.members) {
            updates.push_back(
                extract_blocks(state.device_models[static_cast<std::size_t>(m)], part));
            weights.push_back(shard_weight(env, m));
        }
        cluster_agg[cluster.id] = fedavg_block_sets(updates, weights);
        cluster_weight[cluster.id] = std::accumulate(weights.begin(), weights.end(), 0.0);
    }

    if (cloud_round) {
        const auto cloud_sample = filter_ascending(sample, policy);
        if (!cloud_sample.empty()) {
            const BlockSelector cloud_sel = [&policy, &part](const ParamBlock& b) {
                return part(b) && ascends(policy, b.kind);
            };
            const std::uint64_t bytes_cloud =
                payload_bytes(state.device_models.front(), cloud_sel);

            // Heads reach the cloud through their edge server, a pure relay.
            StageRecorder ascent(ledger);
            for (const auto& cluster : env.topo.clusters) {
                const int chain = ascent.new_chain();
                auto up = log_transfer(ledger, env, state.strategy, round, cluster.head,
                                       cluster.edge_server, LinkKind::Uplink, bytes_cloud);
                ascent.add(chain, up.index, up.latency_s);
                auto relay = log_transfer(ledger, env, state.strategy, round,
                                          cluster.edge_server, cloud, LinkKind::Backhaul,
                                          bytes_cloud);
                ascent.add(chain, relay.index, relay.latency_s);
            }
            ascent.close();

            std::vector<std::vector<BlockValues>> updates;
            std::vector<double> weights;
            for (const auto& cluster : env.topo.clusters) {
                updates.push_back(filter_ascending(cluster_agg[cluster.id], policy));
                weights.push_back(cluster_weight[cluster.id]);
            }
            const auto cloud_agg = fedavg_block_sets(updates, weights);
            upsert_blocks(state.cloud_blocks, cloud_agg);

            StageRecorder descent(ledger);
            for (const auto& cluster : env.topo.clusters) {
                const int chain = descent.new_chain();
                auto relay = log_transfer(ledger, env, state.strategy, round, cloud,
                                          cluster.edge_server, LinkKind::Backhaul,
                                          bytes_cloud);
                descent.add(chain, relay.index, relay.latency_s);
                auto down = log_transfer(ledger, env, state.strategy, round,
                                         cluster.edge_server, cluster.head,
                                         LinkKind::Downlink, bytes_cloud);
                descent.add(chain, down.index, down.latency_s);
            }
            descent.close();

            for (const auto& cluster : env.topo.clusters) {
                cluster_agg[cluster.id] =
                    merged_view(std::move(cluster_agg[cluster.id]), cloud_agg);
            }
        }
    }

    // Head broadcast retraces each member's path in reverse.
    StageRecorder broadcast(ledger);
    for (const auto& cluster : env.topo.clusters) {
        const auto& by_member = (*paths)[static_cast<std::size_t>(cluster.id)];
        for (int m : cluster.members) {
            if (m == cluster.head) continue;
            const auto& path = by_member.at(m);
            const int chain = broadcast.new_chain();
            for (std::size_t i = path.size() - 1; i > 0; --i) {
                auto hop = log_transfer(ledger, env, state.strategy, round, path[i],
                                        path[i - 1], LinkKind::D2D, bytes_all);
                broadcast.add(chain, hop.index, hop.latency_s);
            }
        }
    }
    broadcast.close();

    for (const auto& cluster : env.topo.clusters) {
        for (int m : cluster.members) {
            load_blocks(state.device_models[static_cast<std::size_t>(m)],
                        cluster_agg[cluster.id]);
        }
        state.cluster_aggregates[cluster.id] = std::move(cluster_agg[cluster.id]);
    }
    state.round = round;
}

void run_round(TrainState& state, const AggregationPolicy& policy, const SimEnv& env) {
    switch (policy.strategy) {
    case Strategy::Star: run_round_star(state, policy, env); return;
    case Strategy::Hier: run_round_hier(state, policy, env); return;
    case Strategy::HierD2D: run_round_hier_d2d(state, policy, env); return;
    }
    throw ConfigError("run_round: unknown strategy");
}

double evaluate_accuracy(const TrainState& state, const SimEnv& env) {
    const auto& clusters = env.topo.clusters;
    if (state.strategy == Strategy::Star) {
        const ModularModel& model = state.device_models.front();
        int correct = 0;
        int total = 0;
        for (const auto& cluster : clusters) {
            const auto& shard = env.cluster_test[static_cast<std::size_t>(cluster.id)];
            correct += correct_count(model, shard,
                                     env.cluster_task[static_cast<std::size_t>(cluster.id)]);
            total += shard.size();
        }
        return total == 0 ? 0.0 : static_cast<double>(correct) / total;
    }
    double sum = 0.0;
    int counted = 0;
    for (const auto& cluster : clusters) {
        const auto& shard = env.cluster_test[static_cast<std::size_t>(cluster.id)];
        if (shard.size() == 0) continue;
        const ModularModel& model =
            state.device_models[static_cast<std::size_t>(cluster.members.front())];
        sum += static_cast<double>(
                   correct_count(model, shard,
                                 env.cluster_task[static_cast<std::size_t>(cluster.id)])) /
               shard.size();
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / counted;
}

} // namespace fedfog
