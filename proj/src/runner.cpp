#include "fedfog/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fedfog/data.hpp"
#include "fedfog/errors.hpp"
#include "fedfog/rng.hpp"

namespace fedfog {

namespace {

namespace fs = std::filesystem;

// Stream salts; every random decision hangs off (seed, salt [, index]).
constexpr std::uint64_t kTopoSalt = 0x746f706fULL;     // "topo"
constexpr std::uint64_t kDataSalt = 0x64617461ULL;     // "data"
constexpr std::uint64_t kShardSalt = 0x73686172ULL;    // "shar"
constexpr std::uint64_t kSplitSalt = 0x73706c74ULL;    // "splt"
constexpr std::uint64_t kTestSalt = 0x74657374ULL;     // "test"
constexpr std::uint64_t kModelSalt = 0x6d6f646cULL;    // "modl"

// Stratified deal of a test set into one slice per cluster: per class,
// shuffle that class's rows and hand them out round-robin, so every slice
// reflects the task's full class mix.
std::vector<std::vector<int>> deal_test_slices(const Dataset& test_ds, int num_slices,
                                               std::uint64_t seed) {
    std::vector<std::vector<int>> slices(static_cast<std::size_t>(num_slices));
    Rng rng(seed);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(test_ds.classes));
    for (int i = 0; i < test_ds.size(); ++i) {
        by_class[static_cast<std::size_t>(test_ds.labels[static_cast<std::size_t>(i)])]
            .push_back(i);
    }
    for (auto& group : by_class) {
        for (std::size_t i = group.size(); i > 1; --i) {
            std::swap(group[i - 1], group[rng.index(i)]);
        }
        for (std::size_t i = 0; i < group.size(); ++i) {
            slices[i % static_cast<std::size_t>(num_slices)].push_back(group[i]);
        }
    }
    for (auto& slice : slices) std::sort(slice.begin(), slice.end());
    return slices;
}

std::map<std::string, std::string> table_notes(const ExperimentConfig& config) {
    const std::string cloud =
        config.policy.edge_only
            ? "never"
            : (config.policy.e_agg == 1 ? "every round"
                                        : "every " + std::to_string(config.policy.e_agg) +
                                              " rounds");
    return {
        {"star", "cloud every round"},
        {"hier", "edge every round, cloud " + cloud},
        {"hier-d2d", "cluster head every round, cloud " + cloud},
    };
}

} // namespace

SimEnv build_env(const ExperimentConfig& config, std::uint64_t seed) {
    SimEnv env;
    env.chan = config.channel;
    env.spec = config.model;
    env.learning_rate = config.learning_rate;
    env.batch_size = config.batch_size;
    env.topo = generate_topology(config.topology, mix_seed(seed, kTopoSalt));
    env.cluster_paths = all_cluster_paths(env.topo);

    const int num_tasks = config.data.num_tasks;
    env.cluster_task.resize(env.topo.clusters.size());
    for (const auto& cluster : env.topo.clusters) {
        env.cluster_task[static_cast<std::size_t>(cluster.id)] = cluster.id % num_tasks;
    }

    env.devices.resize(static_cast<std::size_t>(env.topo.num_devices()));
    env.cluster_test.resize(env.topo.clusters.size());
    for (int t = 0; t < num_tasks; ++t) {
        // Devices and clusters solving task t, ascending id.
        std::vector<int> task_devices;
        std::vector<int> task_clusters;
        for (const auto& cluster : env.topo.clusters) {
            if (env.cluster_task[static_cast<std::size_t>(cluster.id)] != t) continue;
            task_clusters.push_back(cluster.id);
            task_devices.insert(task_devices.end(), cluster.members.begin(),
                                cluster.members.end());
        }
        std::sort(task_devices.begin(), task_devices.end());
        if (task_devices.empty()) {
            throw DataError("task " + std::to_string(t) + " has no devices; reduce num_tasks");
        }

        const Dataset dataset =
            generate_synthetic(config.data.classes, config.data.dim, config.data.n_per_class,
                               config.data.separation, mix_seed(seed, kDataSalt + t));

        // Hold the test set out at task level, then spread only the training
        // rows non-iid across devices. Each cluster is scored on its own
        // slice of the held-out set, which covers the task's full class mix
        // rather than mirroring the cluster's skew.
        std::vector<int> all_idx(static_cast<std::size_t>(dataset.size()));
        std::iota(all_idx.begin(), all_idx.end(), 0);
        const auto [train_idx, test_idx] =
            split_indices(dataset, all_idx, config.data.test_fraction,
                          mix_seed(seed, kSplitSalt + t));
        const Dataset train_ds = subset(dataset, train_idx);
        const Dataset test_ds = subset(dataset, test_idx);

        const auto shards =
            dirichlet_partition(train_ds, static_cast<int>(task_devices.size()),
                                config.data.alpha, mix_seed(seed, kShardSalt + t));
        for (std::size_t i = 0; i < task_devices.size(); ++i) {
            auto& slot = env.devices[static_cast<std::size_t>(task_devices[i])];
            slot.train = subset(train_ds, shards[i].indices);
            slot.task = t;
        }

        const auto slices =
            deal_test_slices(test_ds, static_cast<int>(task_clusters.size()),
                             mix_seed(seed, kTestSalt + t));
        for (std::size_t i = 0; i < task_clusters.size(); ++i) {
            env.cluster_test[static_cast<std::size_t>(task_clusters[i])] =
                subset(test_ds, slices[i]);
        }
    }
    return env;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
    const SimEnv env = build_env(config, seed);
    const std::uint64_t model_seed = mix_seed(seed, kModelSalt);

    ExperimentResult result;
    AccuracyTable accuracies;
    for (Strategy strategy : config.strategies) {
        AggregationPolicy policy = config.policy;
        policy.strategy = strategy;
        TrainState state = init_state(env, strategy, model_seed, result.ledger);
        for (int r = 1; r <= config.rounds; ++r) {
            try {
                run_round(state, policy, env);
            } catch (const std::exception& e) {
                throw std::runtime_error(std::string("strategy ") + strategy_label(strategy) +
                                         " round " + std::to_string(r) + ": " + e.what());
            }
            accuracies[{strategy_label(strategy), r}] = evaluate_accuracy(state, env);
        }
    }
    result.reports = summarize(result.ledger, accuracies);
    return result;
}

std::vector<RoundReport> mean_reports(const std::vector<std::vector<RoundReport>>& per_seed) {
    if (per_seed.empty()) return {};
    const auto& first = per_seed.front();
    std::vector<RoundReport> out = first;
    for (std::size_t s = 1; s < per_seed.size(); ++s) {
        const auto& rep = per_seed[s];
        if (rep.size() != first.size()) {
            throw ReportError("mean_reports: seed outputs differ in shape");
        }
        for (std::size_t i = 0; i < rep.size(); ++i) {
            if (rep[i].strategy != first[i].strategy || rep[i].round != first[i].round) {
                throw ReportError("mean_reports: seed outputs differ in structure");
            }
            out[i].round_latency_s += rep[i].round_latency_s;
            out[i].round_energy_j += rep[i].round_energy_j;
            out[i].cum_latency_s += rep[i].cum_latency_s;
            out[i].cum_energy_j += rep[i].cum_energy_j;
            out[i].accuracy += rep[i].accuracy;
        }
    }
    const auto n = static_cast<double>(per_seed.size());
    for (auto& r : out) {
        r.round_latency_s /= n;
        r.round_energy_j /= n;
        r.cum_latency_s /= n;
        r.cum_energy_j /= n;
        r.accuracy /= n;
    }
    return out;
}

std::vector<RoundReport> read_report_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty report " + path);
    if (line != "strategy,round,cum_latency_s,cum_energy_j,accuracy") {
        throw IoError("unexpected header in " + path);
    }
    std::vector<RoundReport> reports;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        RoundReport r;
        std::getline(row, r.strategy, ',');
        std::getline(row, field, ',');
        r.round = std::stoi(field);
        std::getline(row, field, ',');
        r.cum_latency_s = std::stod(field);
        std::getline(row, field, ',');
        r.cum_energy_j = std::stod(field);
        std::getline(row, field, ',');
        r.accuracy = std::stod(field);
        if (!row && row.rdstate() != std::ios::eofbit) {
            throw IoError("malformed row in " + path + ": " + line);
        }
        reports.push_back(std::move(r));
    }
    return reports;
}

namespace {

void write_aggregate(const ExperimentConfig& config, const fs::path& out,
                     const std::vector<std::vector<RoundReport>>& per_seed,
                     std::vector<fs::path>& written) {
    const auto mean = mean_reports(per_seed);
    written.push_back(out / "report.csv");
    emit_csv(mean, (out / "report.csv").string());
    written.push_back(out / "table.md");
    emit_table(mean, table_notes(config), (out / "table.md").string());
    written.push_back(out / "manifest.json");
    std::ofstream manifest(out / "manifest.json", std::ios::binary);
    if (!manifest) throw IoError("cannot open " + (out / "manifest.json").string());
    manifest << resolved_json(config).dump(2) << '\n';
}

} // namespace

void run_all(const ExperimentConfig& config, const std::string& out_dir, bool dump_topology) {
    const fs::path out(out_dir);
    std::vector<fs::path> created_dirs;
    std::vector<fs::path> written;
    auto ensure_dir = [&](const fs::path& p) {
        if (!fs::exists(p)) {
            fs::create_directories(p);
            created_dirs.push_back(p);
        }
    };

    try {
        ensure_dir(out);
        std::vector<std::vector<RoundReport>> per_seed;
        std::vector<TransferLedger> ledgers;
        for (std::uint64_t seed : config.seeds) {
            const fs::path seed_dir = out / ("seed_" + std::to_string(seed));
            ensure_dir(seed_dir);
            auto result = run_experiment(config, seed);

            written.push_back(seed_dir / "report.csv");
            emit_csv(result.reports, (seed_dir / "report.csv").string());
            written.push_back(seed_dir / "table.md");
            emit_table(result.reports, table_notes(config), (seed_dir / "table.md").string());
            written.push_back(seed_dir / "ledger.csv");
            {
                std::ofstream ledger_out(seed_dir / "ledger.csv", std::ios::binary);
                if (!ledger_out) {
                    throw IoError("cannot open " + (seed_dir / "ledger.csv").string());
                }
                emit_ledger_csv(result.ledger, ledger_out);
            }
            written.push_back(seed_dir / "manifest.json");
            {
                std::ofstream manifest(seed_dir / "manifest.json", std::ios::binary);
                if (!manifest) {
                    throw IoError("cannot open " + (seed_dir / "manifest.json").string());
                }
                auto j = resolved_json(config);
                j["seed"] = seed;
                manifest << j.dump(2) << '\n';
            }
            if (dump_topology) {
                written.push_back(seed_dir / "topology.txt");
                std::ofstream topo(seed_dir / "topology.txt", std::ios::binary);
                topo << topology_text(build_env(config, seed).topo);
            }

            for (const auto& r : result.reports) {
                if (r.round == config.rounds) {
                    std::cout << "seed " << seed << ' ' << r.strategy << ": round " << r.round
                              << " accuracy " << format_real(r.accuracy) << " latency "
                              << format_real(r.cum_latency_s) << "s energy "
                              << format_real(r.cum_energy_j) << "J\n";
                }
            }
            per_seed.push_back(std::move(result.reports));
            ledgers.push_back(std::move(result.ledger));
        }

        write_aggregate(config, out, per_seed, written);
        written.push_back(out / "ledger.csv");
        std::ofstream all_ledgers(out / "ledger.csv", std::ios::binary);
        if (!all_ledgers) throw IoError("cannot open " + (out / "ledger.csv").string());
        for (std::size_t i = 0; i < ledgers.size(); ++i) {
            emit_ledger_csv(ledgers[i], all_ledgers, config.seeds[i], i == 0);
        }
    } catch (...) {
        std::error_code ec;
        for (auto it = written.rbegin(); it != written.rend(); ++it) fs::remove(*it, ec);
        for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) {
            fs::remove(*it, ec); // only removes now-empty directories
        }
        throw;
    }
}

void reaggregate(const ExperimentConfig& config, const std::string& out_dir) {
    const fs::path out(out_dir);
    std::vector<std::vector<RoundReport>> per_seed;
    for (std::uint64_t seed : config.seeds) {
        const fs::path report = out / ("seed_" + std::to_string(seed)) / "report.csv";
        if (!fs::exists(report)) {
            throw IoError("missing per-seed report " + report.string() + "; run first");
        }
        per_seed.push_back(read_report_csv(report.string()));
    }
    std::vector<fs::path> written;
    write_aggregate(config, out, per_seed, written);
}

} // namespace fedfog
