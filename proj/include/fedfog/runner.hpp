#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfog/config.hpp"
#include "fedfog/metrics.hpp"
#include "fedfog/protocol.hpp"

namespace fedfog {

/// Deterministic in (config, seed): topology, per-task datasets, non-iid
/// shards and train/test splits, evaluation shards, relay paths.
SimEnv build_env(const ExperimentConfig& config, std::uint64_t seed);

struct ExperimentResult {
    std::vector<RoundReport> reports;
    TransferLedger ledger;
};

/// Runs every configured strategy from identical initial conditions and
/// returns the merged report plus the full event ledger.
ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed);

/// Pointwise mean across seeds; all inputs must share the same
/// (strategy, round) structure.
std::vector<RoundReport> mean_reports(const std::vector<std::vector<RoundReport>>& per_seed);

std::vector<RoundReport> read_report_csv(const std::string& path);

/// Executes all seeds, writes per-seed outputs under <out_dir>/seed_<s>/ and
/// aggregated report.csv / table.md / ledger.csv / manifest.json at the top.
/// Partial outputs are removed if anything fails.
void run_all(const ExperimentConfig& config, const std::string& out_dir, bool dump_topology);

/// Rebuilds the aggregated outputs from existing per-seed directories.
void reaggregate(const ExperimentConfig& config, const std::string& out_dir);

} // namespace fedfog
