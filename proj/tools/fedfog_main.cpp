#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfog/config.hpp"
#include "fedfog/errors.hpp"
#include "fedfog/runner.hpp"

namespace {

std::string resolve_out_dir(const std::string& flag, const fedfog::ExperimentConfig& config) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FEDFOG_OUT"); env && *env) return env;
    return config.output_dir;
}

void apply_strategies(fedfog::ExperimentConfig& config, const std::string& csv) {
    if (csv.empty()) return;
    std::vector<fedfog::Strategy> chosen;
    std::istringstream stream(csv);
    std::string name;
    while (std::getline(stream, name, ',')) {
        const auto strategy = fedfog::parse_strategy(name);
        if (!strategy) {
            std::string valid;
            for (const auto& n : fedfog::strategy_names()) {
                if (!valid.empty()) valid += ", ";
                valid += n;
            }
            throw fedfog::ConfigError("unknown strategy '" + name + "' (valid: " + valid + ")");
        }
        chosen.push_back(*strategy);
    }
    if (chosen.empty()) throw fedfog::ConfigError("--strategies selected nothing");
    config.strategies = chosen;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical fog federated-learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_flag;
    std::string strategies_csv;
    std::int64_t seed_override = -1;
    bool dump_topology = false;

    CLI::App* run = app.add_subcommand("run", "Run the configured experiment and write reports");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", out_flag, "Output directory (overrides FEDFOG_OUT and config)");
    run->add_option("--strategies", strategies_csv, "Comma-separated subset of strategies");
    run->add_option("--seed-override", seed_override, "Run only this seed");
    run->add_flag("--dump-topology", dump_topology, "Also write per-seed topology listings");

    CLI::App* validate =
        app.add_subcommand("validate", "Parse and validate a config, print it resolved");
    validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

    CLI::App* report =
        app.add_subcommand("report", "Re-aggregate existing per-seed outputs");
    report->add_option("--config", config_path, "Experiment config (JSON)")->required();
    report->add_option("--out", out_flag, "Output directory (overrides FEDFOG_OUT and config)");

    CLI11_PARSE(app, argc, argv);

    try {
        fedfog::ExperimentConfig config = fedfog::load_config(config_path);
        if (validate->parsed()) {
            std::cout << fedfog::resolved_json(config).dump(2) << '\n';
            return 0;
        }
        if (run->parsed()) {
            apply_strategies(config, strategies_csv);
            if (seed_override >= 0) {
                config.seeds = {static_cast<std::uint64_t>(seed_override)};
            }
            fedfog::run_all(config, resolve_out_dir(out_flag, config), dump_topology);
            return 0;
        }
        fedfog::reaggregate(config, resolve_out_dir(out_flag, config));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
