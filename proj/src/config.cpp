#include "fedfog/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedfog/errors.hpp"

namespace fedfog {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
    for (const auto& item : j.items()) {
        if (allowed.find(item.key()) == allowed.end()) {
            throw ConfigError("unknown key " + path + "." + item.key());
        }
    }
}

const json* find(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double get_number(const json& j, const std::string& path, const std::string& key,
                  double fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(path + "." + key + " must be a number");
    return v->get<double>();
}

int get_int(const json& j, const std::string& path, const std::string& key, int fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(path + "." + key + " must be an integer");
    return v->get<int>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const std::string& key,
                      std::uint64_t fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && v->get<long long>() < 0)) {
        throw ConfigError(path + "." + key + " must be a non-negative integer");
    }
    return v->get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& path, const std::string& key, bool fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(path + "." + key + " must be a boolean");
    return v->get<bool>();
}

std::string get_string(const json& j, const std::string& path, const std::string& key,
                       const std::string& fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(path + "." + key + " must be a string");
    return v->get<std::string>();
}

TierDefaults parse_tier(const json& j, const std::string& path, const TierDefaults& base) {
    reject_unknown(j, path,
                   {"tx_power_uplink_w", "tx_power_d2d_w", "compute_time_per_epoch_s",
                    "compute_power_w"});
    TierDefaults out = base;
    out.tx_power_uplink_w = get_number(j, path, "tx_power_uplink_w", base.tx_power_uplink_w);
    out.tx_power_d2d_w = get_number(j, path, "tx_power_d2d_w", base.tx_power_d2d_w);
    out.compute_time_per_epoch_s =
        get_number(j, path, "compute_time_per_epoch_s", base.compute_time_per_epoch_s);
    out.compute_power_w = get_number(j, path, "compute_power_w", base.compute_power_w);
    return out;
}

void parse_topology(const json& j, TopologyConfig& out) {
    const std::string path = "topology";
    reject_unknown(j, path,
                   {"num_devices", "num_clusters", "devices_per_cluster", "num_edge_servers",
                    "d2d_radius_m", "area_side_m", "device", "edge_server", "cloud"});
    out.num_devices = get_int(j, path, "num_devices", out.num_devices);
    out.num_clusters = get_int(j, path, "num_clusters", out.num_clusters);
    out.devices_per_cluster = get_int(j, path, "devices_per_cluster", out.devices_per_cluster);
    out.num_edge_servers = get_int(j, path, "num_edge_servers", out.num_edge_servers);
    out.d2d_radius_m = get_number(j, path, "d2d_radius_m", out.d2d_radius_m);
    out.area_side_m = get_number(j, path, "area_side_m", out.area_side_m);
    if (const json* t = find(j, "device")) {
        out.node_defaults.device = parse_tier(*t, path + ".device", out.node_defaults.device);
    }
    if (const json* t = find(j, "edge_server")) {
        out.node_defaults.edge_server =
            parse_tier(*t, path + ".edge_server", out.node_defaults.edge_server);
    }
    if (const json* t = find(j, "cloud")) {
        out.node_defaults.cloud = parse_tier(*t, path + ".cloud", out.node_defaults.cloud);
    }
}

void parse_channel(const json& j, ChannelParams& out) {
    const std::string path = "channel";
    reject_unknown(j, path,
                   {"uplink_bandwidth_hz", "d2d_bandwidth_hz", "noise_dbm_per_hz",
                    "path_loss_exponent", "reference_distance_m", "reference_loss_db",
                    "backhaul_rate_bps", "downlink_rate_bps", "rx_idle_power_w"});
    out.uplink_bandwidth_hz = get_number(j, path, "uplink_bandwidth_hz", out.uplink_bandwidth_hz);
    out.d2d_bandwidth_hz = get_number(j, path, "d2d_bandwidth_hz", out.d2d_bandwidth_hz);
    out.noise_dbm_per_hz = get_number(j, path, "noise_dbm_per_hz", out.noise_dbm_per_hz);
    out.path_loss_exponent = get_number(j, path, "path_loss_exponent", out.path_loss_exponent);
    out.reference_distance_m =
        get_number(j, path, "reference_distance_m", out.reference_distance_m);
    out.reference_loss_db = get_number(j, path, "reference_loss_db", out.reference_loss_db);
    out.backhaul_rate_bps = get_number(j, path, "backhaul_rate_bps", out.backhaul_rate_bps);
    out.downlink_rate_bps = get_number(j, path, "downlink_rate_bps", out.downlink_rate_bps);
    out.rx_idle_power_w = get_number(j, path, "rx_idle_power_w", out.rx_idle_power_w);
}

void parse_model(const json& j, ModelSpec& out) {
    const std::string path = "model";
    reject_unknown(j, path,
                   {"backbone_layers", "backbone_width", "adapter_bottleneck",
                    "full_scale_bottleneck", "trainable_wire_bytes", "frozen_wire_bytes",
                    "head_wire_bytes"});
    out.backbone_layers = get_int(j, path, "backbone_layers", out.backbone_layers);
    out.backbone_width = get_int(j, path, "backbone_width", out.backbone_width);
    out.adapter_bottleneck = get_int(j, path, "adapter_bottleneck", out.adapter_bottleneck);
    out.full_scale_bottleneck =
        get_int(j, path, "full_scale_bottleneck", out.full_scale_bottleneck);
    out.trainable_wire_bytes =
        get_u64(j, path, "trainable_wire_bytes", out.trainable_wire_bytes);
    out.frozen_wire_bytes = get_u64(j, path, "frozen_wire_bytes", out.frozen_wire_bytes);
    out.head_wire_bytes = get_u64(j, path, "head_wire_bytes", out.head_wire_bytes);
}

void parse_data(const json& j, DataParams& out) {
    const std::string path = "data";
    reject_unknown(j, path,
                   {"classes", "dim", "n_per_class", "alpha", "test_fraction", "separation",
                    "num_tasks"});
    out.classes = get_int(j, path, "classes", out.classes);
    out.dim = get_int(j, path, "dim", out.dim);
    out.n_per_class = get_int(j, path, "n_per_class", out.n_per_class);
    out.alpha = get_number(j, path, "alpha", out.alpha);
    out.test_fraction = get_number(j, path, "test_fraction", out.test_fraction);
    out.separation = get_number(j, path, "separation", out.separation);
    out.num_tasks = get_int(j, path, "num_tasks", out.num_tasks);
}

void parse_override_key(const std::string& key, const ExperimentConfig& config,
                        std::vector<ModuleKind>& expanded) {
    // "family" applies to every block of the family, "family.N" to one tag.
    std::string family = key;
    int tag = -1;
    if (auto dot = key.find('.'); dot != std::string::npos) {
        family = key.substr(0, dot);
        const std::string tail = key.substr(dot + 1);
        try {
            std::size_t used = 0;
            tag = std::stoi(tail, &used);
            if (used != tail.size() || tag < 0) throw std::invalid_argument(tail);
        } catch (const std::exception&) {
            throw ConfigError("policy.module_overrides: bad tag in '" + key + "'");
        }
    }
    int tags = 0;
    KindFamily fam;
    if (family == "adapter") {
        fam = KindFamily::Adapter;
        tags = config.model.backbone_layers;
    } else if (family == "task_head") {
        fam = KindFamily::TaskHead;
        tags = config.model.num_tasks;
    } else if (family == "backbone") {
        throw ConfigError("policy.module_overrides: backbone is frozen and never aggregated");
    } else {
        throw ConfigError("policy.module_overrides: unknown module family '" + family +
                          "' (valid: adapter, task_head)");
    }
    if (tag >= 0) {
        if (tag >= tags) {
            throw ConfigError("policy.module_overrides: tag out of range in '" + key + "'");
        }
        expanded.push_back({fam, tag});
    } else {
        for (int t = 0; t < tags; ++t) expanded.push_back({fam, t});
    }
}

void parse_policy(const json& j, ExperimentConfig& config) {
    const std::string path = "policy";
    reject_unknown(j, path, {"e_local", "e_agg", "edge_only", "strategies", "module_overrides"});
    config.policy.e_local = get_int(j, path, "e_local", config.policy.e_local);
    config.policy.e_agg = get_int(j, path, "e_agg", config.policy.e_agg);
    config.policy.edge_only = get_bool(j, path, "edge_only", config.policy.edge_only);

    if (const json* s = find(j, "strategies")) {
        if (!s->is_array() || s->empty()) {
            throw ConfigError("policy.strategies must be a non-empty array");
        }
        config.strategies.clear();
        for (const auto& entry : *s) {
            if (!entry.is_string()) throw ConfigError("policy.strategies entries must be strings");
            const auto name = entry.get<std::string>();
            const auto strategy = parse_strategy(name);
            if (!strategy) {
                std::string valid;
                for (const auto& n : strategy_names()) {
                    if (!valid.empty()) valid += ", ";
                    valid += n;
                }
                throw ConfigError("policy.strategies: unknown strategy '" + name +
                                  "' (valid: " + valid + ")");
            }
            for (Strategy existing : config.strategies) {
                if (existing == *strategy) {
                    throw ConfigError("policy.strategies: duplicate '" + name + "'");
                }
            }
            config.strategies.push_back(*strategy);
        }
    }

    if (const json* o = find(j, "module_overrides")) {
        if (!o->is_object()) throw ConfigError("policy.module_overrides must be an object");
        for (const auto& item : o->items()) {
            const std::string opath = path + ".module_overrides." + item.key();
            if (!item.value().is_object()) throw ConfigError(opath + " must be an object");
            reject_unknown(item.value(), opath, {"depth", "period"});
            ModuleOverride ov;
            const std::string depth = get_string(item.value(), opath, "depth", "cloud");
            if (depth == "edge_only") {
                ov.depth = AggDepth::EdgeOnly;
            } else if (depth == "cloud") {
                ov.depth = AggDepth::Cloud;
            } else {
                throw ConfigError(opath + ".depth must be 'edge_only' or 'cloud'");
            }
            ov.period = get_int(item.value(), opath, "period", 1);
            std::vector<ModuleKind> kinds;
            parse_override_key(item.key(), config, kinds);
            for (const auto& kind : kinds) config.policy.module_overrides[kind] = ov;
        }
    }
}

void require_positive(double value, const std::string& field) {
    if (!(value > 0.0)) throw ConfigError(field + " must be positive");
}

void validate(const ExperimentConfig& c) {
    require_positive(c.topology.num_devices, "topology.num_devices");
    require_positive(c.topology.num_clusters, "topology.num_clusters");
    require_positive(c.topology.num_edge_servers, "topology.num_edge_servers");
    require_positive(c.topology.d2d_radius_m, "topology.d2d_radius_m");
    require_positive(c.topology.area_side_m, "topology.area_side_m");
    require_positive(c.channel.uplink_bandwidth_hz, "channel.uplink_bandwidth_hz");
    require_positive(c.channel.d2d_bandwidth_hz, "channel.d2d_bandwidth_hz");
    require_positive(c.channel.backhaul_rate_bps, "channel.backhaul_rate_bps");
    require_positive(c.channel.downlink_rate_bps, "channel.downlink_rate_bps");
    require_positive(c.channel.reference_distance_m, "channel.reference_distance_m");
    if (c.channel.rx_idle_power_w < 0.0) {
        throw ConfigError("channel.rx_idle_power_w must be >= 0");
    }
    require_positive(c.data.classes, "data.classes");
    require_positive(c.data.dim, "data.dim");
    require_positive(c.data.n_per_class, "data.n_per_class");
    require_positive(c.data.alpha, "data.alpha");
    require_positive(c.data.num_tasks, "data.num_tasks");
    if (c.data.separation < 0.0) throw ConfigError("data.separation must be >= 0");
    if (!(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0)) {
        throw ConfigError("data.test_fraction must lie in (0, 1)");
    }
    validate_policy(c.policy);
    if (c.rounds < 0) throw ConfigError("rounds must be >= 0");
    require_positive(c.learning_rate, "learning_rate");
    require_positive(c.batch_size, "batch_size");
    if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (c.output_dir.empty()) throw ConfigError("output_dir must be non-empty");
    // Model dimensional checks live in init_model; trigger them early so a
    // bad config fails before any run starts.
    (void)init_model(c.model, 0);
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config syntax error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");

    std::vector<std::string> missing;
    if (!find(j, "rounds")) missing.push_back("rounds");
    if (!find(j, "seeds")) missing.push_back("seeds");
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw ConfigError("missing required fields: " + list);
    }

    reject_unknown(j, "config",
                   {"topology", "channel", "model", "data", "policy", "rounds",
                    "learning_rate", "batch_size", "seeds", "output_dir"});

    ExperimentConfig config;
    if (const json* s = find(j, "topology")) parse_topology(*s, config.topology);
    if (const json* s = find(j, "channel")) parse_channel(*s, config.channel);
    if (const json* s = find(j, "model")) parse_model(*s, config.model);
    if (const json* s = find(j, "data")) parse_data(*s, config.data);

    // The model consumes whatever the data section produces.
    config.model.input_dim = config.data.dim;
    config.model.num_classes = config.data.classes;
    config.model.num_tasks = config.data.num_tasks;

    if (const json* s = find(j, "policy")) parse_policy(*s, config);

    config.rounds = get_int(j, "config", "rounds", config.rounds);
    config.learning_rate = get_number(j, "config", "learning_rate", config.learning_rate);
    config.batch_size = get_int(j, "config", "batch_size", config.batch_size);
    config.output_dir = get_string(j, "config", "output_dir", config.output_dir);

    const json& seeds = *find(j, "seeds");
    if (!seeds.is_array() || seeds.empty()) {
        throw ConfigError("seeds must be a non-empty array of non-negative integers");
    }
    for (const auto& s : seeds) {
        if (!s.is_number_integer() || s.get<long long>() < 0) {
            throw ConfigError("seeds must be a non-empty array of non-negative integers");
        }
        config.seeds.push_back(s.get<std::uint64_t>());
    }

    validate(config);
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

nlohmann::json resolved_json(const ExperimentConfig& c) {
    json tier_device = {
        {"tx_power_uplink_w", c.topology.node_defaults.device.tx_power_uplink_w},
        {"tx_power_d2d_w", c.topology.node_defaults.device.tx_power_d2d_w},
        {"compute_time_per_epoch_s", c.topology.node_defaults.device.compute_time_per_epoch_s},
        {"compute_power_w", c.topology.node_defaults.device.compute_power_w},
    };
    json tier_edge = {
        {"tx_power_uplink_w", c.topology.node_defaults.edge_server.tx_power_uplink_w},
        {"tx_power_d2d_w", c.topology.node_defaults.edge_server.tx_power_d2d_w},
        {"compute_time_per_epoch_s",
         c.topology.node_defaults.edge_server.compute_time_per_epoch_s},
        {"compute_power_w", c.topology.node_defaults.edge_server.compute_power_w},
    };
    json tier_cloud = {
        {"tx_power_uplink_w", c.topology.node_defaults.cloud.tx_power_uplink_w},
        {"tx_power_d2d_w", c.topology.node_defaults.cloud.tx_power_d2d_w},
        {"compute_time_per_epoch_s", c.topology.node_defaults.cloud.compute_time_per_epoch_s},
        {"compute_power_w", c.topology.node_defaults.cloud.compute_power_w},
    };
    json overrides = json::object();
    for (const auto& [kind, ov] : c.policy.module_overrides) {
        overrides[kind_name(kind)] = {
            {"depth", ov.depth == AggDepth::EdgeOnly ? "edge_only" : "cloud"},
            {"period", ov.period},
        };
    }
    json strategies = json::array();
    for (Strategy s : c.strategies) strategies.push_back(strategy_label(s));

    return json{
        {"topology",
         {{"num_devices", c.topology.num_devices},
          {"num_clusters", c.topology.num_clusters},
          {"devices_per_cluster", c.topology.devices_per_cluster},
          {"num_edge_servers", c.topology.num_edge_servers},
          {"d2d_radius_m", c.topology.d2d_radius_m},
          {"area_side_m", c.topology.area_side_m},
          {"device", tier_device},
          {"edge_server", tier_edge},
          {"cloud", tier_cloud}}},
        {"channel",
         {{"uplink_bandwidth_hz", c.channel.uplink_bandwidth_hz},
          {"d2d_bandwidth_hz", c.channel.d2d_bandwidth_hz},
          {"noise_dbm_per_hz", c.channel.noise_dbm_per_hz},
          {"path_loss_exponent", c.channel.path_loss_exponent},
          {"reference_distance_m", c.channel.reference_distance_m},
          {"reference_loss_db", c.channel.reference_loss_db},
          {"backhaul_rate_bps", c.channel.backhaul_rate_bps},
          {"downlink_rate_bps", c.channel.downlink_rate_bps},
          {"rx_idle_power_w", c.channel.rx_idle_power_w}}},
        {"model",
         {{"backbone_layers", c.model.backbone_layers},
          {"backbone_width", c.model.backbone_width},
          {"adapter_bottleneck", c.model.adapter_bottleneck},
          {"full_scale_bottleneck", c.model.full_scale_bottleneck},
          {"trainable_wire_bytes", c.model.trainable_wire_bytes},
          {"frozen_wire_bytes", c.model.frozen_wire_bytes},
          {"head_wire_bytes", c.model.head_wire_bytes}}},
        {"data",
         {{"classes", c.data.classes},
          {"dim", c.data.dim},
          {"n_per_class", c.data.n_per_class},
          {"alpha", c.data.alpha},
          {"test_fraction", c.data.test_fraction},
          {"separation", c.data.separation},
          {"num_tasks", c.data.num_tasks}}},
        {"policy",
         {{"e_local", c.policy.e_local},
          {"e_agg", c.policy.e_agg},
          {"edge_only", c.policy.edge_only},
          {"strategies", strategies},
          {"module_overrides", overrides}}},
        {"rounds", c.rounds},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"seeds", c.seeds},
        {"output_dir", c.output_dir},
    };
}

} // namespace fedfog
