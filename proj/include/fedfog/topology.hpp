#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedfog {

enum class Tier { Device, EdgeServer, Cloud };

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double distance_m(const Point& a, const Point& b);

struct Node {
    int id = -1;
    Tier tier = Tier::Device;
    std::optional<Point> position;  // cloud is reached over backhaul, no position
    int parent = -1;                // -1 for the cloud
    double tx_power_uplink_w = 0.0;
    double tx_power_d2d_w = 0.0;
    double compute_time_per_epoch_s = 0.0;
    double compute_power_w = 0.0;
};

struct Cluster {
    int id = -1;
    std::vector<int> members;                   // device ids, ascending
    int head = -1;                              // one of members
    std::vector<std::pair<int, int>> adjacency; // undirected D2D edges, u < v
    int edge_server = -1;
    double effective_d2d_radius_m = 0.0;        // grown from the global radius if
                                                // connectivity needed repair
};

struct NetworkTopology {
    std::vector<Node> nodes;       // indexed by id: devices, then servers, then cloud
    std::vector<Cluster> clusters;
    double d2d_radius_m = 0.0;
    double area_side_m = 0.0;      // side of each cluster's placement square

    const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
    int cloud_id() const { return static_cast<int>(nodes.size()) - 1; }
    int num_devices() const;
    std::vector<int> devices_of_server(int server_id) const;
};

struct TierDefaults {
    double tx_power_uplink_w = 0.5;
    double tx_power_d2d_w = 0.1;
    double compute_time_per_epoch_s = 0.5;
    double compute_power_w = 2.0;
};

struct NodeDefaults {
    TierDefaults device{0.5, 0.1, 0.5, 2.0};
    TierDefaults edge_server{1.0, 0.1, 0.1, 10.0};
    TierDefaults cloud{2.0, 0.1, 0.1, 50.0};
};

struct TopologyConfig {
    int num_devices = 40;
    int num_clusters = 10;
    int devices_per_cluster = 4;
    int num_edge_servers = 10;
    double d2d_radius_m = 15.0;
    double area_side_m = 30.0;
    NodeDefaults node_defaults;
};

/// Builds the three-tier network: per-cluster random geometric graphs on a
/// grid of disjoint placement squares, edge servers at the centroid of the
/// cluster squares they serve, one cloud. Deterministic in (cfg, seed).
///
/// Disconnected clusters are resampled up to 50 times, then the cluster's
/// radius grows by 10% and sampling repeats.
NetworkTopology generate_topology(const TopologyConfig& cfg, std::uint64_t seed);

/// Hop-minimal path src..dst inside one cluster. Ties broken toward the
/// lowest-id predecessor so ledgers replay identically.
std::vector<int> shortest_path(const Cluster& cluster, int src, int dst);

/// One human-readable entry per violated structural invariant; empty means
/// the topology is well formed.
std::vector<std::string> validate_topology(const NetworkTopology& topo);

/// Plain-text adjacency listing for debugging.
std::string topology_text(const NetworkTopology& topo);

} // namespace fedfog
