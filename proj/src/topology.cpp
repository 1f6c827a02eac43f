#include "fedfog/topology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "fedfog/errors.hpp"
#include "fedfog/rng.hpp"

namespace fedfog {

namespace {

constexpr std::uint64_t kClusterSalt = 0x746f706fULL; // stream label for cluster rngs
constexpr int kResampleLimit = 50;
constexpr int kRadiusGrowthLimit = 200;

std::map<int, std::vector<int>> adjacency_lists(const Cluster& cluster) {
    std::map<int, std::vector<int>> adj;
    for (int m : cluster.members) adj[m];
    for (auto [u, v] : cluster.adjacency) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    for (auto& [id, neigh] : adj) std::sort(neigh.begin(), neigh.end());
    return adj;
}

bool cluster_connected(const Cluster& cluster) {
    if (cluster.members.empty()) return false;
    auto adj = adjacency_lists(cluster);
    std::set<int> seen{cluster.members.front()};
    std::deque<int> queue{cluster.members.front()};
    while (!queue.empty()) {
        int cur = queue.front();
        queue.pop_front();
        for (int n : adj[cur]) {
            if (seen.insert(n).second) queue.push_back(n);
        }
    }
    return seen.size() == cluster.members.size();
}

std::vector<std::pair<int, int>> rgg_edges(const std::vector<int>& members,
                                           const std::vector<Node>& nodes,
                                           double radius_m) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            const auto& a = *nodes[static_cast<std::size_t>(members[i])].position;
            const auto& b = *nodes[static_cast<std::size_t>(members[j])].position;
            if (distance_m(a, b) <= radius_m) {
                edges.emplace_back(members[i], members[j]);
            }
        }
    }
    return edges;
}

} // namespace

double distance_m(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

int NetworkTopology::num_devices() const {
    int n = 0;
    for (const auto& node : nodes) {
        if (node.tier == Tier::Device) ++n;
    }
    return n;
}

std::vector<int> NetworkTopology::devices_of_server(int server_id) const {
    std::vector<int> out;
    for (const auto& node : nodes) {
        if (node.tier == Tier::Device && node.parent == server_id) out.push_back(node.id);
    }
    return out;
}

NetworkTopology generate_topology(const TopologyConfig& cfg, std::uint64_t seed) {
    if (cfg.num_clusters <= 0 || cfg.devices_per_cluster <= 0 || cfg.num_edge_servers <= 0) {
        throw ConfigError("topology: all counts must be positive");
    }
    if (cfg.num_devices != cfg.num_clusters * cfg.devices_per_cluster) {
        std::ostringstream msg;
        msg << "topology: num_devices (" << cfg.num_devices << ") != num_clusters ("
            << cfg.num_clusters << ") * devices_per_cluster (" << cfg.devices_per_cluster << ")";
        throw ConfigError(msg.str());
    }
    if (cfg.num_clusters % cfg.num_edge_servers != 0 &&
        cfg.num_edge_servers % cfg.num_clusters != 0) {
        throw ConfigError("topology: num_clusters and num_edge_servers must divide one another");
    }
    if (cfg.d2d_radius_m <= 0.0 || cfg.area_side_m <= 0.0) {
        throw ConfigError("topology: d2d_radius_m and area_side_m must be positive");
    }

    NetworkTopology topo;
    topo.d2d_radius_m = cfg.d2d_radius_m;
    topo.area_side_m = cfg.area_side_m;

    const int first_server = cfg.num_devices;
    const int cloud = cfg.num_devices + cfg.num_edge_servers;

    topo.nodes.resize(static_cast<std::size_t>(cloud) + 1);

    // Cluster placement squares on a grid.
    const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.num_clusters))));
    auto square_origin = [&](int cluster_id) {
        return Point{static_cast<double>(cluster_id % grid_cols) * cfg.area_side_m,
                     static_cast<double>(cluster_id / grid_cols) * cfg.area_side_m};
    };
    auto square_center = [&](int cluster_id) {
        Point o = square_origin(cluster_id);
        return Point{o.x + cfg.area_side_m / 2.0, o.y + cfg.area_side_m / 2.0};
    };

    topo.clusters.resize(static_cast<std::size_t>(cfg.num_clusters));
    for (int c = 0; c < cfg.num_clusters; ++c) {
        Cluster& cluster = topo.clusters[static_cast<std::size_t>(c)];
        cluster.id = c;
        cluster.edge_server = first_server + c % cfg.num_edge_servers;
        for (int k = 0; k < cfg.devices_per_cluster; ++k) {
            cluster.members.push_back(c * cfg.devices_per_cluster + k);
        }

        Rng rng(mix_seed(mix_seed(seed, kClusterSalt), static_cast<std::uint64_t>(c)));
        const Point origin = square_origin(c);
        double radius = cfg.d2d_radius_m;
        bool connected = false;
        for (int growth = 0; growth < kRadiusGrowthLimit && !connected; ++growth) {
            for (int attempt = 0; attempt < kResampleLimit && !connected; ++attempt) {
                for (int m : cluster.members) {
                    Node& dev = topo.nodes[static_cast<std::size_t>(m)];
                    dev.position = Point{origin.x + rng.uniform() * cfg.area_side_m,
                                         origin.y + rng.uniform() * cfg.area_side_m};
                }
                cluster.adjacency = rgg_edges(cluster.members, topo.nodes, radius);
                connected = cluster_connected(cluster);
            }
            if (!connected) radius *= 1.1;
        }
        if (!connected) {
            throw GenerationError("topology: cluster " + std::to_string(c) +
                                  " could not be connected");
        }
        cluster.effective_d2d_radius_m = radius;
        cluster.head = cluster.members[rng.index(cluster.members.size())];

        for (int m : cluster.members) {
            Node& dev = topo.nodes[static_cast<std::size_t>(m)];
            dev.id = m;
            dev.tier = Tier::Device;
            dev.parent = cluster.edge_server;
            dev.tx_power_uplink_w = cfg.node_defaults.device.tx_power_uplink_w;
            dev.tx_power_d2d_w = cfg.node_defaults.device.tx_power_d2d_w;
            dev.compute_time_per_epoch_s = cfg.node_defaults.device.compute_time_per_epoch_s;
            dev.compute_power_w = cfg.node_defaults.device.compute_power_w;
        }
    }

    // Edge servers at the centroid of the cluster squares they serve.
    for (int s = 0; s < cfg.num_edge_servers; ++s) {
        Node& srv = topo.nodes[static_cast<std::size_t>(first_server + s)];
        srv.id = first_server + s;
        srv.tier = Tier::EdgeServer;
        srv.parent = cloud;
        srv.tx_power_uplink_w = cfg.node_defaults.edge_server.tx_power_uplink_w;
        srv.tx_power_d2d_w = cfg.node_defaults.edge_server.tx_power_d2d_w;
        srv.compute_time_per_epoch_s = cfg.node_defaults.edge_server.compute_time_per_epoch_s;
        srv.compute_power_w = cfg.node_defaults.edge_server.compute_power_w;

        Point centroid{0.0, 0.0};
        int served = 0;
        for (const auto& cluster : topo.clusters) {
            if (cluster.edge_server == srv.id) {
                Point c = square_center(cluster.id);
                centroid.x += c.x;
                centroid.y += c.y;
                ++served;
            }
        }
        if (served > 0) {
            srv.position = Point{centroid.x / served, centroid.y / served};
        } else {
            // Server with no clusters (more servers than clusters); inert.
            srv.position = square_center(s % cfg.num_clusters);
        }
    }

    Node& cloud_node = topo.nodes[static_cast<std::size_t>(cloud)];
    cloud_node.id = cloud;
    cloud_node.tier = Tier::Cloud;
    cloud_node.parent = -1;
    cloud_node.tx_power_uplink_w = cfg.node_defaults.cloud.tx_power_uplink_w;
    cloud_node.tx_power_d2d_w = cfg.node_defaults.cloud.tx_power_d2d_w;
    cloud_node.compute_time_per_epoch_s = cfg.node_defaults.cloud.compute_time_per_epoch_s;
    cloud_node.compute_power_w = cfg.node_defaults.cloud.compute_power_w;

    return topo;
}

std::vector<int> shortest_path(const Cluster& cluster, int src, int dst) {
    auto is_member = [&](int id) {
        return std::find(cluster.members.begin(), cluster.members.end(), id) !=
               cluster.members.end();
    };
    if (!is_member(src)) {
        throw MembershipError("shortest_path: node " + std::to_string(src) +
                              " is not a member of cluster " + std::to_string(cluster.id));
    }
    if (!is_member(dst)) {
        throw MembershipError("shortest_path: node " + std::to_string(dst) +
                              " is not a member of cluster " + std::to_string(cluster.id));
    }
    if (src == dst) return {src};

    auto adj = adjacency_lists(cluster);
    std::map<int, int> dist;
    dist[src] = 0;
    std::deque<int> queue{src};
    while (!queue.empty() && dist.find(dst) == dist.end()) {
        int cur = queue.front();
        queue.pop_front();
        for (int n : adj[cur]) { // ascending id order
            if (dist.find(n) == dist.end()) {
                dist[n] = dist[cur] + 1;
                queue.push_back(n);
            }
        }
    }
    auto it = dist.find(dst);
    if (it == dist.end()) {
        throw TopologyError("shortest_path: cluster " + std::to_string(cluster.id) +
                            " is disconnected between " + std::to_string(src) + " and " +
                            std::to_string(dst));
    }

    // Walk back choosing the lowest-id predecessor on a shortest path.
    std::vector<int> path{dst};
    int cur = dst;
    while (cur != src) {
        int best = -1;
        for (int n : adj[cur]) {
            auto dn = dist.find(n);
            if (dn != dist.end() && dn->second == dist[cur] - 1) {
                best = n;
                break; // neighbors are ascending, first hit is the lowest id
            }
        }
        cur = best;
        path.push_back(cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<std::string> validate_topology(const NetworkTopology& topo) {
    std::vector<std::string> violations;
    auto complain = [&](const std::string& msg) { violations.push_back(msg); };

    int cloud_count = 0;
    for (const auto& node : topo.nodes) {
        if (node.tier == Tier::Cloud) ++cloud_count;
    }
    if (cloud_count != 1) {
        complain("expected exactly one cloud node, found " + std::to_string(cloud_count));
    }

    for (const auto& node : topo.nodes) {
        const std::string tag = "node " + std::to_string(node.id);
        switch (node.tier) {
        case Tier::Device:
            if (node.parent < 0 ||
                node.parent >= static_cast<int>(topo.nodes.size()) ||
                topo.node(node.parent).tier != Tier::EdgeServer) {
                complain(tag + ": device parent is not an edge server");
            }
            break;
        case Tier::EdgeServer:
            if (node.parent < 0 ||
                node.parent >= static_cast<int>(topo.nodes.size()) ||
                topo.node(node.parent).tier != Tier::Cloud) {
                complain(tag + ": edge server parent is not the cloud");
            }
            break;
        case Tier::Cloud:
            if (node.parent != -1) complain(tag + ": cloud must have no parent");
            break;
        }
        if (node.tx_power_uplink_w <= 0.0 || node.tx_power_d2d_w <= 0.0 ||
            node.compute_time_per_epoch_s <= 0.0 || node.compute_power_w <= 0.0) {
            complain(tag + ": power/time fields must be strictly positive");
        }
    }

    std::set<int> covered;
    for (const auto& cluster : topo.clusters) {
        const std::string tag = "cluster " + std::to_string(cluster.id);
        if (std::find(cluster.members.begin(), cluster.members.end(), cluster.head) ==
            cluster.members.end()) {
            complain(tag + ": head " + std::to_string(cluster.head) + " is not a member");
        }
        for (int m : cluster.members) {
            if (!covered.insert(m).second) {
                complain(tag + ": device " + std::to_string(m) + " appears in two clusters");
            }
            if (m < 0 || m >= static_cast<int>(topo.nodes.size()) ||
                topo.node(m).tier != Tier::Device) {
                complain(tag + ": member " + std::to_string(m) + " is not a device");
            }
        }
        const double radius =
            cluster.effective_d2d_radius_m > 0.0 ? cluster.effective_d2d_radius_m : topo.d2d_radius_m;
        for (auto [u, v] : cluster.adjacency) {
            const std::string edge = "edge (" + std::to_string(u) + "," + std::to_string(v) + ")";
            if (u == v) {
                complain(tag + ": " + edge + " is a self-loop");
                continue;
            }
            bool members_only =
                std::find(cluster.members.begin(), cluster.members.end(), u) != cluster.members.end() &&
                std::find(cluster.members.begin(), cluster.members.end(), v) != cluster.members.end();
            if (!members_only) {
                complain(tag + ": " + edge + " leaves the cluster");
                continue;
            }
            const auto& pu = topo.node(u).position;
            const auto& pv = topo.node(v).position;
            if (!pu || !pv) {
                complain(tag + ": " + edge + " endpoint has no position");
            } else if (distance_m(*pu, *pv) > radius + 1e-9) {
                complain(tag + ": " + edge + " is longer than the d2d radius");
            }
        }
        if (!cluster_connected(cluster)) {
            complain(tag + ": D2D graph is not connected");
        }
    }
    for (const auto& node : topo.nodes) {
        if (node.tier == Tier::Device && covered.find(node.id) == covered.end()) {
            complain("device " + std::to_string(node.id) + " belongs to no cluster");
        }
    }
    return violations;
}

std::string topology_text(const NetworkTopology& topo) {
    std::ostringstream out;
    out << "devices " << topo.num_devices() << " clusters " << topo.clusters.size() << "\n";
    for (const auto& cluster : topo.clusters) {
        out << "cluster " << cluster.id << " head " << cluster.head << " server "
            << cluster.edge_server << " radius " << cluster.effective_d2d_radius_m << "\n";
        for (int m : cluster.members) {
            const auto& p = topo.node(m).position;
            out << "  node " << m;
            if (p) out << " at (" << p->x << "," << p->y << ")";
            out << "\n";
        }
        for (auto [u, v] : cluster.adjacency) {
            out << "  edge " << u << " -- " << v << "\n";
        }
    }
    return out.str();
}

} // namespace fedfog
