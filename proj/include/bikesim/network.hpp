#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "bikesim/geometry.hpp"

namespace bikesim {

using NodeId = std::uint32_t;

struct Node {
    NodeId id = 0;
    Point pos;
};

/// Fixed dock. Occupancy is simulation state and lives in SimState, not here.
struct Station {
    std::uint32_t id = 0;
    NodeId node = 0;
    int capacity = 0;
};

struct Path {
    std::vector<NodeId> nodes;
    double length = 0.0;
};

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnreachableNode : NetworkError {
    using NetworkError::NetworkError;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Euclidean street graph with embedded stations and boundary entry points.
/// Immutable after finalize(); safe to share read-only across threads.
class StreetNetwork {
public:
    NodeId add_node(Point pos) {
        const NodeId id = static_cast<NodeId>(nodes_.size());
        nodes_.push_back(Node{id, pos});
        return id;
    }

    void add_edge(NodeId a, NodeId b, double length) {
        if (a >= nodes_.size() || b >= nodes_.size())
            throw NetworkError("edge endpoint out of range");
        if (a == b) throw NetworkError("self-loop edge");
        if (!(length > 0.0)) throw NetworkError("edge length must be > 0");
        const double euclid = distance(nodes_[a].pos, nodes_[b].pos);
        if (length < euclid - 1e-6)
            throw NetworkError("edge length " + std::to_string(length) +
                               " shorter than euclidean distance " + std::to_string(euclid));
        edges_.push_back({a, b, length});
    }

    void add_station(std::uint32_t station_id, NodeId node, int capacity) {
        if (node >= nodes_.size()) throw NetworkError("station node out of range");
        if (capacity <= 0) throw NetworkError("station capacity must be positive");
        for (const Station& s : stations_)
            if (s.id == station_id) throw NetworkError("duplicate station id " + std::to_string(station_id));
        stations_.push_back(Station{station_id, node, capacity});
    }

    void add_boundary_point(NodeId node) {
        if (node >= nodes_.size()) throw NetworkError("boundary node out of range");
        boundary_nodes_.push_back(node);
    }

    void set_bounds(Polygon poly) { bounds_ = std::move(poly); }

    /// Validates invariants and builds the adjacency + distance caches.
    void finalize() {
        std::sort(stations_.begin(), stations_.end(),
                  [](const Station& a, const Station& b) { return a.id < b.id; });
        std::sort(boundary_nodes_.begin(), boundary_nodes_.end());
        boundary_nodes_.erase(std::unique(boundary_nodes_.begin(), boundary_nodes_.end()),
                              boundary_nodes_.end());

        adj_.assign(nodes_.size(), {});
        for (const auto& e : edges_) {
            adj_[e.a].push_back({e.b, e.length});
            adj_[e.b].push_back({e.a, e.length});
        }
        for (auto& nbrs : adj_)
            std::sort(nbrs.begin(), nbrs.end());

        if (!bounds_.empty()) {
            for (NodeId b : boundary_nodes_)
                if (distance_to_perimeter(bounds_, nodes_[b].pos) > 1.0)
                    throw NetworkError("boundary point " + std::to_string(b) +
                                       " not on district perimeter");
        }

        check_core_connectivity();

        // station -> every node, and station -> station tables
        station_node_dist_.resize(stations_.size());
        for (std::size_t s = 0; s < stations_.size(); ++s)
            station_node_dist_[s] = distance_tree(stations_[s].node);
        station_station_dist_.assign(stations_.size(),
                                     std::vector<double>(stations_.size(), 0.0));
        for (std::size_t a = 0; a < stations_.size(); ++a)
            for (std::size_t b = 0; b < stations_.size(); ++b)
                station_station_dist_[a][b] = station_node_dist_[a][stations_[b].node];
        finalized_ = true;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Station>& stations() const { return stations_; }
    const std::vector<NodeId>& boundary_nodes() const { return boundary_nodes_; }
    const Polygon& bounds() const { return bounds_; }
    std::size_t edge_count() const { return edges_.size(); }

    const Station& station(std::size_t idx) const { return stations_[idx]; }

    std::optional<std::size_t> station_index_by_id(std::uint32_t id) const {
        for (std::size_t i = 0; i < stations_.size(); ++i)
            if (stations_[i].id == id) return i;
        return std::nullopt;
    }

    std::optional<std::size_t> station_index_at_node(NodeId node) const {
        for (std::size_t i = 0; i < stations_.size(); ++i)
            if (stations_[i].node == node) return i;
        return std::nullopt;
    }

    /// Dijkstra distances from `root` to every node (inf where unreachable).
    std::vector<double> distance_tree(NodeId root) const {
        std::vector<double> dist(nodes_.size(), kInf);
        dist[root] = 0.0;
        using Item = std::pair<double, NodeId>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        heap.push({0.0, root});
        while (!heap.empty()) {
            const auto [d, v] = heap.top();
            heap.pop();
            if (d > dist[v]) continue;
            for (const auto& [w, len] : adj_[v]) {
                const double nd = d + len;
                if (nd < dist[w]) {
                    dist[w] = nd;
                    heap.push({nd, w});
                }
            }
        }
        return dist;
    }

    double shortest_distance(NodeId from, NodeId to) const {
        return distance_tree(from)[to];
    }

    /// Minimal-length path; among equal-length paths the lexicographically
    /// smallest node-id sequence, so runs are reproducible.
    Path shortest_path(NodeId from, NodeId to) const {
        const auto from_tree = distance_tree(from);
        const auto to_tree = distance_tree(to);
        return shortest_path(from, to, from_tree, to_tree);
    }

    /// Same as above with caller-cached distance trees (hot path in the sim).
    Path shortest_path(NodeId from, NodeId to, const std::vector<double>& from_tree,
                       const std::vector<double>& to_tree) const {
        if (from >= nodes_.size() || to >= nodes_.size())
            throw NetworkError("path endpoint out of range");
        if (from == to) return Path{{from}, 0.0};
        const double total = from_tree[to];
        if (total == kInf)
            throw UnreachableNode("no path from node " + std::to_string(from) + " to " +
                                  std::to_string(to));
        // Greedy forward walk: always take the smallest-id neighbour that stays
        // on some shortest path. Yields the lexicographically smallest sequence.
        Path path;
        path.length = total;
        path.nodes.push_back(from);
        NodeId v = from;
        const double tol = 1e-6;
        while (v != to) {
            NodeId next = v;
            bool found = false;
            for (const auto& [w, len] : adj_[v]) {  // neighbours sorted by id
                if (std::abs(from_tree[v] + len + to_tree[w] - total) <= tol &&
                    to_tree[w] < to_tree[v]) {
                    next = w;
                    found = true;
                    break;
                }
            }
            if (!found) throw NetworkError("shortest-path reconstruction failed");
            path.nodes.push_back(next);
            v = next;
        }
        return path;
    }

    /// Euclidean snap of an off-network point; ties by smallest node id.
    NodeId nearest_node(const Point& p) const {
        if (nodes_.empty()) throw NetworkError("empty network");
        NodeId best = 0;
        double best_d = kInf;
        for (const Node& n : nodes_) {
            const double d = distance(p, n.pos);
            if (d < best_d) {
                best_d = d;
                best = n.id;
            }
        }
        return best;
    }

    double station_to_node_distance(std::size_t station_idx, NodeId node) const {
        return station_node_dist_[station_idx][node];
    }

    double station_distance(std::size_t a, std::size_t b) const {
        return station_station_dist_[a][b];
    }

    /// Nearest station (network distance from `node`) satisfying `pred`;
    /// ties by smallest station id. Index into stations().
    template <typename Pred>
    std::optional<std::size_t> nearest_station_idx(NodeId node, Pred&& pred) const {
        std::optional<std::size_t> best;
        double best_d = kInf;
        for (std::size_t s = 0; s < stations_.size(); ++s) {
            if (!pred(s)) continue;
            const double d = station_node_dist_[s][node];
            if (d < best_d) {
                best_d = d;
                best = s;
            }
        }
        return best;
    }

    template <typename Pred>
    std::optional<std::size_t> nearest_station_idx(const Point& p, Pred&& pred) const {
        if (stations_.empty()) return std::nullopt;
        return nearest_station_idx(nearest_node(p), std::forward<Pred>(pred));
    }

    /// All stations with network distance <= r from `node`, minus `exclude`;
    /// sorted by station id (station index order == id order).
    std::vector<std::size_t> stations_within(NodeId node, double r,
                                             const std::vector<bool>& exclude = {}) const {
        std::vector<std::size_t> out;
        for (std::size_t s = 0; s < stations_.size(); ++s) {
            if (s < exclude.size() && exclude[s]) continue;
            if (station_node_dist_[s][node] <= r) out.push_back(s);
        }
        return out;
    }

    std::vector<std::size_t> stations_within(const Point& p, double r,
                                             const std::vector<bool>& exclude = {}) const {
        if (stations_.empty()) return {};
        return stations_within(nearest_node(p), r, exclude);
    }

    bool finalized() const { return finalized_; }

    struct EdgeRec {
        NodeId a, b;
        double length;
    };
    const std::vector<EdgeRec>& edges() const { return edges_; }

private:

    void check_core_connectivity() const {
        // every station/boundary node must be mutually reachable
        std::vector<NodeId> core;
        for (const Station& s : stations_) core.push_back(s.node);
        for (NodeId b : boundary_nodes_) core.push_back(b);
        if (core.size() < 2) return;
        const auto dist = distance_tree(core.front());
        for (NodeId n : core)
            if (dist[n] == kInf)
                throw NetworkError("network disconnected: node " + std::to_string(n) +
                                   " unreachable from station/boundary subgraph");
    }

    std::vector<Node> nodes_;
    std::vector<EdgeRec> edges_;
    std::vector<std::vector<std::pair<NodeId, double>>> adj_;
    std::vector<Station> stations_;  // sorted by id after finalize
    std::vector<NodeId> boundary_nodes_;
    Polygon bounds_;
    std::vector<std::vector<double>> station_node_dist_;
    std::vector<std::vector<double>> station_station_dist_;
    bool finalized_ = false;
};

}  // namespace bikesim
