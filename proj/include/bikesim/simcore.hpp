#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bikesim/demand.hpp"
#include "bikesim/ingest.hpp"
#include "bikesim/network.hpp"
#include "bikesim/rng.hpp"

namespace bikesim {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    int tau_s = 60;
    double mean_speed_kmh = 14.0;
    double walk_speed_kmh = 5.0;
    double p_it = 0.20;
    double p_info = 0.5;
    double walk_radius_m = 400.0;
    double sigma = 50.0;
    std::uint64_t seed = 1;
    bool record_events = false;

    double mean_speed_mps() const { return mean_speed_kmh * (1000.0 / 3600.0); }
    double walk_speed_mps() const { return walk_speed_kmh * (1000.0 / 3600.0); }

    void validate(int bin_s) const {
        if (tau_s <= 0 || bin_s % tau_s != 0)
            throw SimError("tick must be positive and divide the demand bin width");
        if (mean_speed_kmh <= 0 || walk_speed_kmh <= 0) throw SimError("speeds must be positive");
        if (p_it < 0 || p_it > 1 || p_info < 0 || p_info > 1)
            throw SimError("probabilities must lie in [0,1]");
        if (walk_radius_m < 0) throw SimError("walk radius must be nonnegative");
        if (sigma <= 0) throw SimError("sigma must be positive");
    }

    nlohmann::json to_json() const {
        return {{"tau_s", tau_s},
                {"mean_speed_kmh", mean_speed_kmh},
                {"walk_speed_kmh", walk_speed_kmh},
                {"p_it", p_it},
                {"p_info", p_info},
                {"walk_radius_m", walk_radius_m},
                {"sigma", sigma},
                {"seed", seed}};
    }
    static SimConfig from_json(const nlohmann::json& j) {
        SimConfig c;
        c.tau_s = j.value("tau_s", c.tau_s);
        c.mean_speed_kmh = j.value("mean_speed_kmh", c.mean_speed_kmh);
        c.walk_speed_kmh = j.value("walk_speed_kmh", c.walk_speed_kmh);
        c.p_it = j.value("p_it", c.p_it);
        c.p_info = j.value("p_info", c.p_info);
        c.walk_radius_m = j.value("walk_radius_m", c.walk_radius_m);
        c.sigma = j.value("sigma", c.sigma);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

enum class Mode { Riding, WalkingToStart, WalkingToDock };
enum class Outcome { Dropped, Exited, WalkDock, Abandoned, Unfinished };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Dropped: return "dropped";
        case Outcome::Exited: return "exited";
        case Outcome::WalkDock: return "walk-dock";
        case Outcome::Abandoned: return "abandoned";
        case Outcome::Unfinished: return "unfinished";
    }
    return "?";
}

struct TravelRecord {
    std::uint64_t biker = 0;
    double d_th = 0;  // shortest distance of the ride as first planned
    double d_r = 0;   // distance actually ridden
    bool adverse = false;
    bool completed = false;
    Outcome outcome = Outcome::Dropped;
    bool walked_to_dock = false;
    bool outbound = false;
    int start_bin = 0;
};

struct SimResult {
    std::size_t n_stations = 0;
    int n_ticks = 0;
    std::vector<int> occupancy;  // (n_ticks+1) x n_stations, row-major
    std::vector<int> in_transit;     // per snapshot row
    std::vector<long long> entered;  // cumulative, per snapshot row
    std::vector<long long> exited;
    std::vector<TravelRecord> travels;
    std::vector<nlohmann::json> events;

    int occ(int tick, std::size_t s) const { return occupancy[tick * n_stations + s]; }
    int occ_sum(int tick) const {
        int total = 0;
        for (std::size_t s = 0; s < n_stations; ++s) total += occ(tick, s);
        return total;
    }
};

/// p_b(s, 0) = round(lf(s, bin 0) * c(s)), aligned to network station order.
inline std::vector<int> initial_occupancy(const StandardDay& sd, const StreetNetwork& net) {
    std::vector<int> occ(net.stations().size(), 0);
    for (std::size_t i = 0; i < net.stations().size(); ++i) {
        const auto& st = net.stations()[i];
        const auto it = std::find(sd.station_ids.begin(), sd.station_ids.end(), st.id);
        if (it == sd.station_ids.end())
            throw SimError("standard day has no data for station " + std::to_string(st.id));
        const std::size_t row = it - sd.station_ids.begin();
        occ[i] = static_cast<int>(std::llround(sd.at(row, 0) * st.capacity));
    }
    return occ;
}

class Simulation {
public:
    Simulation(const StreetNetwork& net, const DemandModel& model, SimConfig cfg,
               std::vector<int> initial_occ)
        : net_(net), model_(model), cfg_(cfg), occ_(std::move(initial_occ)),
          rng_demand_(derive_seed(cfg.seed, 0)), rng_behavior_(derive_seed(cfg.seed, 1)) {
        cfg_.validate(model.bin_s);
        if (occ_.size() != net.stations().size())
            throw SimError("initial occupancy size mismatch");
        for (std::size_t s = 0; s < occ_.size(); ++s)
            if (occ_[s] < 0 || occ_[s] > net.stations()[s].capacity)
                throw SimError("initial occupancy outside [0, capacity]");
        ticks_per_bin_ = model.bin_s / cfg_.tau_s;
        n_ticks_ = model.n_bins * ticks_per_bin_;
    }

    SimResult run() {
        const std::size_t ns = net_.stations().size();
        res_ = SimResult{};
        res_.n_stations = ns;
        res_.n_ticks = n_ticks_;
        res_.occupancy.reserve(static_cast<std::size_t>(n_ticks_ + 1) * ns);
        snapshot();

        stubs_.assign(n_ticks_, {});
        activations_.assign(n_ticks_ + 1, {});

        for (int tick = 0; tick < n_ticks_; ++tick) {
            start_travels(tick);
            move_all();
            finish_or_redirect(tick);
            snapshot();
        }
        flush_unfinished();
        return std::move(res_);
    }

private:
    struct Biker {
        std::uint64_t id = 0;
        bool informed = false;
        Mode mode = Mode::Riding;
        bool outbound = false;
        NodeId dest_node = 0;
        std::optional<std::size_t> dest_station;  // docking target, if decided
        std::vector<bool> visited;                // station indexes already tried
        double d_th = 0, d_r = 0;
        bool adverse = false;
        bool walked_to_dock = false;
        int start_bin = 0;
        int walk_starts = 0;  // walking-to-start legs taken so far
        // current leg
        std::vector<NodeId> path;
        double path_len = 0, along = 0;
        bool arrived = false;
        std::size_t walk_target = 0;  // station awaited while walking to start
    };

    struct Stub {
        bool from_entry = false;
        NodeId entry_node = 0;
        int bin = 0;
    };

    // ---- phase 1 -----------------------------------------------------------

    void start_travels(int tick) {
        const int bin = tick / ticks_per_bin_;
        if (tick % ticks_per_bin_ == 0) draw_bin(bin, tick);

        for (const Stub& stub : stubs_[tick]) {
            if (stub.from_entry)
                spawn_entry(stub, tick);
            else
                spawn_internal(stub, tick);
        }
        stubs_[tick].clear();

        for (std::uint64_t id : activations_[tick]) {
            auto it = active_.find(id);
            if (it != active_.end()) activate_walker(it->second, tick);
        }
        activations_[tick].clear();
    }

    /// Spread the bin's demand uniformly over the bin's ticks.
    void draw_bin(int bin, int first_tick) {
        const auto entries = model_.boundary.sample_entries(bin, rng_demand_);
        for (std::size_t i = 0; i < entries.size(); ++i)
            for (int k = 0; k < entries[i]; ++k) {
                const int t =
                    first_tick + static_cast<int>(rng_demand_.uniform_below(ticks_per_bin_));
                stubs_[t].push_back(Stub{true, model_.boundary.entry_nodes[i], bin});
            }
        const int dep = model_.boundary.sample_departures(bin, rng_demand_);
        for (int k = 0; k < dep; ++k) {
            const int t = first_tick + static_cast<int>(rng_demand_.uniform_below(ticks_per_bin_));
            stubs_[t].push_back(Stub{false, 0, bin});
        }
    }

    void spawn_entry(const Stub& stub, int tick) {
        Biker b;
        b.id = next_id_++;
        b.start_bin = stub.bin;
        b.informed = rng_behavior_.bernoulli(cfg_.p_info);
        b.visited.assign(net_.stations().size(), false);
        const Point dest = model_.destination.sample_point(stub.bin, rng_demand_);
        choose_internal_destination(b, dest);
        ++entered_;
        begin_ride(b, stub.entry_node, tick);
    }

    void spawn_internal(const Stub& stub, int tick) {
        Biker b;
        b.id = next_id_++;
        b.start_bin = stub.bin;
        b.visited.assign(net_.stations().size(), false);
        const Point origin_pt = model_.origin.sample_point(stub.bin, rng_demand_);
        const auto origin = net_.nearest_station_idx(origin_pt, [](std::size_t) { return true; });
        if (!origin) throw SimError("network has no stations");

        if (rng_demand_.bernoulli(cfg_.p_it)) {
            const Point dest = model_.destination.sample_point(stub.bin, rng_demand_);
            b.informed = rng_behavior_.bernoulli(cfg_.p_info);
            choose_internal_destination(b, dest);
        } else {
            b.outbound = true;
            b.informed = rng_behavior_.bernoulli(cfg_.p_info);
            const auto& exits = net_.boundary_nodes();
            b.dest_node = exits[rng_demand_.uniform_below(exits.size())];
        }

        const NodeId origin_node = net_.stations()[*origin].node;
        if (occ_[*origin] > 0) {
            --occ_[*origin];
            event("start", tick, b.id,
                  {{"station", net_.stations()[*origin].id}, {"informed", b.informed}});
            begin_ride_active(b, origin_node, tick);
        } else {
            // empty origin: adverse; walk to another station or abandon
            b.adverse = true;
            b.visited[*origin] = true;
            event("start", tick, b.id,
                  {{"station", net_.stations()[*origin].id},
                   {"informed", b.informed},
                   {"empty_origin", true}});
            walk_to_start(b, origin_node, tick);
        }
    }

    /// Destination choice for a travel ending inside the district. Informed
    /// bikers retarget to the closest station (to the sampled point) that has
    /// a free dock; uninformed ones head for the raw point.
    void choose_internal_destination(Biker& b, Point dest) {
        if (b.informed) {
            const auto s = net_.nearest_station_idx(
                dest, [&](std::size_t i) { return occ_[i] < net_.stations()[i].capacity; });
            if (s) {
                b.dest_station = *s;
                b.dest_node = net_.stations()[*s].node;
                return;
            }
        }
        b.dest_node = reachable_nearest_node(dest);
    }

    /// Entry bikers ride from a boundary node; entered already counted.
    void begin_ride(Biker& b, NodeId from, int tick) {
        event("start", tick, b.id, {{"node", from}, {"informed", b.informed}});
        begin_ride_active(b, from, tick);
    }

    void begin_ride_active(Biker& b, NodeId from, int tick) {
        (void)tick;
        b.mode = Mode::Riding;
        set_path(b, from, b.dest_node);
        b.d_th = b.path_len;
        active_.emplace(b.id, std::move(b));
    }

    /// Pick a station to fetch a bike from, or abandon. Informed bikers walk
    /// to the closest station holding a bike; uninformed ones to a uniformly
    /// random unvisited station within the walk radius.
    void walk_to_start(Biker& b, NodeId from, int tick) {
        std::optional<std::size_t> target;
        if (b.informed) {
            target = net_.nearest_station_idx(
                from, [&](std::size_t i) { return !b.visited[i] && occ_[i] > 0; });
        } else {
            const auto within = net_.stations_within(from, cfg_.walk_radius_m, b.visited);
            if (!within.empty()) target = within[rng_behavior_.uniform_below(within.size())];
        }
        if (!target) {
            finish(b, Outcome::Abandoned, tick);
            return;
        }
        b.mode = Mode::WalkingToStart;
        b.walk_target = *target;
        ++b.walk_starts;
        const double d = net_.station_to_node_distance(*target, from);
        const int delay = std::max(1, static_cast<int>(std::ceil(d / cfg_.walk_speed_mps() /
                                                                 cfg_.tau_s)));
        const int when = std::min(tick + delay, n_ticks_);  // may never fire; flushed at day end
        if (when < n_ticks_) activations_[when].push_back(b.id);
        event("reroute", tick, b.id,
              {{"walk_to_start", net_.stations()[*target].id}, {"delay_ticks", delay}});
        active_.emplace(b.id, std::move(b));
    }

    void activate_walker(Biker& b, int tick) {
        const std::size_t s = b.walk_target;
        if (occ_[s] > 0) {
            --occ_[s];
            event("start", tick, b.id, {{"station", net_.stations()[s].id}, {"walked", true}});
            b.mode = Mode::Riding;
            set_path(b, net_.stations()[s].node, b.dest_node);
            b.d_th = b.path_len;  // plan restarts from the fetch station
            return;
        }
        // still empty: the empty-origin rule re-applies once, then abandon
        b.adverse = true;
        b.visited[s] = true;
        if (b.walk_starts >= 2) {
            finish_active(b.id, Outcome::Abandoned, tick);
            return;
        }
        Biker moved = std::move(b);
        active_.erase(moved.id);
        walk_to_start(moved, net_.stations()[s].node, tick);
    }

    // ---- phase 2 -----------------------------------------------------------

    void move_all() {
        for (auto& [id, b] : active_) {
            if (b.mode == Mode::WalkingToStart || b.arrived) continue;
            const double speed =
                b.mode == Mode::Riding ? cfg_.mean_speed_mps() : cfg_.walk_speed_mps();
            b.along = std::min(b.along + speed * cfg_.tau_s, b.path_len);
            if (b.along >= b.path_len) b.arrived = true;
        }
    }

    // ---- phase 3 -----------------------------------------------------------

    void finish_or_redirect(int tick) {
        // arrivals in biker-id order; occupancy changes apply immediately
        std::vector<std::uint64_t> done;
        for (auto& [id, b] : active_) {
            if (b.mode == Mode::WalkingToStart || !b.arrived) continue;
            if (handle_arrival(b, tick)) done.push_back(id);
        }
        for (std::uint64_t id : done) active_.erase(id);
    }

    /// Returns true when the biker's travel ended and it leaves the system.
    bool handle_arrival(Biker& b, int tick) {
        const NodeId here = b.path.back();
        if (b.mode == Mode::Riding) b.d_r += b.path_len;
        b.path_len = 0;  // leg consumed; re-entry for stalled bikers adds nothing
        b.along = 0;

        if (b.outbound && here == b.dest_node) {
            record(b, Outcome::Exited, tick);
            return true;
        }

        const auto station_here = b.dest_station && net_.stations()[*b.dest_station].node == here
                                      ? b.dest_station
                                      : net_.station_index_at_node(here);
        if (!station_here) {
            // raw destination reached off-station: walk the bike to a nearby one
            choose_dock_after_raw_arrival(b, here, tick);
            return false;
        }

        const std::size_t s = *station_here;
        if (occ_[s] < net_.stations()[s].capacity) {
            ++occ_[s];
            record(b, b.walked_to_dock ? Outcome::WalkDock : Outcome::Dropped, tick,
                   net_.stations()[s].id);
            return true;
        }

        // full dock: remember it, pick a new target, keep riding
        b.adverse = true;
        b.visited[s] = true;
        const auto next = choose_dock_after_full(b, here);
        if (!next) {
            b.arrived = true;  // nowhere to go; retry next tick
            event("reroute", tick, b.id, {{"stalled_at", net_.stations()[s].id}});
            return false;
        }
        b.dest_station = *next;
        b.dest_node = net_.stations()[*next].node;
        b.mode = Mode::Riding;
        set_path(b, here, b.dest_node);
        event("reroute", tick, b.id,
              {{"full", net_.stations()[s].id}, {"to", net_.stations()[*next].id}});
        return false;
    }

    /// Uninformed arrival at a non-station point: uniform unvisited station
    /// within r, with the same fallback ladder as the full-dock case.
    void choose_dock_after_raw_arrival(Biker& b, NodeId here, int tick) {
        std::optional<std::size_t> target;
        auto within = net_.stations_within(here, cfg_.walk_radius_m, b.visited);
        if (!within.empty()) {
            target = within[rng_behavior_.uniform_below(within.size())];
        } else {
            within = net_.stations_within(here, 2 * cfg_.walk_radius_m, b.visited);
            if (!within.empty()) target = within[rng_behavior_.uniform_below(within.size())];
        }
        if (!target)
            target = net_.nearest_station_idx(here, [&](std::size_t i) {
                return occ_[i] < net_.stations()[i].capacity;
            });
        if (!target) {  // no free dock anywhere; hold position and retry
            b.arrived = true;
            return;
        }
        b.dest_station = *target;
        b.dest_node = net_.stations()[*target].node;
        b.mode = Mode::WalkingToDock;
        b.walked_to_dock = true;
        set_path(b, here, b.dest_node);
        event("reroute", tick, b.id, {{"walk_to_dock", net_.stations()[*target].id}});
    }

    /// New docking target after a full dock. Informed: nearest unvisited
    /// station with a free dock. Uninformed: uniform unvisited within r,
    /// then within 2r, then the globally nearest free dock.
    std::optional<std::size_t> choose_dock_after_full(Biker& b, NodeId here) {
        auto free_dock = [&](std::size_t i) {
            return occ_[i] < net_.stations()[i].capacity;
        };
        if (b.informed)
            return net_.nearest_station_idx(
                here, [&](std::size_t i) { return !b.visited[i] && free_dock(i); });

        auto within = net_.stations_within(here, cfg_.walk_radius_m, b.visited);
        if (!within.empty()) return within[rng_behavior_.uniform_below(within.size())];
        within = net_.stations_within(here, 2 * cfg_.walk_radius_m, b.visited);
        if (!within.empty()) return within[rng_behavior_.uniform_below(within.size())];
        auto global_free = net_.nearest_station_idx(
            here, [&](std::size_t i) { return !b.visited[i] && free_dock(i); });
        if (global_free) return global_free;
        return net_.nearest_station_idx(here, free_dock);  // memory exhausted
    }

    // ---- bookkeeping -------------------------------------------------------

    void set_path(Biker& b, NodeId from, NodeId to) {
        const auto& from_tree = tree(from);
        const auto& to_tree = tree(to);
        const Path p = net_.shortest_path(from, to, from_tree, to_tree);
        b.path = p.nodes;
        b.path_len = p.length;
        b.along = 0;
        b.arrived = p.length <= 0.0;
    }

    const std::vector<double>& tree(NodeId root) {
        auto it = tree_cache_.find(root);
        if (it == tree_cache_.end())
            it = tree_cache_.emplace(root, net_.distance_tree(root)).first;
        return it->second;
    }

    /// Snap a raw point to the nearest node in the stations' component, so
    /// every planned ride is routable.
    NodeId reachable_nearest_node(Point p) {
        const NodeId best = net_.nearest_node(p);
        const auto& ref = tree(net_.stations().front().node);
        if (ref[best] != kInf) return best;
        double best_d = std::numeric_limits<double>::infinity();
        NodeId pick = best;
        for (const auto& n : net_.nodes()) {
            if (ref[n.id] == kInf) continue;
            const double d = distance(p, n.pos);
            if (d < best_d) {
                best_d = d;
                pick = n.id;
            }
        }
        return pick;
    }

    void finish(Biker& b, Outcome o, int tick) { record(b, o, tick); }

    void finish_active(std::uint64_t id, Outcome o, int tick) {
        auto it = active_.find(id);
        record(it->second, o, tick);
        active_.erase(it);
    }

    void record(Biker& b, Outcome o, int tick, std::optional<std::uint32_t> station = {}) {
        TravelRecord r;
        r.biker = b.id;
        r.d_th = b.d_th;
        r.d_r = b.d_r;
        r.adverse = b.adverse;
        r.completed = o == Outcome::Dropped || o == Outcome::Exited || o == Outcome::WalkDock;
        r.outcome = o;
        r.walked_to_dock = b.walked_to_dock;
        r.outbound = b.outbound;
        r.start_bin = b.start_bin;
        res_.travels.push_back(r);
        if (o == Outcome::Exited) ++exited_;
        nlohmann::json extra{{"d_th", r.d_th}, {"d_r", r.d_r}, {"adverse", r.adverse}};
        if (station) extra["station"] = *station;
        event(outcome_name(o), tick, b.id, std::move(extra));
    }

    void event(const char* type, int tick, std::uint64_t biker, nlohmann::json extra) {
        if (!cfg_.record_events) return;
        extra["type"] = type;
        extra["tick"] = tick;
        extra["biker"] = biker;
        res_.events.push_back(std::move(extra));
    }

    void snapshot() {
        for (std::size_t s = 0; s < occ_.size(); ++s) res_.occupancy.push_back(occ_[s]);
        int transit = 0;
        for (const auto& [id, b] : active_)
            if (b.mode != Mode::WalkingToStart) ++transit;
        res_.in_transit.push_back(transit);
        res_.entered.push_back(entered_);
        res_.exited.push_back(exited_);
    }

    void flush_unfinished() {
        for (auto& [id, b] : active_) {
            if (b.mode == Mode::Riding) b.d_r += b.along;  // partial leg ridden
            record(b, Outcome::Unfinished, n_ticks_);
        }
        active_.clear();
    }

    const StreetNetwork& net_;
    const DemandModel& model_;
    SimConfig cfg_;
    std::vector<int> occ_;
    // Separate streams so the demand realization (schedule, O/D points, trip
    // types) is identical across runs that share a seed but differ in the
    // user-strategy parameters; only the behavior draws diverge.
    Rng rng_demand_;
    Rng rng_behavior_;
    int ticks_per_bin_ = 5;
    int n_ticks_ = 0;
    std::uint64_t next_id_ = 0;
    long long entered_ = 0, exited_ = 0;
    std::map<std::uint64_t, Biker> active_;
    std::vector<std::vector<Stub>> stubs_;
    std::vector<std::vector<std::uint64_t>> activations_;
    std::unordered_map<NodeId, std::vector<double>> tree_cache_;
    SimResult res_;
};

/// One full day with everything wired together.
inline SimResult run_day(const StreetNetwork& net, const DemandModel& model,
                         const SimConfig& cfg, const std::vector<int>& initial_occ) {
    Simulation sim(net, model, cfg, initial_occ);
    return sim.run();
}

inline void write_occupancy_csv(std::ostream& out, const SimResult& r,
                                const StreetNetwork& net) {
    out << "tick,station_id,bikes\n";
    for (int t = 0; t <= r.n_ticks; ++t)
        for (std::size_t s = 0; s < r.n_stations; ++s)
            out << t << ',' << net.stations()[s].id << ',' << r.occ(t, s) << '\n';
}

}  // namespace bikesim
