#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bikesim/demand.hpp"
#include "bikesim/geojson.hpp"
#include "bikesim/ingest.hpp"
#include "bikesim/network.hpp"
#include "bikesim/rng.hpp"
#include "bikesim/simcore.hpp"

namespace bikesim {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A scenario directory holds network.geojson, demand.json and config.json.
/// The initial dock state comes from standard_day.csv (bin 0) when present,
/// otherwise from an "initial_bikes" {station_id: count} map in config.json.
struct Scenario {
    StreetNetwork net;
    DemandModel demand;
    SimConfig config;
    std::optional<StandardDay> standard_day;
    std::vector<int> initial_bikes;  // aligned with net.stations()
};

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ScenarioError("cannot open " + p.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(p.string() + ": " + e.what());
    }
    return j;
}

inline std::vector<int> bikes_from_config(const nlohmann::json& cfg, const StreetNetwork& net) {
    const auto& jb = cfg.at("initial_bikes");
    if (!jb.is_object()) throw ScenarioError("initial_bikes must map station ids to counts");
    std::vector<int> bikes(net.stations().size(), 0);
    for (auto it = jb.begin(); it != jb.end(); ++it) {
        std::uint32_t id = 0;
        try {
            std::size_t used = 0;
            id = static_cast<std::uint32_t>(std::stoul(it.key(), &used));
            if (used != it.key().size()) throw std::invalid_argument(it.key());
        } catch (const std::exception&) {
            throw ScenarioError("initial_bikes: bad station id \"" + it.key() + "\"");
        }
        const auto idx = net.station_index_by_id(id);
        if (!idx) throw ScenarioError("initial_bikes: unknown station " + it.key());
        const int n = it.value().get<int>();
        if (n < 0 || n > net.stations()[*idx].capacity)
            throw ScenarioError("initial_bikes: station " + it.key() +
                                " count outside [0, capacity]");
        bikes[*idx] = n;
    }
    return bikes;
}

}  // namespace detail

inline Scenario load_scenario(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    for (const char* name : {"network.geojson", "demand.json", "config.json"})
        if (!fs::exists(root / name)) throw ScenarioError(dir + ": missing " + name);

    Scenario sc;
    try {
        sc.net = load_network((root / "network.geojson").string());
    } catch (const GeoJsonError& e) {
        throw ScenarioError(std::string("network.geojson: ") + e.what());
    } catch (const NetworkError& e) {
        throw ScenarioError(std::string("network.geojson: ") + e.what());
    }
    try {
        sc.demand = DemandModel::from_json(detail::read_json_file(root / "demand.json"));
    } catch (const DemandError& e) {
        throw ScenarioError(std::string("demand.json: ") + e.what());
    }
    const nlohmann::json cfg = detail::read_json_file(root / "config.json");
    sc.config = SimConfig::from_json(cfg);

    const fs::path sd_path = root / "standard_day.csv";
    if (fs::exists(sd_path)) {
        std::ifstream in(sd_path);
        try {
            sc.standard_day = read_standard_day_csv(in, sd_path.string());
        } catch (const std::exception& e) {
            throw ScenarioError(std::string("standard_day.csv: ") + e.what());
        }
        sc.initial_bikes = initial_occupancy(*sc.standard_day, sc.net);
    } else if (cfg.contains("initial_bikes")) {
        sc.initial_bikes = detail::bikes_from_config(cfg, sc.net);
    } else {
        throw ScenarioError(dir +
                            ": no initial state (need standard_day.csv or initial_bikes "
                            "in config.json)");
    }
    return sc;
}

/// Cross-checks every artifact in the directory; one human-readable finding
/// per problem, empty result means the scenario is valid.
inline std::vector<std::string> validate_scenario(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> findings;
    const fs::path root(dir);
    for (const char* name : {"network.geojson", "demand.json", "config.json"})
        if (!fs::exists(root / name)) findings.push_back(std::string("missing ") + name);
    if (!findings.empty()) return findings;

    std::optional<StreetNetwork> net;
    try {
        net = load_network((root / "network.geojson").string());
    } catch (const std::exception& e) {
        findings.push_back(std::string("network.geojson: ") + e.what());
    }

    std::optional<DemandModel> dm;
    try {
        dm = DemandModel::from_json(detail::read_json_file(root / "demand.json"));
    } catch (const std::exception& e) {
        findings.push_back(std::string("demand.json: ") + e.what());
    }

    std::optional<SimConfig> cfg;
    nlohmann::json cfg_json;
    try {
        cfg_json = detail::read_json_file(root / "config.json");
        cfg = SimConfig::from_json(cfg_json);
        cfg->validate(dm ? dm->bin_s : 300);
    } catch (const std::exception& e) {
        findings.push_back(std::string("config.json: ") + e.what());
    }

    if (net && dm) {
        for (const Station& s : net->stations())
            if (std::find(dm->station_ids.begin(), dm->station_ids.end(), s.id) ==
                dm->station_ids.end())
                findings.push_back("station " + std::to_string(s.id) +
                                   " missing from demand model");
        for (std::uint32_t id : dm->station_ids)
            if (!net->station_index_by_id(id))
                findings.push_back("demand model references unknown station " +
                                   std::to_string(id));
        for (std::uint32_t n : dm->boundary.entry_nodes) {
            if (n >= net->nodes().size()) {
                findings.push_back("demand entry node " + std::to_string(n) +
                                   " outside the network");
            } else if (std::find(net->boundary_nodes().begin(), net->boundary_nodes().end(),
                                 n) == net->boundary_nodes().end()) {
                findings.push_back("demand entry node " + std::to_string(n) +
                                   " is not a network boundary point");
            }
        }
        if (dm->boundary.entry_nodes.size() != net->boundary_nodes().size())
            findings.push_back("demand model and network disagree on boundary point count");
    }

    std::optional<StandardDay> sd;
    if (fs::exists(root / "standard_day.csv")) {
        std::ifstream in(root / "standard_day.csv");
        try {
            sd = read_standard_day_csv(in, "standard_day.csv");
        } catch (const std::exception& e) {
            findings.push_back(std::string("standard_day.csv: ") + e.what());
        }
    }
    if (sd) {
        if (net) {
            try {
                (void)initial_occupancy(*sd, *net);
            } catch (const std::exception& e) {
                findings.push_back(std::string("standard_day.csv: ") + e.what());
            }
        }
        if (dm && sd->n_bins != dm->n_bins)
            findings.push_back("standard_day.csv and demand.json disagree on bin count");
        for (double v : sd->lf)
            if (!(v >= 0.0 && v <= 1.0)) {
                findings.push_back("standard_day.csv: load factor outside [0, 1]");
                break;
            }
    } else if (cfg && net) {
        if (cfg_json.contains("initial_bikes")) {
            try {
                (void)detail::bikes_from_config(cfg_json, *net);
            } catch (const std::exception& e) {
                findings.push_back(std::string("config.json: ") + e.what());
            }
        } else {
            findings.push_back(
                "no initial state: provide standard_day.csv or initial_bikes in config.json");
        }
    }
    return findings;
}

/// Parameters of the generated commuter-district scenario: a square grid
/// street network with residential docks in the west half and workplaces in
/// the east, so the day has an east-bound morning tide and a west-bound
/// evening one. asymmetry 0 flattens the day completely.
struct SyntheticSpec {
    int grid_n = 12;         // nodes per side
    double side_m = 2000.0;  // district side length
    int n_stations = 40;     // split evenly across the two halves
    double asymmetry = 1.0;
    double sigma = 10.0;  // kernel concentration baked into demand.json
    std::uint64_t seed = 1;
    int n_bins = 288;
    int bin_s = 300;
    int cap_min = 14;
    int cap_max = 24;
    double cell_m = 50.0;
};

inline StreetNetwork synthetic_network(const SyntheticSpec& sp) {
    if (sp.grid_n < 4) throw ScenarioError("grid_n must be >= 4");
    if (sp.cap_min < 1 || sp.cap_max < sp.cap_min)
        throw ScenarioError("capacity range invalid");
    StreetNetwork net;
    const int n = sp.grid_n;
    const double step = sp.side_m / (n - 1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) net.add_node({i * step, j * step});
    auto at = [n](int i, int j) { return static_cast<NodeId>(j * n + i); };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (i + 1 < n) net.add_edge(at(i, j), at(i + 1, j), step);
            if (j + 1 < n) net.add_edge(at(i, j), at(i, j + 1), step);
        }

    // two entries per side, away from the corners
    std::vector<NodeId> entries;
    for (int k : {n / 3, (2 * n) / 3}) {
        entries.push_back(at(k, 0));
        entries.push_back(at(k, n - 1));
        entries.push_back(at(0, k));
        entries.push_back(at(n - 1, k));
    }
    for (NodeId e : entries) net.add_boundary_point(e);

    std::vector<NodeId> west, east;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const NodeId v = at(i, j);
            if (std::find(entries.begin(), entries.end(), v) != entries.end()) continue;
            (i < n / 2 ? west : east).push_back(v);
        }
    const int w_count = sp.n_stations / 2;
    const int e_count = sp.n_stations - w_count;
    if (w_count > static_cast<int>(west.size()) || e_count > static_cast<int>(east.size()))
        throw ScenarioError("n_stations too large for this grid");

    Rng rng(derive_seed(sp.seed, 1));
    std::vector<NodeId> chosen;
    auto draw = [&](std::vector<NodeId>& pool, int count) {
        for (int k = 0; k < count; ++k) {
            const std::size_t pick = rng.uniform_below(pool.size());
            chosen.push_back(pool[pick]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    };
    draw(west, w_count);
    draw(east, e_count);
    std::sort(chosen.begin(), chosen.end());
    std::uint32_t next_id = 1;
    for (NodeId v : chosen) {
        const int cap =
            sp.cap_min + static_cast<int>(rng.uniform_below(
                             static_cast<std::uint64_t>(sp.cap_max - sp.cap_min + 1)));
        net.add_station(next_id++, v, cap);
    }

    net.set_bounds(
        Polygon{{{0, 0}, {sp.side_m, 0}, {sp.side_m, sp.side_m}, {0, sp.side_m}}});
    net.finalize();
    return net;
}

inline StandardDay synthetic_standard_day(const SyntheticSpec& sp, const StreetNetwork& net) {
    StandardDay sd;
    for (const Station& s : net.stations()) sd.station_ids.push_back(s.id);
    sd.n_bins = sp.n_bins;
    sd.lf.assign(net.stations().size() * static_cast<std::size_t>(sp.n_bins), 0.5);

    // 0 overnight, 1 midday; ramps 06:00-10:00 and 16:00-21:00 on the
    // 03:00-anchored day
    auto phase = [&](int t) {
        const double u = static_cast<double>(t) / sp.n_bins;
        if (u <= 1.0 / 8.0) return 0.0;
        if (u < 7.0 / 24.0) return (u - 1.0 / 8.0) * 6.0;
        if (u <= 13.0 / 24.0) return 1.0;
        if (u < 3.0 / 4.0) return (3.0 / 4.0 - u) * 24.0 / 5.0;
        return 0.0;
    };

    Rng rng(derive_seed(sp.seed, 2));
    for (std::size_t s = 0; s < net.stations().size(); ++s) {
        const double amp = 0.85 + 0.15 * rng.uniform();
        const bool west = net.nodes()[net.stations()[s].node].pos.x < sp.side_m / 2;
        const double swing = sp.asymmetry * 0.45 * amp * (west ? 1.0 : -1.0);
        for (int t = 0; t < sp.n_bins; ++t) {
            const double lf = 0.5 + swing * (1.0 - 2.0 * phase(t));
            sd.lf[s * sp.n_bins + t] = std::clamp(lf, 0.02, 0.98);
        }
    }
    return sd;
}

/// Writes the four scenario files and returns the loaded result.
inline Scenario generate_synthetic(const SyntheticSpec& sp, const std::string& out_dir) {
    if (!(sp.asymmetry >= 0.0 && sp.asymmetry <= 1.0))
        throw ScenarioError("asymmetry must be in [0, 1]");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path root(out_dir);

    auto dump = [&](const fs::path& p, const nlohmann::json& j) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ScenarioError("cannot write " + p.string());
        out << j.dump(2) << '\n';
    };

    // Write the network first and build everything else against the RELOADED
    // copy: GeoJSON loading assigns node ids in feature order, so ids recorded
    // in demand.json must come from the file's numbering, not the builder's.
    {
        const StreetNetwork built = synthetic_network(sp);
        std::vector<Point> pts;
        for (const Node& nd : built.nodes()) pts.push_back(nd.pos);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
        for (const auto& e : built.edges()) edges.emplace_back(e.a, e.b);
        std::vector<std::uint32_t> entries(built.boundary_nodes().begin(),
                                           built.boundary_nodes().end());
        dump(root / "network.geojson",
             geojson_document(pts, edges, built.stations(), entries, built.bounds()));
    }
    const StreetNetwork net = load_network((root / "network.geojson").string());

    const StandardDay sd = synthetic_standard_day(sp, net);
    SimConfig cfg;
    cfg.sigma = sp.sigma;
    cfg.seed = sp.seed;
    cfg.validate(sp.bin_s);
    const DemandModel dm =
        build_demand_model(sd, net, sp.sigma, cfg.mean_speed_mps(), sp.bin_s, sp.cell_m);

    dump(root / "demand.json", dm.to_json());
    dump(root / "config.json", cfg.to_json());
    {
        std::ofstream out(root / "standard_day.csv", std::ios::binary);
        if (!out) throw ScenarioError("cannot write standard_day.csv");
        write_standard_day_csv(out, sd);
    }
    return load_scenario(out_dir);
}

}  // namespace bikesim
