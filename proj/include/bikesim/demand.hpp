#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bikesim/encoding.hpp"
#include "bikesim/geometry.hpp"
#include "bikesim/ingest.hpp"
#include "bikesim/network.hpp"
#include "bikesim/rng.hpp"

namespace bikesim {

struct DemandError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KernelSpec {
    double sigma = 50.0;  // kernel size parameter; bandwidth = diameter / (2 sigma)

    double bandwidth(double diameter_m) const {
        if (sigma <= 0.0) throw DemandError("sigma must be positive");
        return diameter_m / (2.0 * sigma);
    }
};

/// Regular lattice over the district bounds. Cells whose center falls outside
/// the bounds polygon carry no probability mass.
struct GridSpec {
    double x0 = 0, y0 = 0;
    double cell_m = 50.0;
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> inside;  // row-major [gy * nx + gx]
    int n_inside = 0;

    int n_cells() const { return nx * ny; }
    Point cell_center(int c) const {
        const int gx = c % nx, gy = c / nx;
        return {x0 + (gx + 0.5) * cell_m, y0 + (gy + 0.5) * cell_m};
    }
    /// Cell containing p, clamped onto the lattice.
    int cell_of(Point p) const {
        int gx = static_cast<int>(std::floor((p.x - x0) / cell_m));
        int gy = static_cast<int>(std::floor((p.y - y0) / cell_m));
        gx = std::clamp(gx, 0, nx - 1);
        gy = std::clamp(gy, 0, ny - 1);
        return gy * nx + gx;
    }
};

inline GridSpec make_grid(const Polygon& bounds, double cell_m = 50.0) {
    if (cell_m <= 0.0) throw DemandError("grid cell size must be positive");
    if (bounds.vertices.size() < 3) throw DemandError("district bounds polygon required");
    const auto bb = bounding_box(bounds);
    GridSpec g;
    g.cell_m = cell_m;
    g.x0 = bb.min_x;
    g.y0 = bb.min_y;
    g.nx = std::max(1, static_cast<int>(std::ceil((bb.max_x - bb.min_x) / cell_m)));
    g.ny = std::max(1, static_cast<int>(std::ceil((bb.max_y - bb.min_y) / cell_m)));
    g.inside.assign(static_cast<std::size_t>(g.n_cells()), 0);
    for (int c = 0; c < g.n_cells(); ++c)
        if (point_in_polygon(bounds, g.cell_center(c))) {
            g.inside[c] = 1;
            ++g.n_inside;
        }
    if (g.n_inside == 0) {  // degenerate polygon smaller than one cell
        Point centroid{0, 0};
        for (const Point& v : bounds.vertices) {
            centroid.x += v.x / bounds.vertices.size();
            centroid.y += v.y / bounds.vertices.size();
        }
        g.inside[g.cell_of(centroid)] = 1;
        g.n_inside = 1;
    }
    return g;
}

/// One inferred bike movement: a departure from or an arrival at a station.
struct DemandEvent {
    std::size_t station = 0;  // station index in the network
    int bin = 0;
    Point pos;
};

struct InferredEvents {
    std::vector<DemandEvent> departures;
    std::vector<DemandEvent> arrivals;
    int n_bins = 0;
};

/// Turns standard-day load-factor deltas into integer bike movements.
/// The fractional remainder is carried per station so totals do not drift:
/// cumulative rounding is half-away-from-zero.
inline InferredEvents infer_events(const StandardDay& sd, const StreetNetwork& net) {
    InferredEvents out;
    out.n_bins = sd.n_bins;
    for (std::size_t s = 0; s < sd.station_ids.size(); ++s) {
        const auto maybe_idx = net.station_index_by_id(sd.station_ids[s]);
        if (!maybe_idx)
            throw DemandError("standard day references unknown station " +
                              std::to_string(sd.station_ids[s]));
        const std::size_t idx = *maybe_idx;
        const int cap = net.stations()[idx].capacity;
        const Point pos = net.nodes()[net.stations()[idx].node].pos;
        double carry = 0.0;
        for (int t = 1; t < sd.n_bins; ++t) {
            const double raw = (sd.at(s, t) - sd.at(s, t - 1)) * cap + carry;
            const long long n = std::llround(raw);  // half away from zero
            carry = raw - static_cast<double>(n);
            auto& list = n > 0 ? out.arrivals : out.departures;
            for (long long k = 0; k < std::llabs(n); ++k)
                list.push_back(DemandEvent{idx, t, pos});
        }
    }
    return out;
}

struct SpatioTemporalField {
    GridSpec grid;
    int n_bins = 0;
    std::vector<double> w;    // bin-major [bin * n_cells + cell], sums to 1 per bin
    std::vector<double> cdf;  // same layout, running sum per bin

    double at(int bin, int cell) const {
        return w[static_cast<std::size_t>(bin) * grid.n_cells() + cell];
    }

    void build_cdf() {
        cdf.resize(w.size());
        const int nc = grid.n_cells();
        for (int t = 0; t < n_bins; ++t) {
            double run = 0.0;
            for (int c = 0; c < nc; ++c) {
                run += w[static_cast<std::size_t>(t) * nc + c];
                cdf[static_cast<std::size_t>(t) * nc + c] = run;
            }
        }
    }

    /// Cell per the bin's distribution, then uniform jitter within the cell.
    Point sample_point(int bin, Rng& rng) const {
        const int nc = grid.n_cells();
        const std::size_t c = rng.pick_cdf(cdf.data() + static_cast<std::size_t>(bin) * nc,
                                           static_cast<std::size_t>(nc));
        const Point center = grid.cell_center(static_cast<int>(c));
        return {center.x + (rng.uniform() - 0.5) * grid.cell_m,
                center.y + (rng.uniform() - 0.5) * grid.cell_m};
    }
};

/// Gaussian multi-kernel estimate of the per-bin spatial distribution.
/// Bins without events get the uniform distribution over in-bounds cells.
inline SpatioTemporalField estimate_field(const std::vector<DemandEvent>& events, int n_bins,
                                          const GridSpec& grid, KernelSpec spec,
                                          double diameter_m) {
    const double bw = spec.bandwidth(diameter_m);
    const double inv2bw2 = 1.0 / (2.0 * bw * bw);
    const int nc = grid.n_cells();

    SpatioTemporalField f;
    f.grid = grid;
    f.n_bins = n_bins;
    f.w.assign(static_cast<std::size_t>(n_bins) * nc, 0.0);

    for (const auto& e : events) {
        if (e.bin < 0 || e.bin >= n_bins) throw DemandError("event bin out of range");
        double* row = f.w.data() + static_cast<std::size_t>(e.bin) * nc;
        for (int c = 0; c < nc; ++c) {
            if (!grid.inside[c]) continue;
            const Point cc = grid.cell_center(c);
            const double dx = cc.x - e.pos.x, dy = cc.y - e.pos.y;
            row[c] += std::exp(-(dx * dx + dy * dy) * inv2bw2);
        }
    }

    // fallback cell mass for bins whose kernels all underflowed
    std::vector<int> fallback(n_bins, -1);
    for (const auto& e : events)
        if (fallback[e.bin] < 0) fallback[e.bin] = grid.cell_of(e.pos);

    for (int t = 0; t < n_bins; ++t) {
        double* row = f.w.data() + static_cast<std::size_t>(t) * nc;
        double total = 0.0;
        for (int c = 0; c < nc; ++c) total += row[c];
        if (total > 0.0) {
            for (int c = 0; c < nc; ++c) row[c] /= total;
        } else if (fallback[t] >= 0) {
            row[fallback[t]] = 1.0;
        } else {
            const double u = 1.0 / grid.n_inside;
            for (int c = 0; c < nc; ++c) row[c] = grid.inside[c] ? u : 0.0;
        }
    }
    f.build_cdf();
    return f;
}

/// Binomial boundary laws. N_I: one trial per inferred internal arrival is
/// credited to every entry point at the bin shifted back by the mean ride
/// time from that entry, success probability 1/|I|. N_D: one trial per
/// inferred departure at its own bin, success probability 1 (deterministic).
struct BoundaryProcess {
    std::vector<std::uint32_t> entry_nodes;
    int n_bins = 0;
    std::vector<std::int32_t> ni_trials;  // bin-major [bin * |I| + entry]
    std::vector<std::int32_t> nd_trials;  // per bin
    int clamped_trials = 0;               // trials whose shifted bin fell before day start

    double entry_prob() const { return 1.0 / static_cast<double>(entry_nodes.size()); }
    int ni(int bin, std::size_t entry) const {
        return ni_trials[static_cast<std::size_t>(bin) * entry_nodes.size() + entry];
    }

    /// Number of bikes entering per entry point this bin.
    std::vector<int> sample_entries(int bin, Rng& rng) const {
        std::vector<int> out(entry_nodes.size(), 0);
        const double p = entry_prob();
        for (std::size_t i = 0; i < entry_nodes.size(); ++i)
            out[i] = rng.binomial(ni(bin, i), p);
        return out;
    }
    int sample_departures(int bin, Rng& rng) const {
        return rng.binomial(nd_trials[bin], 1.0);
    }
};

inline BoundaryProcess build_boundary_processes(const InferredEvents& events,
                                                const StreetNetwork& net, double mean_speed_mps,
                                                int bin_s) {
    const auto& entries = net.boundary_nodes();
    if (entries.empty()) throw DemandError("network has no boundary entry points");
    if (mean_speed_mps <= 0.0) throw DemandError("mean speed must be positive");

    BoundaryProcess bp;
    bp.entry_nodes = entries;
    bp.n_bins = events.n_bins;
    bp.ni_trials.assign(static_cast<std::size_t>(bp.n_bins) * entries.size(), 0);
    bp.nd_trials.assign(static_cast<std::size_t>(bp.n_bins), 0);

    for (const auto& a : events.arrivals) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const double d = net.station_to_node_distance(a.station, entries[i]);
            const int offset =
                static_cast<int>(std::llround(d / mean_speed_mps / static_cast<double>(bin_s)));
            int target = a.bin - offset;
            if (target < 0) {
                target = 0;
                ++bp.clamped_trials;
            }
            ++bp.ni_trials[static_cast<std::size_t>(target) * entries.size() + i];
        }
    }
    for (const auto& d : events.departures) ++bp.nd_trials[d.bin];
    return bp;
}

/// Everything the simulator draws travel demand from, immutable once built.
struct DemandModel {
    static constexpr int kFormatVersion = 1;

    int bin_s = 300;
    int n_bins = 288;
    double sigma = 50.0;
    double diameter_m = 0.0;
    std::vector<std::uint32_t> station_ids;  // stations the model was fitted on
    SpatioTemporalField origin;       // departures
    SpatioTemporalField destination;  // arrivals
    BoundaryProcess boundary;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = kFormatVersion;
        j["bin_s"] = bin_s;
        j["n_bins"] = n_bins;
        j["sigma"] = sigma;
        j["diameter_m"] = diameter_m;
        j["station_ids"] = station_ids;
        j["grid"] = {{"x0", origin.grid.x0},     {"y0", origin.grid.y0},
                     {"cell_m", origin.grid.cell_m}, {"nx", origin.grid.nx},
                     {"ny", origin.grid.ny}};
        std::vector<std::int32_t> mask(origin.grid.inside.begin(), origin.grid.inside.end());
        j["grid"]["inside"] = ints_to_base64(mask);
        j["origin_field"] = doubles_to_base64(origin.w);
        j["destination_field"] = doubles_to_base64(destination.w);
        j["entry_nodes"] = boundary.entry_nodes;
        j["ni_trials"] = ints_to_base64(boundary.ni_trials);
        j["nd_trials"] = ints_to_base64(boundary.nd_trials);
        j["clamped_trials"] = boundary.clamped_trials;
        return j;
    }

    static DemandModel from_json(const nlohmann::json& j) {
        if (!j.contains("version")) throw DemandError("demand model: missing version field");
        if (j.at("version").get<int>() != kFormatVersion)
            throw DemandError("demand model: unsupported version");
        DemandModel m;
        m.bin_s = j.at("bin_s").get<int>();
        m.n_bins = j.at("n_bins").get<int>();
        m.sigma = j.at("sigma").get<double>();
        m.diameter_m = j.at("diameter_m").get<double>();
        m.station_ids = j.at("station_ids").get<std::vector<std::uint32_t>>();

        GridSpec g;
        const auto& jg = j.at("grid");
        g.x0 = jg.at("x0").get<double>();
        g.y0 = jg.at("y0").get<double>();
        g.cell_m = jg.at("cell_m").get<double>();
        g.nx = jg.at("nx").get<int>();
        g.ny = jg.at("ny").get<int>();
        const auto mask = ints_from_base64(jg.at("inside").get<std::string>());
        g.inside.assign(mask.begin(), mask.end());
        g.n_inside = static_cast<int>(std::count(g.inside.begin(), g.inside.end(), 1));

        m.origin.grid = g;
        m.origin.n_bins = m.n_bins;
        m.origin.w = doubles_from_base64(j.at("origin_field").get<std::string>());
        m.origin.build_cdf();
        m.destination.grid = g;
        m.destination.n_bins = m.n_bins;
        m.destination.w = doubles_from_base64(j.at("destination_field").get<std::string>());
        m.destination.build_cdf();

        m.boundary.entry_nodes = j.at("entry_nodes").get<std::vector<std::uint32_t>>();
        m.boundary.n_bins = m.n_bins;
        m.boundary.ni_trials = ints_from_base64(j.at("ni_trials").get<std::string>());
        m.boundary.nd_trials = ints_from_base64(j.at("nd_trials").get<std::string>());
        m.boundary.clamped_trials = j.at("clamped_trials").get<int>();

        const std::size_t nc = static_cast<std::size_t>(g.nx) * g.ny;
        if (m.origin.w.size() != nc * m.n_bins || m.destination.w.size() != nc * m.n_bins)
            throw DemandError("demand model: field size mismatch");
        if (m.boundary.ni_trials.size() != m.boundary.entry_nodes.size() * m.n_bins)
            throw DemandError("demand model: boundary trials size mismatch");
        return m;
    }
};

/// Full construction pipeline from a standard day.
inline DemandModel build_demand_model(const StandardDay& sd, const StreetNetwork& net,
                                      double sigma, double mean_speed_mps, int bin_s = 300,
                                      double cell_m = 50.0) {
    DemandModel m;
    m.bin_s = bin_s;
    m.n_bins = sd.n_bins;
    m.sigma = sigma;
    m.diameter_m = diameter(net.bounds());
    m.station_ids = sd.station_ids;
    const GridSpec grid = make_grid(net.bounds(), cell_m);
    const auto events = infer_events(sd, net);
    const KernelSpec spec{sigma};
    m.origin = estimate_field(events.departures, sd.n_bins, grid, spec, m.diameter_m);
    m.destination = estimate_field(events.arrivals, sd.n_bins, grid, spec, m.diameter_m);
    m.boundary = build_boundary_processes(events, net, mean_speed_mps, bin_s);
    return m;
}

}  // namespace bikesim
