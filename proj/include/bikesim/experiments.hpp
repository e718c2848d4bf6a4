#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bikesim/indicators.hpp"
#include "bikesim/scenario.hpp"
#include "bikesim/simcore.hpp"
#include "bikesim/stats.hpp"
#include "bikesim/version.hpp"

namespace bikesim {

struct ExperimentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every calibration grid point fell into the degenerate-kernel region.
struct AllDegenerate : ExperimentError {
    using ExperimentError::ExperimentError;
};

/// Replications for a 95% CI of the given total length, measured in sample
/// standard deviations: n = ceil((2 * 1.96 / len)^2). The default length of
/// half a standard deviation gives 62.
inline int required_replications(double target_ci_len_in_sigmas = 0.5) {
    if (!(target_ci_len_in_sigmas > 0.0))
        throw std::invalid_argument("target CI length must be positive");
    const double root = 2.0 * 1.96 / target_ci_len_in_sigmas;
    return static_cast<int>(std::ceil(root * root));
}

struct PointParams {
    double r = 400.0;
    double p_info = 0.5;
    double sigma = 50.0;
};

struct IndicatorStat {
    double mean = 0.0;
    double std = 0.0;
    double ci = 0.0;  // 1.96 * std / sqrt(n)
};

struct PointSummary {
    PointParams params;
    int n = 0;
    IndicatorStat A, D_tot, MSE;
    std::vector<AggregateIndicators> raw;  // per replication, index order
};

struct RunPointOptions {
    int jobs = 1;
    const DemandModel* demand = nullptr;     // overrides the scenario's model
    const StandardDay* reference = nullptr;  // MSE target + initial state
    std::vector<IndicatorSeries>* series_out = nullptr;  // per replication
    // per replication: load factors sampled at bin boundaries, station-major
    std::vector<std::vector<double>>* lf_samples_out = nullptr;
};

namespace detail {

inline IndicatorStat summarize(const std::vector<double>& v) {
    return {mean(v), sample_std(v), ci95_half_width(v)};
}

inline DemandModel refit_demand(const Scenario& sc, const StandardDay& day, double sigma) {
    return build_demand_model(day, sc.net, sigma, sc.config.mean_speed_mps(),
                              sc.demand.bin_s, sc.demand.origin.grid.cell_m);
}

/// MSE of one station-major load-factor trajectory (bins at boundaries)
/// against a reference day; same summation order as indicators' mse().
inline double mse_against(const std::vector<double>& lf, const StreetNetwork& net,
                          const StandardDay& real) {
    const std::size_t n = net.stations().size();
    const std::size_t bins = static_cast<std::size_t>(real.n_bins);
    if (lf.size() != n * bins)
        throw std::invalid_argument("mse_against: trajectory shape mismatch");
    std::vector<std::size_t> row_of(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto it = std::find(real.station_ids.begin(), real.station_ids.end(),
                                  net.stations()[s].id);
        if (it == real.station_ids.end())
            throw std::invalid_argument("mse_against: reference day missing station " +
                                        std::to_string(net.stations()[s].id));
        row_of[s] = static_cast<std::size_t>(it - real.station_ids.begin());
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < bins; ++b)
        for (std::size_t s = 0; s < n; ++s) {
            const double diff = lf[s * bins + b] - real.at(row_of[s], static_cast<int>(b));
            sum += diff * diff;
        }
    return sum / (static_cast<double>(n) * static_cast<double>(bins));
}

}  // namespace detail

/// n replications at one parameter triple; seed_i = derive_seed(base_seed, i).
/// The reduction runs in replication-index order, so the result does not
/// depend on how many worker threads executed the runs.
inline PointSummary run_point(const Scenario& sc, const PointParams& p, int n,
                              std::uint64_t base_seed, const RunPointOptions& opts = {}) {
    if (n < 1) throw std::invalid_argument("replications must be >= 1");

    std::optional<DemandModel> rebuilt;
    const DemandModel* dm = opts.demand;
    if (!dm) {
        if (p.sigma == sc.demand.sigma) {
            dm = &sc.demand;
        } else {
            if (!sc.standard_day)
                throw ExperimentError(
                    "sigma differs from the fitted demand model and the scenario has "
                    "no standard day to refit from");
            rebuilt = detail::refit_demand(sc, *sc.standard_day, p.sigma);
            dm = &*rebuilt;
        }
    }
    const StandardDay* ref =
        opts.reference ? opts.reference
                       : (sc.standard_day ? &*sc.standard_day : nullptr);
    const std::vector<int> init =
        opts.reference ? initial_occupancy(*opts.reference, sc.net) : sc.initial_bikes;
    const int tpb = dm->bin_s / sc.config.tau_s;

    std::vector<AggregateIndicators> raw(n);
    std::vector<IndicatorSeries> series(opts.series_out ? n : 0);
    std::vector<std::vector<double>> samples(opts.lf_samples_out ? n : 0);
    auto one = [&](int i) {
        SimConfig cfg = sc.config;
        cfg.walk_radius_m = p.r;
        cfg.p_info = p.p_info;
        cfg.sigma = p.sigma;
        cfg.seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
        const SimResult res = run_day(sc.net, *dm, cfg, init);
        AggregateIndicators ind;
        ind.A = res.travels.empty() ? 0.0 : adverse_rate(res.travels);
        ind.D_tot = detour_ratio(res.travels).d_tot;
        ind.MSE = ref ? mse(res, sc.net, *ref, tpb) : std::numeric_limits<double>::quiet_NaN();
        raw[static_cast<std::size_t>(i)] = ind;
        if (opts.series_out) series[static_cast<std::size_t>(i)] = indicator_series(res, sc.net);
        if (opts.lf_samples_out) {
            const std::size_t n_st = sc.net.stations().size();
            const std::size_t bins = static_cast<std::size_t>(res.n_ticks / tpb);
            auto& row = samples[static_cast<std::size_t>(i)];
            row.resize(n_st * bins);
            for (std::size_t s = 0; s < n_st; ++s)
                for (std::size_t b = 0; b < bins; ++b)
                    row[s * bins + b] = static_cast<double>(res.occ(static_cast<int>(b) * tpb, s)) /
                                        sc.net.stations()[s].capacity;
        }
    };

    const int jobs = std::min(std::max(1, opts.jobs), n);
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) one(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (int i; (i = next.fetch_add(1)) < n;) one(i);
            });
        for (auto& th : pool) th.join();
    }

    PointSummary out;
    out.params = p;
    out.n = n;
    std::vector<double> a, d, m;
    a.reserve(n);
    d.reserve(n);
    m.reserve(n);
    for (const auto& ind : raw) {
        a.push_back(ind.A);
        d.push_back(ind.D_tot);
        m.push_back(ind.MSE);
    }
    out.A = detail::summarize(a);
    out.D_tot = detail::summarize(d);
    out.MSE = detail::summarize(m);
    out.raw = std::move(raw);
    if (opts.series_out) *opts.series_out = std::move(series);
    if (opts.lf_samples_out) *opts.lf_samples_out = std::move(samples);
    return out;
}

// ---------------------------------------------------------------------------
// calibration

struct CalibrationCell {
    double r = 0, sigma = 0, p_info = 0;
    int n = 0;
    double mse = 0;  // MSE of the across-replications mean trajectory (the objective)
    double mse_mean = 0, mse_std = 0, mse_ci = 0;  // per-replication MSE stats
    bool excluded = false;  // kernel bandwidth exceeds the district diameter
};

struct CalibrationResult {
    struct Best {
        double r = 0, sigma = 0, p_info = 0, mse = 0;
    };
    std::vector<Best> best_per_r;          // one entry per requested radius
    std::vector<CalibrationCell> surface;  // r-major, then sigma, then p_info
};

/// Grid search over (sigma, p_info) at each fixed walking radius. The demand
/// model is refitted to `real` once per sigma; simulations start from the real
/// day's initial state. The objective in each cell is the MSE between the
/// mean simulated trajectory (load factors averaged over the n replications)
/// and the real day: averaging strips the per-run occupancy noise that would
/// otherwise swamp the parameter signal. Per-replication MSE stats are kept
/// alongside. All cells use common random numbers (replication i draws seed
/// derive_seed(base_seed, i) in every cell), so cell-to-cell comparisons are
/// paired: runs that share a seed see the same demand realization and differ
/// only through the parameters. The argmin skips the degenerate region where
/// the kernel bandwidth diameter/(2*sigma) exceeds the district diameter
/// (sigma < 1/2); ties prefer smaller sigma, then smaller p_info.
inline CalibrationResult calibrate(const Scenario& sc, const StandardDay& real,
                                   const std::vector<double>& sigma_grid,
                                   const std::vector<double>& p_info_grid,
                                   const std::vector<double>& r_list, int n,
                                   std::uint64_t base_seed, int jobs = 1) {
    if (sigma_grid.empty() || p_info_grid.empty() || r_list.empty())
        throw std::invalid_argument("calibration grids must be non-empty");
    if (n < 1) throw std::invalid_argument("replications must be >= 1");

    std::vector<DemandModel> models;
    models.reserve(sigma_grid.size());
    for (double s : sigma_grid) models.push_back(detail::refit_demand(sc, real, s));

    CalibrationResult out;
    for (double r : r_list) {
        std::optional<CalibrationResult::Best> best;
        for (std::size_t si = 0; si < sigma_grid.size(); ++si) {
            const double sigma = sigma_grid[si];
            const bool excluded = KernelSpec{sigma}.bandwidth(sc.demand.diameter_m) >
                                  sc.demand.diameter_m;
            for (double p : p_info_grid) {
                std::vector<std::vector<double>> lf_samples;
                RunPointOptions opts;
                opts.jobs = jobs;
                opts.demand = &models[si];
                opts.reference = &real;
                opts.lf_samples_out = &lf_samples;
                const auto summary = run_point(sc, {r, p, sigma}, n, base_seed, opts);
                std::vector<double> mean_lf(lf_samples.front().size(), 0.0);
                for (const auto& rep : lf_samples)
                    for (std::size_t k = 0; k < mean_lf.size(); ++k) mean_lf[k] += rep[k];
                for (double& v : mean_lf) v /= static_cast<double>(n);

                CalibrationCell cell;
                cell.r = r;
                cell.sigma = sigma;
                cell.p_info = p;
                cell.n = n;
                cell.mse = detail::mse_against(mean_lf, sc.net, real);
                cell.mse_mean = summary.MSE.mean;
                cell.mse_std = summary.MSE.std;
                cell.mse_ci = summary.MSE.ci;
                cell.excluded = excluded;
                out.surface.push_back(cell);
                if (excluded) continue;
                if (!best || cell.mse < best->mse ||
                    (cell.mse == best->mse &&
                     (sigma < best->sigma || (sigma == best->sigma && p < best->p_info))))
                    best = CalibrationResult::Best{r, sigma, p, cell.mse};
            }
        }
        if (!best)
            throw AllDegenerate(
                "every calibration grid point lies in the degenerate-kernel region");
        out.best_per_r.push_back(*best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// sweeps

struct SweepSpec {
    std::string name = "sweep";
    std::string scenario_dir;
    std::vector<double> radius_m;
    std::vector<double> p_info;
    std::vector<double> sigma;
    int replications = 1;
    std::uint64_t base_seed = 1;
    std::string out_root = "results";

    void validate() const {
        if (name.empty()) throw ExperimentError("sweep name must not be empty");
        if (radius_m.empty() || p_info.empty() || sigma.empty())
            throw ExperimentError("sweep axes must be non-empty");
        if (replications < 1) throw ExperimentError("replications must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"name", name},           {"scenario", scenario_dir},
                {"radius_m", radius_m},   {"p_info", p_info},
                {"sigma", sigma},         {"replications", replications},
                {"base_seed", base_seed}, {"out_root", out_root}};
    }

    static SweepSpec from_json(const nlohmann::json& j) {
        SweepSpec s;
        s.name = j.value("name", s.name);
        s.scenario_dir = j.at("scenario").get<std::string>();
        s.radius_m = j.at("radius_m").get<std::vector<double>>();
        s.p_info = j.at("p_info").get<std::vector<double>>();
        s.sigma = j.at("sigma").get<std::vector<double>>();
        s.replications = j.value("replications", s.replications);
        s.base_seed = j.value("base_seed", s.base_seed);
        s.out_root = j.value("out_root", s.out_root);
        s.validate();
        return s;
    }
};

struct SweepGroupReport {
    double r = 0, sigma = 0;
    double spearman_A_pinfo = std::numeric_limits<double>::quiet_NaN();
    // smallest p_info achieving >= 80% of the group's total drop in mean A
    std::optional<double> threshold_p_info;
};

struct SweepResult {
    std::filesystem::path out_dir;
    std::vector<PointSummary> points;  // r-major, then sigma, then p_info
    std::vector<SweepGroupReport> groups;
};

namespace detail {

inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string point_tag(const PointParams& p) {
    return "r" + format_g(p.r) + "_p" + format_g(p.p_info) + "_s" + format_g(p.sigma);
}

inline std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string content_hash(const std::vector<std::filesystem::path>& files) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64 offset basis
    for (const auto& p : files) {
        std::ifstream in(p, std::ios::binary);
        if (!in) continue;
        char buf[1 << 16];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
            h = fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
    }
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace detail

/// Runs the whole grid and writes the results directory:
///   <out_root>/<name>/points.csv    per-point summaries (mean, std, 95% CI)
///   <out_root>/<name>/surface.csv   raw per-replication indicator rows
///   <out_root>/<name>/series/<point>/<rep>.csv   h(t), mean-load curves
///   <out_root>/<name>/meta.json     spec echo, versions, scenario hash
inline SweepResult run_sweep(const SweepSpec& spec, const Scenario& sc, int jobs = 1) {
    spec.validate();
    namespace fs = std::filesystem;
    SweepResult out;
    out.out_dir = fs::path(spec.out_root) / spec.name;
    fs::remove_all(out.out_dir);  // stale points from an older grid must not linger
    fs::create_directories(out.out_dir / "series");

    std::ofstream points_csv(out.out_dir / "points.csv", std::ios::binary);
    std::ofstream surface_csv(out.out_dir / "surface.csv", std::ios::binary);
    if (!points_csv || !surface_csv)
        throw ExperimentError("cannot write into " + out.out_dir.string());
    points_csv << "r,p_info,sigma,n,A_mean,A_std,A_ci,D_tot_mean,D_tot_std,D_tot_ci,"
                  "MSE_mean,MSE_std,MSE_ci,spearman_A_pinfo\n";
    write_indicator_header(surface_csv);

    // demand refits are shared across radii: one per distinct sigma
    std::vector<std::optional<DemandModel>> models(spec.sigma.size());
    for (std::size_t si = 0; si < spec.sigma.size(); ++si)
        if (spec.sigma[si] != sc.demand.sigma) {
            if (!sc.standard_day)
                throw ExperimentError(
                    "sweep sigma axis needs a scenario standard day to refit from");
            models[si] = detail::refit_demand(sc, *sc.standard_day, spec.sigma[si]);
        }

    std::uint64_t point_index = 0;
    for (double r : spec.radius_m) {
        for (std::size_t si = 0; si < spec.sigma.size(); ++si) {
            const double sigma = spec.sigma[si];
            SweepGroupReport group;
            group.r = r;
            group.sigma = sigma;
            std::vector<double> group_p, group_a;
            for (double p : spec.p_info) {
                const PointParams params{r, p, sigma};
                const std::uint64_t point_seed = derive_seed(spec.base_seed, point_index++);
                std::vector<IndicatorSeries> series;
                RunPointOptions opts;
                opts.jobs = jobs;
                if (models[si]) opts.demand = &*models[si];
                opts.series_out = &series;
                PointSummary s = run_point(sc, params, spec.replications, point_seed, opts);

                const std::string tag = detail::point_tag(params);
                const fs::path series_dir = out.out_dir / "series" / tag;
                fs::create_directories(series_dir);
                for (int i = 0; i < s.n; ++i) {
                    std::ofstream sf(series_dir / (std::to_string(i) + ".csv"),
                                     std::ios::binary);
                    write_series_csv(sf, series[static_cast<std::size_t>(i)]);
                    write_indicator_row(surface_csv, tag + "#" + std::to_string(i),
                                        derive_seed(point_seed, static_cast<std::uint64_t>(i)),
                                        params.r, params.p_info, params.sigma,
                                        s.raw[static_cast<std::size_t>(i)]);
                }
                group_p.push_back(p);
                group_a.push_back(s.A.mean);
                out.points.push_back(std::move(s));
            }
            group.spearman_A_pinfo = spearman(group_p, group_a);
            if (group_a.size() >= 2) {
                std::vector<std::size_t> by_p(group_p.size());
                std::iota(by_p.begin(), by_p.end(), std::size_t{0});
                std::sort(by_p.begin(), by_p.end(),
                          [&](std::size_t a, std::size_t b) { return group_p[a] < group_p[b]; });
                const double lowest = group_a[by_p.front()];
                const double total = lowest - group_a[by_p.back()];
                if (total > 0.0) {
                    for (std::size_t i : by_p)
                        if (lowest - group_a[i] >= 0.8 * total) {
                            group.threshold_p_info = group_p[i];
                            break;
                        }
                }
            }
            out.groups.push_back(group);

            // rows for this group share its monotonicity summary
            const std::size_t first = out.points.size() - spec.p_info.size();
            for (std::size_t k = first; k < out.points.size(); ++k) {
                const auto& s = out.points[k];
                points_csv << detail::format_full(s.params.r) << ','
                           << detail::format_full(s.params.p_info) << ','
                           << detail::format_full(s.params.sigma) << ',' << s.n << ','
                           << detail::format_full(s.A.mean) << ','
                           << detail::format_full(s.A.std) << ','
                           << detail::format_full(s.A.ci) << ','
                           << detail::format_full(s.D_tot.mean) << ','
                           << detail::format_full(s.D_tot.std) << ','
                           << detail::format_full(s.D_tot.ci) << ','
                           << detail::format_full(s.MSE.mean) << ','
                           << detail::format_full(s.MSE.std) << ','
                           << detail::format_full(s.MSE.ci) << ','
                           << detail::format_full(group.spearman_A_pinfo) << '\n';
            }
        }
    }

    nlohmann::json meta;
    meta["tool_version"] = kVersion;
    meta["spec"] = spec.to_json();
    meta["config"] = sc.config.to_json();
    meta["distance_convention"] = "network";
    meta["scenario_hash"] = detail::content_hash(
        {fs::path(spec.scenario_dir) / "network.geojson",
         fs::path(spec.scenario_dir) / "demand.json"});
    meta["hash_algorithm"] = "fnv1a64";
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : out.groups) {
        nlohmann::json jg;
        jg["r"] = g.r;
        jg["sigma"] = g.sigma;
        if (std::isnan(g.spearman_A_pinfo))
            jg["spearman_A_pinfo"] = nullptr;
        else
            jg["spearman_A_pinfo"] = g.spearman_A_pinfo;
        if (g.threshold_p_info)
            jg["threshold_p_info"] = *g.threshold_p_info;
        else
            jg["threshold_p_info"] = nullptr;
        groups.push_back(jg);
    }
    meta["groups"] = groups;
    std::ofstream meta_out(out.out_dir / "meta.json", std::ios::binary);
    meta_out << meta.dump(2) << '\n';
    return out;
}

inline SweepResult run_sweep(const SweepSpec& spec, int jobs = 1) {
    const Scenario sc = load_scenario(spec.scenario_dir);
    return run_sweep(spec, sc, jobs);
}

}  // namespace bikesim
