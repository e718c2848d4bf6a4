// bikesim: the pipeline as shell subcommands. CSV goes to stdout, diagnostics
// to stderr; exit 0 = success, 1 = usage or runtime error, 2 = validation
// findings. All randomness comes from explicit --seed flags.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <bikesim/experiments.hpp>
#include <bikesim/version.hpp>

namespace fs = std::filesystem;
using namespace bikesim;

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

/// "a:b:step" expands to the inclusive range; a bare number is a 1-point grid.
double parse_num(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("not a number: '" + s + "'");
    }
}

std::vector<double> parse_grid(const std::string& s) {
    const auto c1 = s.find(':');
    if (c1 == std::string::npos) return {parse_num(s)};
    const auto c2 = s.find(':', c1 + 1);
    if (c2 == std::string::npos) throw std::runtime_error("grid must be a:b:step, got " + s);
    const double a = parse_num(s.substr(0, c1));
    const double b = parse_num(s.substr(c1 + 1, c2 - c1 - 1));
    const double step = parse_num(s.substr(c2 + 1));
    if (!(step > 0) || b < a)
        throw std::runtime_error("grid needs a <= b and step > 0, got " + s);
    std::vector<double> out;
    const int n = static_cast<int>((b - a) / step + 1e-9) + 1;
    for (int i = 0; i < n; ++i) out.push_back(a + i * step);
    return out;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(parse_num(tok));
    if (out.empty()) throw std::runtime_error("empty list: " + s);
    return out;
}

int default_jobs() {
    const unsigned n = std::thread::hardware_concurrency();
    return n ? static_cast<int>(n) : 1;
}

int cmd_ingest(const std::vector<std::string>& files, const std::string& out_path, int k_inner,
               int k_day, std::uint64_t seed) {
    std::vector<SnapshotRecord> records;
    for (const auto& f : files) {
        auto in = open_input(f);
        const auto part =
            in.peek() == '{' ? parse_snapshot_jsonl(in, f) : parse_snapshot_csv(in, f);
        records.insert(records.end(), part.begin(), part.end());
    }
    const auto profiles = build_day_profiles(records);
    const StandardDay sd = reduce_days(profiles, k_inner, k_day, seed);
    auto out = open_output(out_path);
    write_standard_day_csv(out, sd);
    std::cerr << profiles.size() << " day profiles -> standard day (" << sd.station_ids.size()
              << " stations x " << sd.n_bins << " bins) -> " << out_path << "\n";
    return 0;
}

int cmd_fit_demand(const std::string& dir, double sigma, const std::string& out_path) {
    const fs::path d(dir);
    const StreetNetwork net = load_network((d / "network.geojson").string());
    auto in = open_input((d / "standard_day.csv").string());
    const StandardDay sd = read_standard_day_csv(in, (d / "standard_day.csv").string());
    SimConfig cfg;
    if (fs::exists(d / "config.json"))
        cfg = SimConfig::from_json(detail::read_json_file(d / "config.json"));
    if (sd.n_bins <= 0 || 86400 % sd.n_bins != 0)
        throw std::runtime_error("standard day bin count must divide a 24 h day");
    const DemandModel dm =
        build_demand_model(sd, net, sigma, cfg.mean_speed_mps(), 86400 / sd.n_bins);
    auto out = open_output(out_path);
    out << dm.to_json().dump(2) << '\n';
    std::cerr << "demand model: sigma " << sigma << ", " << dm.station_ids.size()
              << " stations, " << dm.n_bins << " bins -> " << out_path << "\n";
    return 0;
}

int cmd_simulate(const std::string& dir, const SimConfig& overrides, bool seed_set,
                 bool p_info_set, bool radius_set, const std::string& events_out) {
    Scenario sc = load_scenario(dir);
    SimConfig cfg = sc.config;
    if (seed_set) cfg.seed = overrides.seed;
    if (p_info_set) cfg.p_info = overrides.p_info;
    if (radius_set) cfg.walk_radius_m = overrides.walk_radius_m;
    cfg.record_events = !events_out.empty();
    const SimResult res = run_day(sc.net, sc.demand, cfg, sc.initial_bikes);

    AggregateIndicators ind;
    ind.A = res.travels.empty() ? 0.0 : adverse_rate(res.travels);
    ind.D_tot = detour_ratio(res.travels).d_tot;
    ind.MSE = sc.standard_day
                  ? mse(res, sc.net, *sc.standard_day, sc.demand.bin_s / cfg.tau_s)
                  : std::numeric_limits<double>::quiet_NaN();
    write_indicator_header(std::cout);
    write_indicator_row(std::cout, "sim", cfg.seed, cfg.walk_radius_m, cfg.p_info, cfg.sigma,
                        ind);
    if (!events_out.empty()) {
        auto out = open_output(events_out);
        for (const auto& ev : res.events) out << ev.dump() << '\n';
        std::cerr << res.events.size() << " events -> " << events_out << "\n";
    }
    std::cerr << res.travels.size() << " travels, " << res.occ_sum(res.n_ticks)
              << " bikes docked at day end\n";
    return 0;
}

int cmd_calibrate(const std::string& dir, const std::string& real_path,
                  const std::string& sigma_grid, const std::string& pinfo_grid,
                  const std::string& radius_list, int reps, std::uint64_t seed, int jobs) {
    const Scenario sc = load_scenario(dir);
    auto in = open_input(real_path);
    const StandardDay real = read_standard_day_csv(in, real_path);
    const auto result = calibrate(sc, real, parse_grid(sigma_grid), parse_grid(pinfo_grid),
                                  parse_list(radius_list), reps, seed, jobs);
    std::cout << "r,sigma,p_info,n,mse,mse_mean,mse_std,mse_ci,excluded\n";
    for (const auto& c : result.surface)
        std::cout << detail::format_full(c.r) << ',' << detail::format_full(c.sigma) << ','
                  << detail::format_full(c.p_info) << ',' << c.n << ','
                  << detail::format_full(c.mse) << ',' << detail::format_full(c.mse_mean) << ','
                  << detail::format_full(c.mse_std) << ',' << detail::format_full(c.mse_ci)
                  << ',' << (c.excluded ? 1 : 0) << '\n';
    for (const auto& b : result.best_per_r)
        std::cerr << "best at r=" << detail::format_g(b.r) << ": sigma="
                  << detail::format_g(b.sigma) << " p_info=" << detail::format_g(b.p_info)
                  << " mse=" << detail::format_g(b.mse) << "\n";
    return 0;
}

int cmd_sweep(const std::string& spec_path, int jobs) {
    auto in = open_input(spec_path);
    nlohmann::json j;
    in >> j;
    const SweepSpec spec = SweepSpec::from_json(j);
    const SweepResult result = run_sweep(spec, jobs);
    std::cout << "r,sigma,spearman_A_pinfo,threshold_p_info\n";
    for (const auto& g : result.groups) {
        std::cout << detail::format_full(g.r) << ',' << detail::format_full(g.sigma) << ','
                  << detail::format_full(g.spearman_A_pinfo) << ',';
        if (g.threshold_p_info) std::cout << detail::format_full(*g.threshold_p_info);
        std::cout << '\n';
    }
    std::cerr << result.points.size() << " grid points -> " << result.out_dir.string() << "\n";
    return 0;
}

int cmd_gen_synthetic(const std::string& out_dir, std::uint64_t seed, double asymmetry) {
    SyntheticSpec sp;
    sp.seed = seed;
    sp.asymmetry = asymmetry;
    const Scenario sc = generate_synthetic(sp, out_dir);
    std::cerr << "scenario with " << sc.net.stations().size() << " stations, "
              << sc.demand.n_bins << " bins -> " << out_dir << "\n";
    return 0;
}

int cmd_validate(const std::string& dir) {
    const auto findings = validate_scenario(dir);
    if (findings.empty()) {
        std::cerr << dir << ": ok\n";
        return 0;
    }
    for (const auto& f : findings) std::cerr << dir << ": " << f << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"district-scale bike-sharing simulator"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "build a standard day from station snapshots");
    std::vector<std::string> snapshot_files;
    std::string ingest_out;
    int k_inner = 24, k_day = 3;
    std::uint64_t ingest_seed = 1;
    ingest->add_option("files", snapshot_files, "snapshot CSV or JSON-lines files")
        ->required()
        ->expected(-1);
    ingest->add_option("--out", ingest_out, "output standard_day.csv")->required();
    ingest->add_option("--k-inner", k_inner, "stage-1 time-bin clusters");
    ingest->add_option("--k-day", k_day, "stage-2 day clusters");
    ingest->add_option("--seed", ingest_seed, "k-means seed");

    // fit-demand
    auto* fit = app.add_subcommand("fit-demand", "estimate O/D fields from a standard day");
    std::string fit_dir, fit_out;
    double fit_sigma = 50.0;
    fit->add_option("scenario", fit_dir, "scenario directory")->required();
    fit->add_option("--sigma", fit_sigma, "kernel size (inverse bandwidth scale)")->required();
    fit->add_option("--out", fit_out, "output demand.json")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "run one day and print the indicator row");
    std::string sim_dir, events_out;
    SimConfig sim_overrides;
    sim->add_option("scenario", sim_dir, "scenario directory")->required();
    auto* seed_opt = sim->add_option("--seed", sim_overrides.seed, "replication seed");
    auto* pinfo_opt = sim->add_option("--p-info", sim_overrides.p_info, "informed proportion");
    auto* radius_opt = sim->add_option("--radius", sim_overrides.walk_radius_m,
                                       "walking radius in metres");
    sim->add_option("--events-out", events_out, "write the event log (JSON lines)");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "grid-search (sigma, p_info) against real data");
    std::string cal_dir, cal_real, cal_sigma_grid, cal_pinfo_grid, cal_radius;
    int cal_reps = 20, cal_jobs = default_jobs();
    std::uint64_t cal_seed = 1;
    cal->add_option("scenario", cal_dir, "scenario directory")->required();
    cal->add_option("--real", cal_real, "observed standard_day.csv")->required();
    cal->add_option("--sigma-grid", cal_sigma_grid, "a:b:step")->required();
    cal->add_option("--pinfo-grid", cal_pinfo_grid, "a:b:step")->required();
    cal->add_option("--radius", cal_radius, "comma-separated radii in metres")->required();
    cal->add_option("--reps", cal_reps, "replications per grid point")->required();
    cal->add_option("--seed", cal_seed, "base seed");
    cal->add_option("--jobs", cal_jobs, "worker threads (result independent of N)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run a parameter sweep into a results directory");
    std::string sweep_spec;
    int sweep_jobs = default_jobs();
    sweep->add_option("spec", sweep_spec, "sweep.json")->required();
    sweep->add_option("--jobs", sweep_jobs, "worker threads (result independent of N)");

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic commuter-tide scenario");
    std::string gen_out;
    std::uint64_t gen_seed = 1;
    double gen_asym = 0.7;
    gen->add_option("--out", gen_out, "scenario directory to create")->required();
    gen->add_option("--seed", gen_seed, "generation seed")->required();
    gen->add_option("--asymmetry", gen_asym, "tide strength in [0, 1]");

    // validate
    auto* val = app.add_subcommand("validate", "check a scenario directory for problems");
    std::string val_dir;
    val->add_option("scenario", val_dir, "scenario directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*ingest) return cmd_ingest(snapshot_files, ingest_out, k_inner, k_day, ingest_seed);
        if (*fit) return cmd_fit_demand(fit_dir, fit_sigma, fit_out);
        if (*sim)
            return cmd_simulate(sim_dir, sim_overrides, seed_opt->count() > 0,
                                pinfo_opt->count() > 0, radius_opt->count() > 0, events_out);
        if (*cal)
            return cmd_calibrate(cal_dir, cal_real, cal_sigma_grid, cal_pinfo_grid, cal_radius,
                                 cal_reps, cal_seed, cal_jobs);
        if (*sweep) return cmd_sweep(sweep_spec, sweep_jobs);
        if (*gen) return cmd_gen_synthetic(gen_out, gen_seed, gen_asym);
        if (*val) return cmd_validate(val_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
