#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bikesim/ingest.hpp"
#include "bikesim/network.hpp"
#include "bikesim/simcore.hpp"

namespace bikesim {

struct CoincidentStations : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// l_bar(t) = (1/|S|) sum p_b(s)/c(s)
inline double mean_load(const std::vector<int>& bikes, const std::vector<int>& capacities) {
    if (bikes.empty() || bikes.size() != capacities.size())
        throw std::invalid_argument("mean_load: need matching nonempty station vectors");
    double sum = 0.0;
    for (std::size_t s = 0; s < bikes.size(); ++s)
        sum += static_cast<double>(bikes[s]) / capacities[s];
    return sum / static_cast<double>(bikes.size());
}

/// h(t) = (2 / sum_{s!=s'} 1/d) * sum_{s!=s'} |lf(s)-lf(s')| / d, evaluated
/// with the ordered double sum; the unordered convention gives the same h
/// because the factor 2 cancels.
inline double heterogeneity(const std::vector<int>& bikes, const std::vector<int>& capacities,
                            const std::vector<std::vector<double>>& dist) {
    const std::size_t n = bikes.size();
    if (n < 2 || capacities.size() != n || dist.size() != n)
        throw std::invalid_argument("heterogeneity: need >= 2 stations and matching sizes");
    double norm = 0.0, weighted = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
            if (s == t) continue;
            const double d = dist[s][t];
            if (d <= 0.0) throw CoincidentStations("zero distance between stations");
            const double lf_s = static_cast<double>(bikes[s]) / capacities[s];
            const double lf_t = static_cast<double>(bikes[t]) / capacities[t];
            norm += 1.0 / d;
            weighted += std::abs(lf_s - lf_t) / d;
        }
    }
    return 2.0 * weighted / norm;
}

inline std::vector<std::vector<double>> station_distance_matrix(const StreetNetwork& net) {
    const std::size_t n = net.stations().size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) dist[a][b] = net.station_distance(a, b);
    return dist;
}

struct IndicatorSeries {
    std::vector<double> mean_load;      // per snapshot row
    std::vector<double> heterogeneity;  // per snapshot row
};

inline IndicatorSeries indicator_series(const SimResult& res, const StreetNetwork& net) {
    const std::size_t n = res.n_stations;
    std::vector<int> caps(n);
    for (std::size_t s = 0; s < n; ++s) caps[s] = net.stations()[s].capacity;
    const auto dist = station_distance_matrix(net);
    IndicatorSeries out;
    std::vector<int> row(n);
    for (int t = 0; t <= res.n_ticks; ++t) {
        for (std::size_t s = 0; s < n; ++s) row[s] = res.occ(t, s);
        out.mean_load.push_back(mean_load(row, caps));
        out.heterogeneity.push_back(n >= 2 ? heterogeneity(row, caps, dist) : 0.0);
    }
    return out;
}

/// A = |adverse travels| / |travels|; every started travel counts once.
inline double adverse_rate(const std::vector<TravelRecord>& records) {
    if (records.empty()) throw std::invalid_argument("adverse_rate: no travels");
    std::size_t adverse = 0;
    for (const auto& r : records) adverse += r.adverse ? 1 : 0;
    return static_cast<double>(adverse) / static_cast<double>(records.size());
}

struct DetourResult {
    double d_tot = 0.0;  // mean of d_r/d_th over included travels
    std::size_t included = 0;
    std::size_t excluded_incomplete = 0;  // abandoned or unfinished
    std::size_t excluded_zero_dth = 0;    // completed but d_th = 0
};

inline DetourResult detour_ratio(const std::vector<TravelRecord>& records) {
    DetourResult out;
    double sum = 0.0;
    for (const auto& r : records) {
        if (!r.completed) {
            ++out.excluded_incomplete;
            continue;
        }
        if (r.d_th <= 0.0) {
            ++out.excluded_zero_dth;
            continue;
        }
        sum += r.d_r / r.d_th;
        ++out.included;
    }
    if (out.included > 0) out.d_tot = sum / static_cast<double>(out.included);
    return out;
}

/// MSE = (1/|S||T|) sum_t sum_s (p_b(s,t)/c(s) - lf(s,t))^2, with the sim
/// series sampled at the 5-min bin boundaries (tick = bin * ticks_per_bin).
inline double mse(const SimResult& res, const StreetNetwork& net, const StandardDay& real,
                  int ticks_per_bin) {
    const std::size_t n = net.stations().size();
    if (res.n_stations != n) throw std::invalid_argument("mse: station count mismatch");
    std::vector<std::size_t> row_of(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto it = std::find(real.station_ids.begin(), real.station_ids.end(),
                                  net.stations()[s].id);
        if (it == real.station_ids.end())
            throw std::invalid_argument("mse: standard day missing station " +
                                        std::to_string(net.stations()[s].id));
        row_of[s] = it - real.station_ids.begin();
    }
    double sum = 0.0;
    for (int b = 0; b < real.n_bins; ++b) {
        const int tick = b * ticks_per_bin;
        if (tick > res.n_ticks) throw std::invalid_argument("mse: sim run shorter than the day");
        for (std::size_t s = 0; s < n; ++s) {
            const double sim_lf =
                static_cast<double>(res.occ(tick, s)) / net.stations()[s].capacity;
            const double diff = sim_lf - real.at(row_of[s], b);
            sum += diff * diff;
        }
    }
    return sum / (static_cast<double>(n) * static_cast<double>(real.n_bins));
}

struct AggregateIndicators {
    double A = 0.0;
    double D_tot = 0.0;
    double MSE = 0.0;
};

inline void write_indicator_header(std::ostream& out) {
    out << "run_id,seed,r,p_info,sigma,A,D_tot,MSE\n";
}

inline void write_indicator_row(std::ostream& out, const std::string& run_id,
                                std::uint64_t seed, double r, double p_info, double sigma,
                                const AggregateIndicators& ind) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r, p_info, sigma,
                  ind.A, ind.D_tot, ind.MSE);
    out << run_id << ',' << seed << ',' << buf << '\n';
}

inline void write_series_csv(std::ostream& out, const IndicatorSeries& s) {
    out << "tick,mean_load,heterogeneity\n";
    char buf[80];
    for (std::size_t t = 0; t < s.mean_load.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", s.mean_load[t], s.heterogeneity[t]);
        out << t << ',' << buf << '\n';
    }
}

}  // namespace bikesim
