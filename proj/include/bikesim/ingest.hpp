#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bikesim/calendar.hpp"
#include "bikesim/kmeans.hpp"
#include "bikesim/rng.hpp"

namespace bikesim {

struct MalformedRecord : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapacityZero : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonMonotonicTimestamps : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientDays : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SnapshotRecord {
    std::uint32_t station_id = 0;
    Timestamp time;
    int bikes = 0;
    int capacity = 0;
};

/// One calendar day of load factors, stations x bins, day anchored at
/// 03:00 local time. NaN marks a missing bin.
struct DayProfile {
    Date date;
    std::vector<std::uint32_t> station_ids;  // sorted
    int n_bins = 288;
    std::vector<double> lf;  // station-major [s * n_bins + t]

    double& at(std::size_t s, int t) { return lf[s * n_bins + t]; }
    double at(std::size_t s, int t) const { return lf[s * n_bins + t]; }
    std::size_t missing_count() const {
        std::size_t n = 0;
        for (double v : lf) n += std::isnan(v) ? 1 : 0;
        return n;
    }
};

struct StandardDay {
    std::vector<std::uint32_t> station_ids;
    int n_bins = 288;
    std::vector<double> lf;  // station-major, complete
    std::vector<Date> member_dates;
    int cluster_label = 0;

    double at(std::size_t s, int t) const { return lf[s * n_bins + t]; }
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline void check_record(const SnapshotRecord& r, const std::string& where) {
    if (r.capacity <= 0) throw CapacityZero(where + ": capacity must be positive");
    if (r.bikes < 0 || r.bikes > r.capacity)
        throw MalformedRecord(where + ": bikes outside [0, capacity]");
}

}  // namespace detail

/// CSV: station_id,timestamp,bikes,capacity with RFC 3339 timestamps.
/// A header line is tolerated. `name` is used in error messages.
inline std::vector<SnapshotRecord> parse_snapshot_csv(std::istream& in,
                                                      const std::string& name = "<csv>") {
    std::vector<SnapshotRecord> out;
    std::string line;
    std::size_t line_no = 0;
    std::int64_t prev_epoch = std::numeric_limits<std::int64_t>::min();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (line_no == 1 && !fields.empty() && fields[0] == "station_id") continue;
        if (fields.size() != 4) throw MalformedRecord(where + ": expected 4 columns");
        SnapshotRecord r;
        try {
            std::size_t used = 0;
            r.station_id = static_cast<std::uint32_t>(std::stoul(fields[0], &used));
            if (used != fields[0].size()) throw std::invalid_argument("trailing junk");
            r.time = parse_rfc3339(fields[1]);
            r.bikes = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing junk");
            r.capacity = std::stoi(fields[3], &used);
            if (used != fields[3].size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception& e) {
            throw MalformedRecord(where + ": " + e.what());
        }
        detail::check_record(r, where);
        if (r.time.epoch_s < prev_epoch)
            throw NonMonotonicTimestamps(where + ": timestamp goes backwards");
        prev_epoch = r.time.epoch_s;
        out.push_back(r);
    }
    return out;
}

/// JSON-lines with the same keys as the CSV columns.
inline std::vector<SnapshotRecord> parse_snapshot_jsonl(std::istream& in,
                                                        const std::string& name = "<jsonl>") {
    std::vector<SnapshotRecord> out;
    std::string line;
    std::size_t line_no = 0;
    std::int64_t prev_epoch = std::numeric_limits<std::int64_t>::min();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        SnapshotRecord r;
        try {
            const auto j = nlohmann::json::parse(line);
            r.station_id = j.at("station_id").get<std::uint32_t>();
            r.time = parse_rfc3339(j.at("timestamp").get<std::string>());
            r.bikes = j.at("bikes").get<int>();
            r.capacity = j.at("capacity").get<int>();
        } catch (const std::exception& e) {
            throw MalformedRecord(where + ": " + e.what());
        }
        detail::check_record(r, where);
        if (r.time.epoch_s < prev_epoch)
            throw NonMonotonicTimestamps(where + ": timestamp goes backwards");
        prev_epoch = r.time.epoch_s;
        out.push_back(r);
    }
    return out;
}

/// Buckets snapshot records into per-day load-factor matrices.
///   - day boundary at 03:00 local time (bin 0)
///   - records land in the nearest bin; the latest record in a bin wins
///   - gaps of <= locf_max_gap bins are filled by carrying the last
///     observation forward; longer gaps stay missing
///   - a day with more than max_missing_frac missing entries is discarded
inline std::vector<DayProfile> build_day_profiles(const std::vector<SnapshotRecord>& records,
                                                  int bin_s = 300, int locf_max_gap = 3,
                                                  double max_missing_frac = 0.20) {
    if (86400 % bin_s != 0) throw std::invalid_argument("bin width must divide 86400");
    const int bins_per_day = 86400 / bin_s;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::set<std::uint32_t> id_set;
    for (const auto& r : records) id_set.insert(r.station_id);
    const std::vector<std::uint32_t> station_ids(id_set.begin(), id_set.end());
    auto row_of = [&](std::uint32_t id) {
        return static_cast<std::size_t>(
            std::lower_bound(station_ids.begin(), station_ids.end(), id) - station_ids.begin());
    };

    // day index -> (cell -> (epoch, lf)) keeping the latest record per cell
    std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> days;
    for (const auto& r : records) {
        const std::int64_t shifted = r.time.local_s() - 3 * 3600;
        const std::int64_t gbin = detail::floor_div(shifted + bin_s / 2, bin_s);
        const std::int64_t day = detail::floor_div(gbin, bins_per_day);
        const int bin = static_cast<int>(gbin - day * bins_per_day);
        auto& cells = days[day];
        if (cells.empty())
            cells.assign(station_ids.size() * bins_per_day,
                         {std::numeric_limits<std::int64_t>::min(), nan});
        auto& cell = cells[row_of(r.station_id) * bins_per_day + bin];
        if (r.time.epoch_s >= cell.first)
            cell = {r.time.epoch_s, static_cast<double>(r.bikes) / r.capacity};
    }

    std::vector<DayProfile> out;
    for (auto& [day, cells] : days) {
        DayProfile p;
        p.date = civil_from_days(day);
        p.station_ids = station_ids;
        p.n_bins = bins_per_day;
        p.lf.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) p.lf[i] = cells[i].second;

        // LOCF over short gaps, per station
        for (std::size_t s = 0; s < station_ids.size(); ++s) {
            int t = 0;
            while (t < bins_per_day) {
                if (!std::isnan(p.at(s, t))) {
                    ++t;
                    continue;
                }
                int end = t;
                while (end < bins_per_day && std::isnan(p.at(s, end))) ++end;
                const int gap = end - t;
                if (t > 0 && gap <= locf_max_gap)
                    for (int u = t; u < end; ++u) p.at(s, u) = p.at(s, t - 1);
                t = end;
            }
        }

        const double missing_frac =
            static_cast<double>(p.missing_count()) / static_cast<double>(p.lf.size());
        if (missing_frac <= max_missing_frac) out.push_back(std::move(p));
    }
    return out;
}

/// Full parse pipeline: auto-detects CSV vs JSON-lines from the first
/// non-space character of the stream.
inline std::vector<DayProfile> parse_snapshots(std::istream& in,
                                               const std::string& name = "<input>",
                                               int bin_s = 300, int locf_max_gap = 3,
                                               double max_missing_frac = 0.20) {
    const int c = in.peek();
    const auto records = (c == '{') ? parse_snapshot_jsonl(in, name) : parse_snapshot_csv(in, name);
    return build_day_profiles(records, bin_s, locf_max_gap, max_missing_frac);
}

/// Regenerates snapshot records from a profile (bikes = round(lf * capacity)).
/// `capacities` aligns with profile.station_ids. Missing bins are skipped.
inline std::vector<SnapshotRecord> snapshots_from_profile(const DayProfile& p,
                                                          const std::vector<int>& capacities,
                                                          int bin_s = 300) {
    std::vector<SnapshotRecord> out;
    const std::int64_t day_start =
        days_from_civil(p.date.year, p.date.month, p.date.day) * 86400 + 3 * 3600;
    for (int t = 0; t < p.n_bins; ++t) {
        for (std::size_t s = 0; s < p.station_ids.size(); ++s) {
            const double v = p.at(s, t);
            if (std::isnan(v)) continue;
            SnapshotRecord r;
            r.station_id = p.station_ids[s];
            r.time = Timestamp{day_start + static_cast<std::int64_t>(t) * bin_s, 0};
            r.capacity = capacities[s];
            r.bikes = static_cast<int>(std::llround(v * capacities[s]));
            out.push_back(r);
        }
    }
    return out;
}

inline void write_snapshot_csv(std::ostream& out, const std::vector<SnapshotRecord>& records) {
    out << "station_id,timestamp,bikes,capacity\n";
    for (const auto& r : records)
        out << r.station_id << ',' << format_rfc3339_utc(r.time.epoch_s) << ',' << r.bikes << ','
            << r.capacity << '\n';
}

namespace detail {

/// Linear interpolation over missing entries of one station row; ends take
/// the nearest observed value. Rows with no observation at all become 0.
inline void impute_row(double* row, int n) {
    int first = -1, last = -1;
    for (int t = 0; t < n; ++t)
        if (!std::isnan(row[t])) {
            if (first < 0) first = t;
            last = t;
        }
    if (first < 0) {
        std::fill(row, row + n, 0.0);
        return;
    }
    for (int t = 0; t < first; ++t) row[t] = row[first];
    for (int t = last + 1; t < n; ++t) row[t] = row[last];
    int t = first;
    while (t <= last) {
        if (!std::isnan(row[t])) {
            ++t;
            continue;
        }
        int end = t;
        while (std::isnan(row[end])) ++end;
        const double a = row[t - 1], b = row[end];
        for (int u = t; u < end; ++u)
            row[u] = a + (b - a) * static_cast<double>(u - t + 1) / static_cast<double>(end - t + 1);
        t = end;
    }
}

}  // namespace detail

/// Two-stage day reduction.
/// Stage 1 clusters the time bins of the pooled mean day into k_inner groups
/// (one shared partition), and represents each day by its per-group means.
/// Stage 2 clusters those day vectors into k_day groups; the largest cluster
/// with >= 70% Mon-Fri member dates is the standard weekday cluster (if none
/// qualifies, the cluster with the highest weekday share). The result is the
/// bin-wise mean of that cluster's full profiles.
inline StandardDay reduce_days(const std::vector<DayProfile>& profiles_in, int k_inner, int k_day,
                               std::uint64_t seed) {
    if (profiles_in.size() < 2) throw InsufficientDays("need at least 2 day profiles");

    std::vector<DayProfile> profiles = profiles_in;
    std::sort(profiles.begin(), profiles.end(),
              [](const DayProfile& a, const DayProfile& b) { return a.date < b.date; });

    const auto& ids = profiles.front().station_ids;
    const int n_bins = profiles.front().n_bins;
    for (const auto& p : profiles)
        if (p.station_ids != ids || p.n_bins != n_bins)
            throw std::invalid_argument("day profiles disagree on stations or bins");

    const std::size_t n_days = profiles.size();
    const std::size_t n_stations = ids.size();
    for (auto& p : profiles)
        for (std::size_t s = 0; s < n_stations; ++s)
            detail::impute_row(p.lf.data() + s * n_bins, n_bins);

    k_inner = std::min<int>(k_inner, n_bins);
    k_day = std::min<int>(k_day, static_cast<int>(n_days));

    // stage 1: partition time bins on the pooled mean day
    std::vector<std::vector<double>> bin_points(n_bins, std::vector<double>(n_stations, 0.0));
    for (const auto& p : profiles)
        for (std::size_t s = 0; s < n_stations; ++s)
            for (int t = 0; t < n_bins; ++t)
                bin_points[t][s] += p.at(s, t) / static_cast<double>(n_days);
    Rng rng_inner(derive_seed(seed, 1));
    const auto inner = kmeans(bin_points, k_inner, rng_inner);

    // order groups by their smallest member bin so labels are canonical
    std::vector<int> group_of(k_inner, -1);
    {
        int next = 0;
        for (int t = 0; t < n_bins; ++t) {
            const int c = inner.assignment[t];
            if (group_of[c] < 0) group_of[c] = next++;
        }
    }
    std::vector<std::vector<int>> group_bins(k_inner);
    for (int t = 0; t < n_bins; ++t) group_bins[group_of[inner.assignment[t]]].push_back(t);

    // reduced vector per day
    std::vector<std::vector<double>> day_points(n_days);
    for (std::size_t d = 0; d < n_days; ++d) {
        auto& v = day_points[d];
        v.reserve(n_stations * static_cast<std::size_t>(k_inner));
        for (int g = 0; g < k_inner; ++g) {
            for (std::size_t s = 0; s < n_stations; ++s) {
                double sum = 0.0;
                for (int t : group_bins[g]) sum += profiles[d].at(s, t);
                v.push_back(group_bins[g].empty() ? 0.0 : sum / group_bins[g].size());
            }
        }
    }

    // stage 2: cluster days, then pick the standard weekday cluster
    Rng rng_day(derive_seed(seed, 2));
    const auto outer = kmeans(day_points, k_day, rng_day);

    std::vector<std::size_t> size(k_day, 0), weekday(k_day, 0);
    for (std::size_t d = 0; d < n_days; ++d) {
        ++size[outer.assignment[d]];
        if (is_weekday(profiles[d].date)) ++weekday[outer.assignment[d]];
    }
    auto frac = [&](int c) {
        return size[c] == 0 ? 0.0 : static_cast<double>(weekday[c]) / static_cast<double>(size[c]);
    };
    int pick = -1;
    for (int c = 0; c < k_day; ++c) {
        if (size[c] == 0 || frac(c) < 0.70) continue;
        if (pick < 0 || size[c] > size[pick] ||
            (size[c] == size[pick] && frac(c) > frac(pick)))
            pick = c;
    }
    if (pick < 0) {  // no cluster meets the weekday rule; best effort
        for (int c = 0; c < k_day; ++c) {
            if (size[c] == 0) continue;
            if (pick < 0 || frac(c) > frac(pick) ||
                (frac(c) == frac(pick) && size[c] > size[pick]))
                pick = c;
        }
    }

    StandardDay sd;
    sd.station_ids = ids;
    sd.n_bins = n_bins;
    sd.cluster_label = pick;
    sd.lf.assign(n_stations * static_cast<std::size_t>(n_bins), 0.0);
    std::size_t members = 0;
    for (std::size_t d = 0; d < n_days; ++d) {
        if (outer.assignment[d] != pick) continue;
        ++members;
        sd.member_dates.push_back(profiles[d].date);
        for (std::size_t i = 0; i < sd.lf.size(); ++i) sd.lf[i] += profiles[d].lf[i];
    }
    for (double& v : sd.lf) v /= static_cast<double>(members);
    return sd;
}

inline void write_standard_day_csv(std::ostream& out, const StandardDay& sd) {
    out << "station_id,bin_index,lf\n";
    char buf[40];
    for (std::size_t s = 0; s < sd.station_ids.size(); ++s) {
        for (int t = 0; t < sd.n_bins; ++t) {
            std::snprintf(buf, sizeof(buf), "%.17g", sd.at(s, t));
            out << sd.station_ids[s] << ',' << t << ',' << buf << '\n';
        }
    }
}

inline StandardDay read_standard_day_csv(std::istream& in, const std::string& name = "<csv>") {
    std::map<std::uint32_t, std::map<int, double>> cells;
    std::string line;
    std::size_t line_no = 0;
    int max_bin = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("station_id", 0) == 0) continue;
        std::uint32_t sid;
        int bin;
        double lf;
        if (std::sscanf(line.c_str(), "%u,%d,%lf", &sid, &bin, &lf) != 3)
            throw MalformedRecord(name + ":" + std::to_string(line_no) + ": bad standard-day row");
        cells[sid][bin] = lf;
        max_bin = std::max(max_bin, bin);
    }
    if (cells.empty()) throw MalformedRecord(name + ": empty standard-day file");
    StandardDay sd;
    sd.n_bins = max_bin + 1;
    for (const auto& [sid, bins] : cells) sd.station_ids.push_back(sid);
    sd.lf.assign(sd.station_ids.size() * static_cast<std::size_t>(sd.n_bins), 0.0);
    for (std::size_t s = 0; s < sd.station_ids.size(); ++s) {
        const auto& bins = cells.at(sd.station_ids[s]);
        if (static_cast<int>(bins.size()) != sd.n_bins)
            throw MalformedRecord(name + ": station " + std::to_string(sd.station_ids[s]) +
                                  " has missing bins");
        for (const auto& [bin, lf] : bins) sd.lf[s * sd.n_bins + bin] = lf;
    }
    return sd;
}

}  // namespace bikesim
