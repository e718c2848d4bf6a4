#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <bikesim/ingest.hpp>

using namespace bikesim;

namespace {

SnapshotRecord rec(std::uint32_t sid, std::int64_t epoch, int bikes, int cap,
                   std::int32_t offset = 0) {
    SnapshotRecord r;
    r.station_id = sid;
    r.time = Timestamp{epoch, offset};
    r.bikes = bikes;
    r.capacity = cap;
    return r;
}

// epoch seconds of 03:00 UTC on the given date
std::int64_t day3(int y, unsigned m, unsigned d) {
    return days_from_civil(y, m, d) * 86400 + 3 * 3600;
}

DayProfile make_profile(Date date, std::vector<std::uint32_t> ids, int n_bins,
                        const std::vector<int>& caps,
                        const std::function<int(std::size_t, int)>& bikes_fn) {
    DayProfile p;
    p.date = date;
    p.station_ids = std::move(ids);
    p.n_bins = n_bins;
    p.lf.resize(p.station_ids.size() * n_bins);
    for (std::size_t s = 0; s < p.station_ids.size(); ++s)
        for (int t = 0; t < n_bins; ++t)
            p.at(s, t) = static_cast<double>(bikes_fn(s, t)) / caps[s];
    return p;
}

}  // namespace

TEST_CASE("binning anchors the day at 03:00 local time") {
    const auto base = day3(2013, 4, 1);
    std::vector<SnapshotRecord> rs = {
        rec(7, base - 200, 3, 10),  // 02:56:40 -> previous day, last bin
        rec(7, base - 100, 4, 10),  // 02:58:20 is nearest to 03:00 -> bin 0 of Apr 1
        rec(7, base + 290, 5, 10),  // 03:04:50 rounds to bin 1
    };
    auto days = build_day_profiles(rs, 300, 3, 1.0);
    REQUIRE(days.size() == 2);
    CHECK(days[0].date == Date{2013, 3, 31});
    CHECK(days[0].at(0, days[0].n_bins - 1) == 0.3);
    CHECK(days[1].date == Date{2013, 4, 1});
    CHECK(days[1].at(0, 0) == 0.4);
    CHECK(days[1].at(0, 1) == 0.5);
}

TEST_CASE("UTC offset shifts records into the local day") {
    // 01:30 UTC with +02:00 offset is 03:30 local -> bin 6 of that date
    const std::int64_t epoch = days_from_civil(2013, 4, 2) * 86400 + 3600 + 1800;
    auto days = build_day_profiles({rec(1, epoch, 2, 4, 2 * 3600)}, 300, 3, 1.0);
    REQUIRE(days.size() == 1);
    CHECK(days[0].date == Date{2013, 4, 2});
    CHECK(days[0].at(0, 6) == 0.5);
}

TEST_CASE("latest record in a bin wins") {
    const auto base = day3(2013, 4, 1);
    auto days = build_day_profiles(
        {rec(1, base + 100, 1, 10), rec(1, base + 140, 9, 10)}, 300, 3, 1.0);
    REQUIRE(days.size() == 1);
    CHECK(days[0].at(0, 0) == 0.9);
}

TEST_CASE("LOCF fills short gaps only, and never before the first observation") {
    const auto base = day3(2013, 4, 1);
    std::vector<SnapshotRecord> rs = {
        rec(1, base + 2 * 300, 6, 10),   // bin 2
        rec(1, base + 6 * 300, 2, 10),   // bin 6: gap of 3 (bins 3-5)
        rec(1, base + 11 * 300, 8, 10),  // bin 11: gap of 4 (bins 7-10)
    };
    auto days = build_day_profiles(rs, 300, 3, 1.0);
    REQUIRE(days.size() == 1);
    const auto& p = days[0];
    CHECK(std::isnan(p.at(0, 0)));  // leading bins stay missing
    CHECK(std::isnan(p.at(0, 1)));
    CHECK(p.at(0, 2) == 0.6);
    CHECK(p.at(0, 3) == 0.6);  // carried forward
    CHECK(p.at(0, 4) == 0.6);
    CHECK(p.at(0, 5) == 0.6);
    CHECK(p.at(0, 6) == 0.2);
    for (int t = 7; t <= 10; ++t) CHECK(std::isnan(p.at(0, t)));  // gap of 4: left open
    CHECK(p.at(0, 11) == 0.8);
}

TEST_CASE("days with too many missing bins are discarded") {
    const auto base = day3(2013, 4, 1);
    // 288 bins; observe bins 0..99 only -> 188 missing minus LOCF 3 = 185/288 > 20%
    std::vector<SnapshotRecord> sparse;
    for (int t = 0; t < 100; ++t) sparse.push_back(rec(1, base + t * 300, 5, 10));
    CHECK(build_day_profiles(sparse, 300, 3, 0.20).empty());

    // observing 250 bins leaves 38 missing minus LOCF -> well under 20%
    std::vector<SnapshotRecord> dense;
    for (int t = 0; t < 250; ++t) dense.push_back(rec(1, base + t * 300, 5, 10));
    CHECK(build_day_profiles(dense, 300, 3, 0.20).size() == 1);
}

TEST_CASE("csv parser reports malformed rows with their line number") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_snapshot_csv(in, "f.csv");
    };
    const std::string good =
        "station_id,timestamp,bikes,capacity\n"
        "4,2013-04-01T07:00:00Z,3,20\n"
        "5,2013-04-01T07:00:30Z,20,20\n";
    auto rs = parse(good);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].station_id == 4);
    CHECK(rs[0].bikes == 3);
    CHECK(rs[1].time.epoch_s - rs[0].time.epoch_s == 30);

    CHECK_THROWS_MATCHES(parse("4,2013-04-01T07:00:00Z,3\n"), MalformedRecord,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("f.csv:1")));
    CHECK_THROWS_AS(parse("4,2013-04-01T07:00:00Z,three,20\n"), MalformedRecord);
    CHECK_THROWS_AS(parse("4,not-a-time,3,20\n"), MalformedRecord);
    CHECK_THROWS_AS(parse("4,2013-04-01T07:00:00Z,21,20\n"), MalformedRecord);
    CHECK_THROWS_AS(parse("4,2013-04-01T07:00:00Z,-1,20\n"), MalformedRecord);
    CHECK_THROWS_AS(parse("4,2013-04-01T07:00:00Z,0,0\n"), CapacityZero);
    CHECK_THROWS_AS(
        parse("4,2013-04-01T07:00:00Z,3,20\n4,2013-04-01T06:59:59Z,3,20\n"),
        NonMonotonicTimestamps);
}

TEST_CASE("jsonl parser accepts the same records as csv") {
    std::istringstream in(
        R"({"station_id": 4, "timestamp": "2013-04-01T07:00:00Z", "bikes": 3, "capacity": 20})"
        "\n"
        R"({"station_id": 5, "timestamp": "2013-04-01T09:05:00+02:00", "bikes": 7, "capacity": 20})"
        "\n");
    auto rs = parse_snapshot_jsonl(in, "f.jsonl");
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].station_id == 4);
    CHECK(rs[1].time.offset_s == 7200);

    std::istringstream bad(R"({"station_id": 4, "bikes": 3, "capacity": 20})" "\n");
    CHECK_THROWS_AS(parse_snapshot_jsonl(bad, "f.jsonl"), MalformedRecord);
}

TEST_CASE("parse_snapshots auto-detects the format") {
    const std::string csv = "1,2013-04-01T03:00:00Z,3,10\n";
    const std::string jsonl =
        R"({"station_id": 1, "timestamp": "2013-04-01T03:00:00Z", "bikes": 3, "capacity": 10})"
        "\n";
    std::istringstream a(csv), b(jsonl);
    auto da = parse_snapshots(a, "<a>", 300, 3, 1.0), db = parse_snapshots(b, "<b>", 300, 3, 1.0);
    REQUIRE(da.size() == 1);
    REQUIRE(db.size() == 1);
    REQUIRE(da[0].lf.size() == db[0].lf.size());
    for (std::size_t i = 0; i < da[0].lf.size(); ++i) {
        if (std::isnan(da[0].lf[i]))
            CHECK(std::isnan(db[0].lf[i]));
        else
            CHECK(da[0].lf[i] == db[0].lf[i]);
    }
}

TEST_CASE("profile -> snapshots -> csv -> profile is bit-exact") {
    std::mt19937 gen(42);
    const std::vector<std::uint32_t> ids = {2, 9, 31};
    const std::vector<int> caps = {12, 20, 17};
    auto p = make_profile({2013, 4, 3}, ids, 288, caps, [&](std::size_t s, int) {
        return static_cast<int>(gen() % (caps[s] + 1));
    });

    auto recs = snapshots_from_profile(p, caps);
    REQUIRE(recs.size() == ids.size() * 288);
    std::ostringstream out;
    write_snapshot_csv(out, recs);
    std::istringstream in(out.str());
    auto days = parse_snapshots(in);
    REQUIRE(days.size() == 1);
    CHECK(days[0].date == p.date);
    CHECK(days[0].station_ids == p.station_ids);
    CHECK(days[0].lf == p.lf);  // exact double equality
}

TEST_CASE("standard day csv io is bit-exact") {
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StandardDay sd;
    sd.station_ids = {1, 5, 6};
    sd.n_bins = 288;
    sd.lf.resize(3 * 288);
    for (auto& v : sd.lf) v = u(gen);

    std::ostringstream out;
    write_standard_day_csv(out, sd);
    std::istringstream in(out.str());
    auto back = read_standard_day_csv(in);
    CHECK(back.station_ids == sd.station_ids);
    CHECK(back.n_bins == sd.n_bins);
    CHECK(back.lf == sd.lf);

    std::istringstream empty("station_id,bin_index,lf\n");
    CHECK_THROWS_AS(read_standard_day_csv(empty), MalformedRecord);
    std::istringstream holes("station_id,bin_index,lf\n3,0,0.5\n3,2,0.5\n");
    CHECK_THROWS_AS(read_standard_day_csv(holes), MalformedRecord);
}

TEST_CASE("reduce_days on identical days returns that day") {
    const std::vector<std::uint32_t> ids = {1, 2};
    const std::vector<int> caps = {10, 10};
    std::vector<DayProfile> days;
    for (int d = 1; d <= 6; ++d)
        days.push_back(make_profile({2013, 4, d}, ids, 48, caps, [](std::size_t s, int t) {
            return static_cast<int>((t + 3 * s) % 11);
        }));
    auto sd = reduce_days(days, 8, 3, 99);
    CHECK(sd.station_ids == ids);
    REQUIRE(sd.member_dates.size() == 6);
    for (std::size_t i = 0; i < sd.lf.size(); ++i)
        CHECK(sd.lf[i] == Catch::Approx(days[0].lf[i]).margin(1e-12));
}

TEST_CASE("reduce_days separates weekdays from weekends") {
    const std::vector<std::uint32_t> ids = {1, 2, 3};
    const std::vector<int> caps = {20, 20, 20};
    auto weekday_bikes = [](std::size_t s, int t) {
        return static_cast<int>(std::llround(10 + 8 * std::sin(0.3 * t + 1.1 * s)));
    };
    auto weekend_bikes = [](std::size_t, int) { return 3; };

    // 2013-04-01 is a Monday: 1..5 weekdays, 6..7 weekend, 8..12 weekdays, 13..14 weekend
    std::vector<DayProfile> days;
    std::vector<Date> weekday_dates;
    for (int d = 1; d <= 14; ++d) {
        const Date date{2013, 4, d};
        if (is_weekday(date)) {
            days.push_back(make_profile(date, ids, 48, caps, weekday_bikes));
            weekday_dates.push_back(date);
        } else {
            days.push_back(make_profile(date, ids, 48, caps, weekend_bikes));
        }
    }
    auto sd = reduce_days(days, 8, 2, 4242);
    CHECK(sd.member_dates == weekday_dates);
    for (std::size_t i = 0; i < sd.lf.size(); ++i)
        CHECK(sd.lf[i] == Catch::Approx(days[0].lf[i]).margin(1e-12));

    SECTION("result does not depend on input order") {
        auto shuffled = days;
        std::mt19937 gen(5);
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        auto sd2 = reduce_days(shuffled, 8, 2, 4242);
        CHECK(sd2.member_dates == sd.member_dates);
        CHECK(sd2.lf == sd.lf);
    }
    SECTION("same seed reproduces the same standard day") {
        auto sd2 = reduce_days(days, 8, 2, 4242);
        CHECK(sd2.lf == sd.lf);
        auto sd3 = reduce_days(days, 8, 2, 777);
        CHECK(sd3.member_dates == sd.member_dates);  // clustering is robust here
    }
}

TEST_CASE("reduce_days weekday rule falls back to the most-weekday cluster") {
    // only weekend days on one pattern, weekdays on another but in the minority
    const std::vector<std::uint32_t> ids = {1};
    const std::vector<int> caps = {10};
    std::vector<DayProfile> days;
    // two weekdays, five weekend days
    days.push_back(make_profile({2013, 4, 1}, ids, 24, caps, [](std::size_t, int) { return 9; }));
    days.push_back(make_profile({2013, 4, 2}, ids, 24, caps, [](std::size_t, int) { return 9; }));
    for (int d : {6, 7, 13, 14, 20})
        days.push_back(make_profile({2013, 4, d}, ids, 24, caps, [](std::size_t, int) { return 1; }));
    auto sd = reduce_days(days, 6, 2, 1);
    // largest cluster is the weekend one (5 of 7), but it fails the 70% weekday
    // rule; the all-weekday cluster must be chosen
    REQUIRE(sd.member_dates.size() == 2);
    CHECK(sd.member_dates[0] == Date{2013, 4, 1});
    CHECK(sd.at(0, 0) == Catch::Approx(0.9));
}

TEST_CASE("reduce_days requires at least two days") {
    const std::vector<std::uint32_t> ids = {1};
    std::vector<DayProfile> one;
    one.push_back(make_profile({2013, 4, 1}, ids, 24, {10}, [](std::size_t, int) { return 5; }));
    CHECK_THROWS_AS(reduce_days(one, 6, 2, 1), InsufficientDays);
}
