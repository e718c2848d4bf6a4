#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bikesim {

struct Date {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    friend bool operator==(const Date& a, const Date& b) {
        return a.year == b.year && a.month == b.month && a.day == b.day;
    }
    friend bool operator<(const Date& a, const Date& b) {
        if (a.year != b.year) return a.year < b.year;
        if (a.month != b.month) return a.month < b.month;
        return a.day < b.day;
    }
};

// Howard Hinnant's civil-calendar algorithms.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

/// 0 = Monday ... 6 = Sunday.
inline int weekday_from_days(std::int64_t z) {
    return static_cast<int>(z >= -3 ? (z + 3) % 7 : (z + 4) % 7 + 6);
}

inline bool is_weekday(const Date& d) {
    return weekday_from_days(days_from_civil(d.year, d.month, d.day)) < 5;
}

inline std::string to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

inline Date parse_date(std::string_view s) {
    int y, m, d;
    if (s.size() != 10 || std::sscanf(std::string(s).c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3)
        throw std::invalid_argument("bad date: " + std::string(s));
    return Date{y, m, d};
}

struct Timestamp {
    std::int64_t epoch_s = 0;   // seconds since Unix epoch, UTC
    std::int32_t offset_s = 0;  // local-time offset encoded in the source string

    std::int64_t local_s() const { return epoch_s + offset_s; }
};

/// Parses "YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)". Fractional seconds
/// are accepted and truncated.
inline Timestamp parse_rfc3339(std::string_view sv) {
    const std::string s(sv);
    const auto fail = [&]() -> Timestamp {
        throw std::invalid_argument("bad RFC 3339 timestamp: " + s);
    };
    int y, mo, d, h, mi, se;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%n",
                    &y, &mo, &d, &h, &mi, &se, &consumed) != 6)
        return fail();
    std::size_t pos = static_cast<std::size_t>(consumed);
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
    if (pos >= s.size()) return fail();
    std::int32_t offset = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int oh, om;
        int oc = 0;
        if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d%n", &oh, &om, &oc) != 2 || oc != 5)
            return fail();
        offset = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
        pos += 6;
    } else {
        return fail();
    }
    if (pos != s.size()) return fail();
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) return fail();
    const std::int64_t days = days_from_civil(y, mo, d);
    return Timestamp{days * 86400 + h * 3600 + mi * 60 + se - offset, offset};
}

inline std::string format_rfc3339_utc(std::int64_t epoch_s) {
    std::int64_t days = epoch_s / 86400;
    std::int64_t sod = epoch_s % 86400;
    if (sod < 0) { sod += 86400; --days; }
    const Date d = civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day,
                  static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60),
                  static_cast<int>(sod % 60));
    return buf;
}

}  // namespace bikesim
