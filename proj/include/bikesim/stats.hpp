#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace bikesim {

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two points.
inline double sample_std(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

/// Half-width of the normal 95% confidence interval of the mean.
inline double ci95_half_width(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    return 1.96 * sample_std(v) / std::sqrt(static_cast<double>(v.size()));
}

/// Sample skewness g1; 0 for degenerate inputs.
inline double skewness(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 3) return 0.0;
    const double m = mean(v);
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    if (m2 <= 0.0) return 0.0;
    return m3 / std::pow(m2, 1.5);
}

namespace detail {
inline std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}
}  // namespace detail

/// Spearman rank correlation with average ranks for ties; NaN when undefined.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) return std::nan("");
    const auto rx = detail::ranks_with_ties(x);
    const auto ry = detail::ranks_with_ties(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nan("");
    return sxy / std::sqrt(sxx * syy);
}

/// Shannon entropy of a probability vector (natural log, 0·log 0 = 0).
inline double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

}  // namespace bikesim
