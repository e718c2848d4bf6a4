#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "bikesim/rng.hpp"

namespace bikesim {

struct KmeansError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KmeansResult {
    std::vector<int> assignment;                 // point -> cluster
    std::vector<std::vector<double>> centroids;  // k x dim
    double wcss = 0.0;
    std::vector<double> wcss_history;  // cost after every assignment step
    int iterations = 0;
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding from `rng`. Runs to an assignment
/// fixed point or max_iter. Ties in assignment go to the smaller cluster
/// index; an emptied cluster is re-seeded on the point currently farthest
/// from its centroid, so the result is fully determined by (points, k, seed).
inline KmeansResult kmeans(const std::vector<std::vector<double>>& points, int k, Rng& rng,
                           int max_iter = 300) {
    const std::size_t n = points.size();
    if (n == 0) throw KmeansError("kmeans: empty input");
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw KmeansError("kmeans: k must be in [1, n]");
    const std::size_t dim = points[0].size();
    for (const auto& p : points)
        if (p.size() != dim) throw KmeansError("kmeans: inconsistent dimensions");

    KmeansResult res;
    res.centroids.reserve(k);

    // k-means++ seeding
    std::vector<double> d2(n, 0.0);
    std::vector<bool> chosen(n, false);
    {
        const std::size_t first = static_cast<std::size_t>(rng.uniform_below(n));
        res.centroids.push_back(points[first]);
        chosen[first] = true;
    }
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = detail::sq_dist(points[i], res.centroids[0]);
            for (std::size_t c = 1; c < res.centroids.size(); ++c)
                best = std::min(best, detail::sq_dist(points[i], res.centroids[c]));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) pick = n - 1;  // numeric edge of the scan
        } else {
            // all remaining mass zero (duplicate points): first unchosen index
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        chosen[pick] = true;
        res.centroids.push_back(points[pick]);
    }

    res.assignment.assign(n, -1);
    std::vector<std::size_t> counts(k, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        // assignment step
        bool changed = false;
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = detail::sq_dist(points[i], res.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = detail::sq_dist(points[i], res.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best_c = c;
                }
            }
            cost += best_d;
            if (res.assignment[i] != best_c) {
                res.assignment[i] = best_c;
                changed = true;
            }
        }
        res.wcss_history.push_back(cost);
        res.iterations = iter + 1;
        if (!changed) break;

        // update step
        for (auto& c : res.centroids) std::fill(c.begin(), c.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = res.assignment[i];
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) res.centroids[c][j] += points[i][j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (double& v : res.centroids[c]) v /= static_cast<double>(counts[c]);
            }
        }
        // re-seed emptied clusters deterministically
        std::vector<bool> relocated(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far_i = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (relocated[i]) continue;
                const double d = detail::sq_dist(points[i], res.centroids[res.assignment[i]]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            res.centroids[c] = points[far_i];
            relocated[far_i] = true;
        }
    }
    res.wcss = res.wcss_history.back();
    return res;
}

}  // namespace bikesim
