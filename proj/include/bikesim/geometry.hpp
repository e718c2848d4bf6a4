#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bikesim {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point& a, const Point& b) {
        return a.x == b.x && a.y == b.y;
    }
};

inline double distance(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Closed polygon; vertices listed once, closing edge implicit.
struct Polygon {
    std::vector<Point> vertices;

    bool empty() const { return vertices.empty(); }
};

/// Max pairwise vertex distance. District polygons are small, O(n^2) is fine.
inline double diameter(const Polygon& poly) {
    double best = 0.0;
    for (std::size_t i = 0; i < poly.vertices.size(); ++i)
        for (std::size_t j = i + 1; j < poly.vertices.size(); ++j)
            best = std::max(best, distance(poly.vertices[i], poly.vertices[j]));
    return best;
}

inline double point_segment_distance(const Point& p, const Point& a, const Point& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return distance(p, a);
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, Point{a.x + t * dx, a.y + t * dy});
}

inline double distance_to_perimeter(const Polygon& poly, const Point& p) {
    double best = std::numeric_limits<double>::infinity();
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point& a = v[i];
        const Point& b = v[(i + 1) % v.size()];
        best = std::min(best, point_segment_distance(p, a, b));
    }
    return best;
}

/// Even-odd rule; points on an edge count as inside (within no tolerance,
/// callers needing robustness near the boundary should also check
/// distance_to_perimeter).
inline bool point_in_polygon(const Polygon& poly, const Point& p) {
    const auto& v = poly.vertices;
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i].y > p.y) != (v[j].y > p.y)) {
            const double x_cross =
                v[j].x + (p.y - v[j].y) / (v[i].y - v[j].y) * (v[i].x - v[j].x);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

struct BoundingBox {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

inline BoundingBox bounding_box(const Polygon& poly) {
    BoundingBox bb;
    bb.min_x = bb.min_y = std::numeric_limits<double>::infinity();
    bb.max_x = bb.max_y = -std::numeric_limits<double>::infinity();
    for (const Point& p : poly.vertices) {
        bb.min_x = std::min(bb.min_x, p.x);
        bb.min_y = std::min(bb.min_y, p.y);
        bb.max_x = std::max(bb.max_x, p.x);
        bb.max_y = std::max(bb.max_y, p.y);
    }
    return bb;
}

}  // namespace bikesim
