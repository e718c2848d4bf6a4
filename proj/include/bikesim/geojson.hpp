#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bikesim/network.hpp"

namespace bikesim {

struct GeoJsonError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Point parse_coord(const nlohmann::json& c) {
    if (!c.is_array() || c.size() < 2)
        throw GeoJsonError("coordinate must be a [x, y] array");
    return Point{c[0].get<double>(), c[1].get<double>()};
}

}  // namespace detail

/// Builds a StreetNetwork from a GeoJSON FeatureCollection:
///   - LineString features are edge chains (property "length_m" overrides the
///     geometric length, distributed over segments proportionally)
///   - Point features with kind "station" (needs station_id, capacity) or
///     kind "boundary"; both must coincide with a network vertex within 1 m
///   - one Polygon feature with kind "bounds" is the district polygon
/// Coordinates must be planar meters; lon/lat-looking input is rejected.
inline StreetNetwork network_from_geojson(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
        throw GeoJsonError("expected a GeoJSON FeatureCollection");
    const auto& features = doc.at("features");

    // lon/lat guard: a district measured in meters does not fit in +-180 x +-90
    bool any_coord = false, all_in_lonlat_range = true;
    std::function<void(const nlohmann::json&)> scan = [&](const nlohmann::json& j) {
        if (j.is_array() && j.size() >= 2 && j[0].is_number() && j[1].is_number()) {
            any_coord = true;
            const double x = j[0].get<double>(), y = j[1].get<double>();
            if (std::abs(x) > 180.0 || std::abs(y) > 90.0) all_in_lonlat_range = false;
        } else if (j.is_array()) {
            for (const auto& e : j) scan(e);
        }
    };
    for (const auto& f : features)
        if (f.contains("geometry") && f["geometry"].contains("coordinates"))
            scan(f["geometry"]["coordinates"]);
    if (any_coord && all_in_lonlat_range)
        throw GeoJsonError(
            "coordinates look like lon/lat degrees; planar meter coordinates are required "
            "(project the data first)");

    StreetNetwork net;
    std::map<std::pair<double, double>, NodeId> weld;
    auto node_at = [&](const Point& p) {
        const auto key = std::make_pair(p.x, p.y);
        auto it = weld.find(key);
        if (it != weld.end()) return it->second;
        const NodeId id = net.add_node(p);
        weld.emplace(key, id);
        return id;
    };

    // edges first so Point features can snap onto vertices
    for (const auto& f : features) {
        const auto& geom = f.at("geometry");
        if (geom.at("type") != "LineString") continue;
        const auto& coords = geom.at("coordinates");
        if (coords.size() < 2) throw GeoJsonError("LineString needs >= 2 coordinates");
        std::vector<Point> pts;
        for (const auto& c : coords) pts.push_back(detail::parse_coord(c));
        double geom_len = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i) geom_len += distance(pts[i - 1], pts[i]);
        double scale = 1.0;
        if (f.contains("properties") && f["properties"].is_object() &&
            f["properties"].contains("length_m")) {
            const double override_len = f["properties"]["length_m"].get<double>();
            if (!(override_len > 0.0)) throw GeoJsonError("length_m must be > 0");
            if (geom_len <= 0.0) throw GeoJsonError("zero-length LineString");
            scale = override_len / geom_len;
        }
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const NodeId a = node_at(pts[i - 1]);
            const NodeId b = node_at(pts[i]);
            net.add_edge(a, b, distance(pts[i - 1], pts[i]) * scale);
        }
    }

    auto snap_to_vertex = [&](const Point& p, const char* what) {
        const NodeId n = net.nearest_node(p);
        if (distance(net.nodes()[n].pos, p) > 1.0)
            throw GeoJsonError(std::string(what) + " does not coincide with a network vertex "
                                                   "(nearest is more than 1 m away)");
        return n;
    };

    bool have_bounds = false;
    for (const auto& f : features) {
        const auto& geom = f.at("geometry");
        const std::string type = geom.at("type");
        const auto props = f.value("properties", nlohmann::json::object());
        if (type == "Point") {
            const std::string kind = props.value("kind", "");
            const Point p = detail::parse_coord(geom.at("coordinates"));
            if (kind == "station") {
                if (!props.contains("station_id") || !props.contains("capacity"))
                    throw GeoJsonError("station feature needs station_id and capacity");
                net.add_station(props["station_id"].get<std::uint32_t>(),
                                snap_to_vertex(p, "station"), props["capacity"].get<int>());
            } else if (kind == "boundary") {
                net.add_boundary_point(snap_to_vertex(p, "boundary point"));
            } else {
                throw GeoJsonError("Point feature needs kind \"station\" or \"boundary\"");
            }
        } else if (type == "Polygon") {
            if (props.value("kind", "") != "bounds")
                throw GeoJsonError("Polygon feature needs kind \"bounds\"");
            if (have_bounds) throw GeoJsonError("more than one bounds polygon");
            const auto& rings = geom.at("coordinates");
            if (rings.empty()) throw GeoJsonError("empty Polygon");
            Polygon poly;
            for (const auto& c : rings[0]) poly.vertices.push_back(detail::parse_coord(c));
            if (poly.vertices.size() > 1 && poly.vertices.front() == poly.vertices.back())
                poly.vertices.pop_back();  // drop the GeoJSON closing vertex
            net.set_bounds(std::move(poly));
            have_bounds = true;
        }
    }

    net.finalize();
    return net;
}

inline StreetNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GeoJsonError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw GeoJsonError(path + ": " + e.what());
    }
    try {
        return network_from_geojson(doc);
    } catch (const nlohmann::json::exception& e) {
        throw GeoJsonError(path + ": malformed GeoJSON: " + e.what());
    }
}

/// Assembles a GeoJSON document from explicit parts (used by the synthetic
/// scenario generator, which knows its own edge list).
inline nlohmann::json geojson_document(const std::vector<Point>& nodes,
                                       const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                                       const std::vector<Station>& stations,
                                       const std::vector<std::uint32_t>& boundary_nodes,
                                       const Polygon& bounds,
                                       const std::vector<Point>* station_pos = nullptr) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& [a, b] : edges) {
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = nlohmann::json::object();
        f["geometry"] = {{"type", "LineString"},
                         {"coordinates",
                          {{nodes[a].x, nodes[a].y}, {nodes[b].x, nodes[b].y}}}};
        features.push_back(std::move(f));
    }
    for (std::size_t i = 0; i < stations.size(); ++i) {
        const Point p = station_pos ? (*station_pos)[i] : nodes[stations[i].node];
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = {{"kind", "station"},
                           {"station_id", stations[i].id},
                           {"capacity", stations[i].capacity}};
        f["geometry"] = {{"type", "Point"}, {"coordinates", {p.x, p.y}}};
        features.push_back(std::move(f));
    }
    for (std::uint32_t n : boundary_nodes) {
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = {{"kind", "boundary"}};
        f["geometry"] = {{"type", "Point"}, {"coordinates", {nodes[n].x, nodes[n].y}}};
        features.push_back(std::move(f));
    }
    {
        nlohmann::json ring = nlohmann::json::array();
        for (const Point& p : bounds.vertices) ring.push_back({p.x, p.y});
        if (!bounds.vertices.empty())
            ring.push_back({bounds.vertices.front().x, bounds.vertices.front().y});
        nlohmann::json f;
        f["type"] = "Feature";
        f["properties"] = {{"kind", "bounds"}};
        f["geometry"] = {{"type", "Polygon"}, {"coordinates", {ring}}};
        features.push_back(std::move(f));
    }
    return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace bikesim
