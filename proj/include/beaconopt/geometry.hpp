#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beaconopt/rng.hpp"

namespace beaconopt {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Segment {
    Point2 a;
    Point2 b;
};

inline double distance(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Candidate beacon grid: rows x cols points over [lo, hi], corners included.
// Without an explicit extent the grid spans the full map rectangle.
struct GridSpec {
    int rows = 1;
    int cols = 1;
    bool has_extent = false;
    Point2 lo;
    Point2 hi;
};

struct MapSpec {
    std::string name;
    double width = 0.0;
    double height = 0.0;
    std::vector<Segment> walls;
    GridSpec grid;

    int candidate_count() const { return grid.rows * grid.cols; }

    Point2 grid_lo() const { return grid.has_extent ? grid.lo : Point2{0.0, 0.0}; }
    Point2 grid_hi() const { return grid.has_extent ? grid.hi : Point2{width, height}; }
};

inline void validate_map(const MapSpec& map) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("map '" + map.name + "': " + what);
    };
    if (!(map.width > 0.0) || !std::isfinite(map.width)) fail("width must be > 0");
    if (!(map.height > 0.0) || !std::isfinite(map.height)) fail("height must be > 0");
    for (std::size_t i = 0; i < map.walls.size(); ++i) {
        const Segment& w = map.walls[i];
        const std::string field = "walls[" + std::to_string(i) + "]";
        for (const Point2* p : {&w.a, &w.b}) {
            if (!std::isfinite(p->x) || !std::isfinite(p->y)) fail(field + " has non-finite endpoint");
            if (p->x < 0.0 || p->x > map.width || p->y < 0.0 || p->y > map.height)
                fail(field + " endpoint out of bounds");
        }
        if (w.a.x == w.b.x && w.a.y == w.b.y) fail(field + " has zero length");
    }
    if (map.grid.rows < 1) fail("grid.rows must be >= 1");
    if (map.grid.cols < 1) fail("grid.cols must be >= 1");
    if (map.grid.has_extent) {
        const Point2& lo = map.grid.lo;
        const Point2& hi = map.grid.hi;
        if (!std::isfinite(lo.x) || !std::isfinite(lo.y) || !std::isfinite(hi.x) || !std::isfinite(hi.y))
            fail("grid.extent has non-finite coordinate");
        if (lo.x > hi.x || lo.y > hi.y) fail("grid.extent is inverted");
        if (lo.x < 0.0 || lo.y < 0.0 || hi.x > map.width || hi.y > map.height)
            fail("grid.extent exceeds the map rectangle");
    }
}

// rows x cols evenly spaced points over [lo, hi] in row-major order (y varies
// across rows, x across columns); corners land exactly on the extent.
inline std::vector<Point2> grid_points(int rows, int cols, const Point2& lo, const Point2& hi) {
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        const double y = (rows == 1)     ? lo.y
                         : (r == rows - 1) ? hi.y
                                           : lo.y + (hi.y - lo.y) * r / (rows - 1);
        for (int c = 0; c < cols; ++c) {
            const double x = (cols == 1)     ? lo.x
                             : (c == cols - 1) ? hi.x
                                               : lo.x + (hi.x - lo.x) * c / (cols - 1);
            pts.push_back({x, y});
        }
    }
    return pts;
}

inline std::vector<Point2> candidate_locations(const MapSpec& map) {
    return grid_points(map.grid.rows, map.grid.cols, map.grid_lo(), map.grid_hi());
}

namespace detail {

// Signed area of triangle (a, b, p); 0 means collinear.
inline double orient(const Point2& a, const Point2& b, const Point2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

inline bool in_bbox(const Point2& p, const Point2& a, const Point2& b) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

}  // namespace detail

// Closed-segment intersection test. Endpoint touches and collinear overlap
// count as intersections.
inline bool segments_intersect(const Segment& s, const Segment& t) {
    using detail::in_bbox;
    using detail::orient;
    const double d1 = orient(t.a, t.b, s.a);
    const double d2 = orient(t.a, t.b, s.b);
    const double d3 = orient(s.a, s.b, t.a);
    const double d4 = orient(s.a, s.b, t.b);
    if (((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) &&
        ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)))
        return true;
    if (d1 == 0.0 && in_bbox(s.a, t.a, t.b)) return true;
    if (d2 == 0.0 && in_bbox(s.b, t.a, t.b)) return true;
    if (d3 == 0.0 && in_bbox(t.a, s.a, s.b)) return true;
    if (d4 == 0.0 && in_bbox(t.b, s.a, s.b)) return true;
    return false;
}

// Number of walls obstructing the line of sight between a and b. Each wall
// counts at most once.
inline int crossing_count(const Point2& a, const Point2& b, const MapSpec& map) {
    const Segment los{a, b};
    int count = 0;
    for (const Segment& w : map.walls)
        if (segments_intersect(los, w)) ++count;
    return count;
}

// n i.i.d. agent locations, uniform over the map rectangle.
inline std::vector<Point2> sample_locations(const MapSpec& map, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_locations: n must be >= 1");
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = map.width * rng.uniform();
        const double y = map.height * rng.uniform();
        pts.push_back({x, y});
    }
    return pts;
}

inline nlohmann::json map_to_json(const MapSpec& map) {
    nlohmann::json j;
    j["name"] = map.name;
    j["width"] = map.width;
    j["height"] = map.height;
    nlohmann::json walls = nlohmann::json::array();
    for (const Segment& w : map.walls)
        walls.push_back({{w.a.x, w.a.y}, {w.b.x, w.b.y}});
    j["walls"] = walls;
    nlohmann::json grid;
    grid["rows"] = map.grid.rows;
    grid["cols"] = map.grid.cols;
    if (map.grid.has_extent)
        grid["extent"] = {{map.grid.lo.x, map.grid.lo.y}, {map.grid.hi.x, map.grid.hi.y}};
    j["grid"] = grid;
    return j;
}

inline MapSpec map_from_json(const nlohmann::json& j) {
    MapSpec map;
    try {
        map.name = j.value("name", std::string{});
        map.width = j.at("width").get<double>();
        map.height = j.at("height").get<double>();
        if (j.contains("walls")) {
            for (const auto& w : j.at("walls")) {
                Segment s;
                s.a = {w.at(0).at(0).get<double>(), w.at(0).at(1).get<double>()};
                s.b = {w.at(1).at(0).get<double>(), w.at(1).at(1).get<double>()};
                map.walls.push_back(s);
            }
        }
        const auto& g = j.at("grid");
        map.grid.rows = g.at("rows").get<int>();
        map.grid.cols = g.at("cols").get<int>();
        if (g.contains("extent")) {
            map.grid.has_extent = true;
            const auto& e = g.at("extent");
            map.grid.lo = {e.at(0).at(0).get<double>(), e.at(0).at(1).get<double>()};
            map.grid.hi = {e.at(1).at(0).get<double>(), e.at(1).at(1).get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("map schema error: ") + e.what());
    }
    validate_map(map);
    return map;
}

inline MapSpec load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open map file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("map file " + path + ": " + e.what());
    }
    try {
        return map_from_json(j);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("map file " + path + ": " + e.what());
    }
}

inline void save_map(const MapSpec& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write map file: " + path);
    out << map_to_json(map).dump(2) << '\n';
}

}  // namespace beaconopt
