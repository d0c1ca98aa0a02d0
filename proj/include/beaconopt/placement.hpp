#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "beaconopt/geometry.hpp"

namespace beaconopt {

// A hard beacon assignment: one slot per candidate point. Slot 0 means "no
// beacon"; slot c in 1..C places a beacon broadcasting on channel c-1.
struct Placement {
    int channels = 0;            // C
    std::vector<Point2> points;  // candidate coordinates, one per slot entry
    std::vector<int> slot;

    struct Beacon {
        int index;    // candidate index
        Point2 pos;
        int channel;  // 0-based
    };

    int size() const { return static_cast<int>(points.size()); }

    int beacon_count() const {
        int n = 0;
        for (int s : slot)
            if (s > 0) ++n;
        return n;
    }

    std::vector<Beacon> beacons() const {
        std::vector<Beacon> out;
        for (std::size_t i = 0; i < slot.size(); ++i)
            if (slot[i] > 0) out.push_back({static_cast<int>(i), points[i], slot[i] - 1});
        return out;
    }

    // Candidate indices per channel, ascending.
    std::vector<std::vector<int>> per_channel_indices() const {
        std::vector<std::vector<int>> by_channel(static_cast<std::size_t>(channels));
        for (std::size_t i = 0; i < slot.size(); ++i)
            if (slot[i] > 0) by_channel[static_cast<std::size_t>(slot[i] - 1)].push_back(static_cast<int>(i));
        return by_channel;
    }
};

inline void validate_placement(const Placement& p) {
    if (p.channels < 1) throw std::invalid_argument("placement: channels must be >= 1");
    if (p.points.size() != p.slot.size())
        throw std::invalid_argument("placement: points/slot size mismatch");
    if (p.points.empty()) throw std::invalid_argument("placement: empty");
    for (int s : p.slot)
        if (s < 0 || s > p.channels)
            throw std::invalid_argument("placement: slot out of range 0..C");
}

// Builds a Placement from an explicit one-hot assignment matrix, laid out as
// (C+1) x L with column l the assignment vector of candidate l.
inline Placement placement_from_one_hot(const Eigen::MatrixXd& assign, std::vector<Point2> points) {
    const int slots = static_cast<int>(assign.rows());
    const int L = static_cast<int>(assign.cols());
    if (slots < 2) throw std::invalid_argument("assignment matrix needs C+1 >= 2 rows");
    if (L != static_cast<int>(points.size()))
        throw std::invalid_argument("assignment matrix / points size mismatch");
    Placement p;
    p.channels = slots - 1;
    p.points = std::move(points);
    p.slot.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        int hot = -1;
        for (int s = 0; s < slots; ++s) {
            const double v = assign(s, l);
            if (v == 1.0) {
                if (hot >= 0) throw std::invalid_argument("row " + std::to_string(l) + " is not one-hot");
                hot = s;
            } else if (v != 0.0) {
                throw std::invalid_argument("row " + std::to_string(l) + " is not one-hot");
            }
        }
        if (hot < 0) throw std::invalid_argument("row " + std::to_string(l) + " is not one-hot");
        p.slot[static_cast<std::size_t>(l)] = hot;
    }
    return p;
}

inline nlohmann::json placement_to_json(const Placement& p, const std::string& map_name) {
    nlohmann::json j;
    j["map"] = map_name;
    j["C"] = p.channels;
    j["assignments"] = p.slot;
    nlohmann::json locs = nlohmann::json::array();
    for (const Point2& pt : p.points) locs.push_back({pt.x, pt.y});
    j["locations"] = locs;
    return j;
}

inline Placement placement_from_json(const nlohmann::json& j) {
    Placement p;
    try {
        p.channels = j.at("C").get<int>();
        for (const auto& a : j.at("assignments")) {
            int s = a.get<int>();
            if (s < 0) s = 0;  // -1 is an accepted encoding for "no beacon"
            p.slot.push_back(s);
        }
        for (const auto& l : j.at("locations"))
            p.points.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("placement schema error: ") + e.what());
    }
    validate_placement(p);
    return p;
}

inline void save_placement(const Placement& p, const std::string& map_name, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write placement file: " + path);
    out << placement_to_json(p, map_name).dump(2) << '\n';
}

inline Placement load_placement(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open placement file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("placement file " + path + ": " + e.what());
    }
    return placement_from_json(j);
}

}  // namespace beaconopt
