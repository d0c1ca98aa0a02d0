#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "beaconopt/environment.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/net.hpp"
#include "beaconopt/placement.hpp"
#include "beaconopt/rng.hpp"

namespace beaconopt {

struct EvalConfig {
    int grid_rows = 70;
    int grid_cols = 100;
    int samples_per_location = 30;
    std::vector<double> thresholds{0.1, 0.2, 0.5};
    std::uint64_t seed = 1;
};

inline void validate_eval_config(const EvalConfig& c) {
    auto fail = [](const std::string& what) { throw std::invalid_argument("eval config: " + what); };
    if (c.grid_rows < 1 || c.grid_cols < 1) fail("lattice must be at least 1x1");
    if (c.samples_per_location < 1) fail("samples_per_location must be >= 1");
    for (std::size_t i = 1; i < c.thresholds.size(); ++i)
        if (c.thresholds[i] <= c.thresholds[i - 1]) fail("thresholds must be ascending");
}

struct EvalReport {
    std::string map_name;
    std::string inference;
    double rmse = 0.0;
    double worst_case_rmse = 0.0;
    std::vector<double> thresholds;
    std::vector<double> failure_rates;
    int beacon_count = 0;
    int grid_rows = 0;
    int grid_cols = 0;
    int samples_per_location = 0;
    std::uint64_t seed = 0;
    Point2 lattice_lo, lattice_hi;
    Eigen::MatrixXd mean_error_grid;  // grid_rows x grid_cols, row r = lattice row r
};

// Batch predictor: signals is C x N (one sample per column); `truth` holds
// the matching ground-truth locations and exists only so that the test-time
// oracle can be expressed. Real predictors ignore it.
using BatchPredictor =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& signals, const std::vector<Point2>& truth)>;

inline BatchPredictor net_predictor(const NetParams& params) {
    return [&params](const Eigen::MatrixXd& signals, const std::vector<Point2>&) {
        return forward_eval(params, signals);
    };
}

inline BatchPredictor oracle_predictor() {
    return [](const Eigen::MatrixXd& signals, const std::vector<Point2>& truth) {
        Eigen::MatrixXd out(2, signals.cols());
        for (Eigen::Index i = 0; i < signals.cols(); ++i) {
            out(0, i) = truth[static_cast<std::size_t>(i)].x;
            out(1, i) = truth[static_cast<std::size_t>(i)].y;
        }
        return out;
    };
}

inline BatchPredictor constant_predictor(const Point2& c) {
    return [c](const Eigen::MatrixXd& signals, const std::vector<Point2>&) {
        Eigen::MatrixXd out(2, signals.cols());
        out.row(0).setConstant(c.x);
        out.row(1).setConstant(c.y);
        return out;
    };
}

// Dense evaluation: for every lattice location, draw samples_per_location
// independent hard measurements (per-location substream derived from the eval
// seed), predict, and reduce in fixed lattice order.
//   rmse            over all samples at all locations
//   worst_case_rmse over the worst sample at each location
//   failure_rate(t) fraction of all samples with error > t
inline EvalReport evaluate(const Placement& placement, const BatchPredictor& predictor,
                           const MapSpec& map, const PropagationParams& prop,
                           const EvalConfig& cfg) {
    validate_placement(placement);
    validate_propagation(prop);
    validate_eval_config(cfg);

    const int L = placement.size();
    const int C = placement.channels;
    const int S = cfg.samples_per_location;
    const std::vector<Point2> lattice =
        grid_points(cfg.grid_rows, cfg.grid_cols, {0.0, 0.0}, {map.width, map.height});
    const int n_loc = static_cast<int>(lattice.size());

    EvalReport rep;
    rep.map_name = map.name;
    rep.thresholds = cfg.thresholds;
    rep.beacon_count = placement.beacon_count();
    rep.grid_rows = cfg.grid_rows;
    rep.grid_cols = cfg.grid_cols;
    rep.samples_per_location = S;
    rep.seed = cfg.seed;
    rep.lattice_lo = {0.0, 0.0};
    rep.lattice_hi = {map.width, map.height};
    rep.mean_error_grid.resize(cfg.grid_rows, cfg.grid_cols);

    double sum_sq = 0.0;
    double worst_sum_sq = 0.0;
    std::vector<std::int64_t> exceed(cfg.thresholds.size(), 0);

    const int chunk_locs = std::max(1, 8192 / S);
    Eigen::MatrixXd signals(C, static_cast<Eigen::Index>(chunk_locs) * S);
    std::vector<Point2> truth(static_cast<std::size_t>(chunk_locs) * S);

    for (int base = 0; base < n_loc; base += chunk_locs) {
        const int locs = std::min(chunk_locs, n_loc - base);
        const int cols = locs * S;
        for (int i = 0; i < locs; ++i) {
            const int loc = base + i;
            const Point2 v = lattice[static_cast<std::size_t>(loc)];
            Eigen::VectorXd amps(L);
            amps.setZero();
            for (const auto& bc : placement.beacons())
                amps[bc.index] = std::sqrt(received_power(bc.pos, v, map, prop));
            Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(loc)));
            for (int s = 0; s < S; ++s) {
                const MeasurementDraw draw = draw_measurement(rng, L, C, prop);
                signals.col(i * S + s) = measure_hard(placement, prop, draw, amps);
                truth[static_cast<std::size_t>(i * S + s)] = v;
            }
        }
        const Eigen::MatrixXd pred = predictor(signals.leftCols(cols),
                                               {truth.begin(), truth.begin() + cols});
        if (pred.rows() != 2 || pred.cols() != cols)
            throw std::runtime_error("evaluate: predictor returned a bad shape");

        for (int i = 0; i < locs; ++i) {
            const int loc = base + i;
            const Point2 v = lattice[static_cast<std::size_t>(loc)];
            double loc_sum = 0.0;
            double loc_max = 0.0;
            for (int s = 0; s < S; ++s) {
                const double dx = pred(0, i * S + s) - v.x;
                const double dy = pred(1, i * S + s) - v.y;
                const double e = std::sqrt(dx * dx + dy * dy);
                sum_sq += e * e;
                loc_sum += e;
                loc_max = std::max(loc_max, e);
                for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti)
                    if (e > cfg.thresholds[ti]) ++exceed[ti];
            }
            worst_sum_sq += loc_max * loc_max;
            rep.mean_error_grid(loc / cfg.grid_cols, loc % cfg.grid_cols) =
                loc_sum / static_cast<double>(S);
        }
    }

    const double total = static_cast<double>(n_loc) * S;
    rep.rmse = std::sqrt(sum_sq / total);
    rep.worst_case_rmse = std::sqrt(worst_sum_sq / static_cast<double>(n_loc));
    // worst >= rmse holds mathematically; the two sums round independently,
    // so enforce the documented ordering in the exact-equality case.
    rep.worst_case_rmse = std::max(rep.worst_case_rmse, rep.rmse);
    rep.failure_rates.resize(cfg.thresholds.size());
    for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti)
        rep.failure_rates[ti] = static_cast<double>(exceed[ti]) / total;
    return rep;
}

// --- kNN fingerprinting baseline --------------------------------------------

struct FingerprintDB {
    Eigen::MatrixXd signals;       // C x N
    std::vector<Point2> locations;
    int k = 1;  // default neighbor count

    int size() const { return static_cast<int>(locations.size()); }
};

// One noisy measurement per lattice point, stored with its true location.
inline FingerprintDB knn_build(const Placement& placement, const MapSpec& map,
                               const PropagationParams& prop, int db_rows, int db_cols, Rng& rng) {
    validate_placement(placement);
    if (db_rows < 1 || db_cols < 1) throw std::invalid_argument("knn_build: lattice must be >= 1x1");
    const std::vector<Point2> lattice =
        grid_points(db_rows, db_cols, {0.0, 0.0}, {map.width, map.height});
    FingerprintDB db;
    db.locations = lattice;
    db.signals.resize(placement.channels, static_cast<Eigen::Index>(lattice.size()));
    for (std::size_t i = 0; i < lattice.size(); ++i) {
        const MeasurementDraw draw = draw_measurement(rng, placement.size(), placement.channels, prop);
        db.signals.col(static_cast<Eigen::Index>(i)) =
            measure_hard(lattice[i], placement, map, prop, draw);
    }
    return db;
}

// Mean location of the k entries nearest in signal space; ties broken toward
// the lower entry index. Neighbors are averaged in entry-index order so the
// result does not depend on the order in which the shortlist filled up.
inline Point2 knn_predict(const Eigen::VectorXd& s, const FingerprintDB& db, int k) {
    const int n = db.size();
    if (n == 0) throw std::invalid_argument("knn_predict: empty database");
    if (k < 1 || k > n) throw std::invalid_argument("knn_predict: k out of range");
    // Insertion into a sorted (distance, index) shortlist of size k.
    std::vector<std::pair<double, int>> best;
    best.reserve(static_cast<std::size_t>(k) + 1);
    for (int i = 0; i < n; ++i) {
        const double d2 = (db.signals.col(i) - s).squaredNorm();
        if (static_cast<int>(best.size()) == k && !(d2 < best.back().first)) continue;
        const std::pair<double, int> entry{d2, i};
        auto pos = std::upper_bound(best.begin(), best.end(), entry);
        best.insert(pos, entry);
        if (static_cast<int>(best.size()) > k) best.pop_back();
    }
    std::vector<int> picked;
    picked.reserve(best.size());
    for (const auto& [d2, i] : best) picked.push_back(i);
    std::sort(picked.begin(), picked.end());
    double sx = 0.0, sy = 0.0;
    for (int i : picked) {
        sx += db.locations[static_cast<std::size_t>(i)].x;
        sy += db.locations[static_cast<std::size_t>(i)].y;
    }
    return {sx / k, sy / k};
}

inline BatchPredictor knn_predictor(const FingerprintDB& db, int k) {
    return [&db, k](const Eigen::MatrixXd& signals, const std::vector<Point2>&) {
        Eigen::MatrixXd out(2, signals.cols());
        for (Eigen::Index i = 0; i < signals.cols(); ++i) {
            const Point2 p = knn_predict(signals.col(i), db, k);
            out(0, i) = p.x;
            out(1, i) = p.y;
        }
        return out;
    };
}

// --- Handcrafted placements --------------------------------------------------

enum class ChannelRule { round_robin, random };

inline ChannelRule channel_rule_from_string(const std::string& s) {
    if (s == "round_robin") return ChannelRule::round_robin;
    if (s == "random") return ChannelRule::random;
    throw std::invalid_argument("unknown channel rule '" + s + "' (round_robin|random)");
}

// Beacons on an evenly spaced rows x cols lattice over the full map, channels
// assigned round-robin in row-major order or uniformly at random.
inline Placement handcrafted_lattice(const MapSpec& map, int C, int rows, int cols,
                                     ChannelRule rule, std::uint64_t seed = 0) {
    if (C < 1) throw std::invalid_argument("handcrafted placement: C must be >= 1");
    if (rows < 1 || cols < 1) throw std::invalid_argument("handcrafted placement: empty lattice");
    Placement p;
    p.channels = C;
    p.points = grid_points(rows, cols, {0.0, 0.0}, {map.width, map.height});
    p.slot.resize(p.points.size());
    Rng rng(Rng::derive(seed, 0xbc01));
    for (std::size_t i = 0; i < p.points.size(); ++i) {
        const int channel = rule == ChannelRule::round_robin
                                ? static_cast<int>(i % static_cast<std::size_t>(C))
                                : static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(C)));
        p.slot[i] = channel + 1;
    }
    return p;
}

// Lattice pitch given as a spacing in map units; the lattice starts at the
// origin and is clipped to the map rectangle.
inline Placement handcrafted_placement(const MapSpec& map, int C, double spacing, ChannelRule rule,
                                       std::uint64_t seed = 0) {
    if (!(spacing > 0.0)) throw std::invalid_argument("handcrafted placement: spacing must be > 0");
    if (spacing > map.width || spacing > map.height)
        throw std::invalid_argument("handcrafted placement: spacing exceeds the map extent");
    const int cols = static_cast<int>(std::floor(map.width / spacing + 1e-9)) + 1;
    const int rows = static_cast<int>(std::floor(map.height / spacing + 1e-9)) + 1;
    Placement p;
    p.channels = C;
    p.points.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) p.points.push_back({c * spacing, r * spacing});
    p.slot.resize(p.points.size());
    Rng rng(Rng::derive(seed, 0xbc01));
    for (std::size_t i = 0; i < p.points.size(); ++i) {
        const int channel = rule == ChannelRule::round_robin
                                ? static_cast<int>(i % static_cast<std::size_t>(C))
                                : static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(C)));
        p.slot[i] = channel + 1;
    }
    return p;
}

// --- Report serialization -----------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["map"] = r.map_name;
    j["inference"] = r.inference;
    j["rmse"] = r.rmse;
    j["worst_case_rmse"] = r.worst_case_rmse;
    j["thresholds"] = r.thresholds;
    j["failure_rates"] = r.failure_rates;
    j["beacon_count"] = r.beacon_count;
    j["grid_rows"] = r.grid_rows;
    j["grid_cols"] = r.grid_cols;
    j["samples_per_location"] = r.samples_per_location;
    j["seed"] = r.seed;
    j["lattice_extent"] = {{r.lattice_lo.x, r.lattice_lo.y}, {r.lattice_hi.x, r.lattice_hi.y}};
    nlohmann::json grid = nlohmann::json::array();
    for (int r_i = 0; r_i < r.grid_rows; ++r_i) {
        nlohmann::json row = nlohmann::json::array();
        for (int c_i = 0; c_i < r.grid_cols; ++c_i) row.push_back(r.mean_error_grid(r_i, c_i));
        grid.push_back(row);
    }
    j["mean_error_grid"] = grid;
    return j;
}

inline void save_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report file: " + path);
    out << report_to_json(r).dump(2) << '\n';
}

// Mean-error grid as CSV, row-major, with the map name and lattice extents in
// a header line.
inline void error_map(const EvalReport& r, const std::string& path) {
    if (r.mean_error_grid.size() == 0 || r.grid_rows < 1 || r.grid_cols < 1)
        throw std::invalid_argument("error_map: report has no per-location grid");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write error map: " + path);
    out << "# map=" << r.map_name << ",rows=" << r.grid_rows << ",cols=" << r.grid_cols;
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << ",x0=" << fmt(r.lattice_lo.x) << ",y0=" << fmt(r.lattice_lo.y)
        << ",x1=" << fmt(r.lattice_hi.x) << ",y1=" << fmt(r.lattice_hi.y) << '\n';
    for (int r_i = 0; r_i < r.grid_rows; ++r_i) {
        for (int c_i = 0; c_i < r.grid_cols; ++c_i) {
            if (c_i) out << ',';
            out << fmt(r.mean_error_grid(r_i, c_i));
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Reads back an error-map CSV (header line skipped).
inline Eigen::MatrixXd read_error_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open error map: " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("error map has no data: " + path);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw std::runtime_error("ragged error map: " + path);
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

}  // namespace beaconopt
