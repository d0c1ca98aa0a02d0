#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "beaconopt/placement.hpp"
#include "beaconopt/rng.hpp"

namespace beaconopt {

// Quadratic temperature schedule alpha(t) = alpha0 * (1 + gamma * t^2). From
// argmax_switch_iter on, callers must freeze the placement via harden()
// instead of sharpening the softmax further.
struct TemperatureSchedule {
    double alpha0 = 1.0;
    double gamma = 1.25e-9;
    std::int64_t argmax_switch_iter = 900000;
};

inline void validate_schedule(const TemperatureSchedule& s) {
    if (!(s.alpha0 > 0.0)) throw std::invalid_argument("temperature: alpha0 must be > 0");
    if (!(s.gamma >= 0.0)) throw std::invalid_argument("temperature: gamma must be >= 0");
}

struct AlphaAt {
    double alpha;
    bool use_argmax;  // true once the placement must be hardened
};

inline AlphaAt alpha_at(std::int64_t t, const TemperatureSchedule& s) {
    const double td = static_cast<double>(t);
    // gamma * (t*t): this association keeps alpha exact for the reference
    // constants (alpha0=1, gamma=1.25e-9, t=9e5 -> 1013.5).
    return {s.alpha0 * (1.0 + s.gamma * (td * td)), t >= s.argmax_switch_iter};
}

enum class RegMode { fixed, annealed };

// Sign convention for the beacon-count regularizer. `penalize_beacons` charges
// lambda per unit of placed-beacon mass, sum_l (1 - I_l^1); `as_printed`
// charges the no-beacon mass sum_l I_l^1 instead (kept for comparison runs).
enum class RegSign { penalize_beacons, as_printed };

struct RegSchedule {
    RegMode mode = RegMode::fixed;
    double lambda0 = 0.0;
    double eta = 0.25;           // decay factor per period (annealed mode)
    std::int64_t period = 100000;
    RegSign sign = RegSign::penalize_beacons;
};

inline void validate_schedule(const RegSchedule& s) {
    if (!(s.lambda0 >= 0.0)) throw std::invalid_argument("reg: lambda0 must be >= 0");
    if (s.mode == RegMode::annealed) {
        if (!(s.eta > 0.0 && s.eta <= 1.0)) throw std::invalid_argument("reg: eta must be in (0,1]");
        if (s.period < 1) throw std::invalid_argument("reg: period must be >= 1");
    }
}

inline double lambda_at(std::int64_t t, const RegSchedule& s) {
    if (s.mode == RegMode::fixed) return s.lambda0;
    const std::int64_t k = t / s.period;
    double decay = 1.0;
    if (k < 512) {
        for (std::int64_t i = 0; i < k; ++i) decay *= s.eta;
    } else {
        decay = std::pow(s.eta, static_cast<double>(k));
    }
    return s.lambda0 * decay;
}

// Logits of the beacon layer, (C+1) x L with column l the logit vector of
// candidate l. Slot 0 is "no beacon"; slot c+1 is channel c.
inline Eigen::MatrixXd init_logits(int L, int C, Rng& rng, double stddev = 0.01) {
    Eigen::MatrixXd w(C + 1, L);
    for (int l = 0; l < L; ++l)
        for (int s = 0; s <= C; ++s) w(s, l) = stddev * rng.normal();
    return w;
}

// Row-wise tempered softmax (per candidate column): exp(alpha*w) normalized,
// with max subtraction for overflow safety.
inline Eigen::MatrixXd softmax_assign(const Eigen::MatrixXd& w, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("softmax_assign: alpha must be > 0");
    const int slots = static_cast<int>(w.rows());
    const int L = static_cast<int>(w.cols());
    Eigen::MatrixXd out(slots, L);
    for (int l = 0; l < L; ++l) {
        double m = w(0, l);
        for (int s = 1; s < slots; ++s) m = std::max(m, w(s, l));
        double sum = 0.0;
        for (int s = 0; s < slots; ++s) {
            const double e = std::exp(alpha * (w(s, l) - m));
            out(s, l) = e;
            sum += e;
        }
        for (int s = 0; s < slots; ++s) out(s, l) /= sum;
    }
    return out;
}

// Backward through the tempered softmax:
// dw_l = alpha * (diag(p) - p p^T) d_assign_l with p the softmax column.
inline Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& assign, double alpha,
                                        const Eigen::MatrixXd& d_assign) {
    if (assign.rows() != d_assign.rows() || assign.cols() != d_assign.cols())
        throw std::invalid_argument("softmax_backward: shape mismatch");
    const int slots = static_cast<int>(assign.rows());
    const int L = static_cast<int>(assign.cols());
    Eigen::MatrixXd dw(slots, L);
    for (int l = 0; l < L; ++l) {
        double dot = 0.0;
        for (int s = 0; s < slots; ++s) dot += assign(s, l) * d_assign(s, l);
        for (int s = 0; s < slots; ++s)
            dw(s, l) = alpha * assign(s, l) * (d_assign(s, l) - dot);
    }
    return dw;
}

// Hard assignment: per-candidate argmax over logits, ties to the lowest slot.
inline Placement harden(const Eigen::MatrixXd& w, std::vector<Point2> points) {
    const int slots = static_cast<int>(w.rows());
    const int L = static_cast<int>(w.cols());
    if (L != static_cast<int>(points.size()))
        throw std::invalid_argument("harden: logits / points size mismatch");
    Placement p;
    p.channels = slots - 1;
    p.points = std::move(points);
    p.slot.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        int best = 0;
        for (int s = 1; s < slots; ++s)
            if (w(s, l) > w(best, l)) best = s;
        p.slot[static_cast<std::size_t>(l)] = best;
    }
    return p;
}

struct RegResult {
    double value = 0.0;
    Eigen::MatrixXd d_assign;  // (C+1) x L
};

// Beacon-count regularizer. With the default sign the value is
// lambda * sum_l (1 - assign(0, l)): the expected number of placed beacons
// weighted by lambda.
inline RegResult regularizer(const Eigen::MatrixXd& assign, double lambda,
                             RegSign sign = RegSign::penalize_beacons) {
    const int L = static_cast<int>(assign.cols());
    RegResult r;
    r.d_assign = Eigen::MatrixXd::Zero(assign.rows(), assign.cols());
    double mass = 0.0;
    for (int l = 0; l < L; ++l) mass += assign(0, l);
    if (sign == RegSign::penalize_beacons) {
        r.value = lambda * (static_cast<double>(L) - mass);
        r.d_assign.row(0).setConstant(-lambda);
    } else {
        r.value = lambda * mass;
        r.d_assign.row(0).setConstant(lambda);
    }
    return r;
}

}  // namespace beaconopt
