#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "beaconopt/geometry.hpp"
#include "beaconopt/placement.hpp"
#include "beaconopt/rng.hpp"

namespace beaconopt {

// Constants of the propagation and measurement model. Powers are in signal
// units, distances in map units. r_min bounds the distance so that received
// power (and its gradient) stays finite when an agent sits on a beacon.
struct PropagationParams {
    double P0 = 6.25e-4;             // transmit power
    double zeta = 2.0;               // path-loss exponent
    double beta = 0.36787944117144233;  // per-wall attenuation factor, e^-1
    double sigma_z2 = 1e-4;          // sensor noise variance
    double tau = 1.0;                // saturation threshold
    double r_min = 1e-3;             // distance clamp
};

inline void validate_propagation(const PropagationParams& p) {
    auto fail = [](const std::string& what) {
        throw std::invalid_argument("propagation: " + what);
    };
    if (!(p.P0 > 0.0)) fail("P0 must be > 0");
    if (!(p.zeta >= 0.0)) fail("zeta must be >= 0");
    if (!(p.beta > 0.0 && p.beta <= 1.0)) fail("beta must be in (0,1]");
    if (!(p.sigma_z2 >= 0.0)) fail("sigma_z2 must be >= 0");
    if (!(p.tau > 0.0)) fail("tau must be > 0");
    if (!(p.r_min > 0.0)) fail("r_min must be > 0");
}

namespace detail {

// Single shared phase-to-phasor routine. Kept out of line so that every
// measurement path evaluates cos/sin through the same machine code; inlining
// lets the compiler pick call-site-dependent sincos fusions whose last bits
// differ, which would break the exact soft/hard reduction guarantee.
[[gnu::noinline]] inline void phase_components(double phi, double& c, double& s) {
    c = std::cos(phi);
    s = std::sin(phi);
}

// beta^o for small integer wall counts.
inline double wall_attenuation(double beta, int o) {
    if (o < 16) {
        double a = 1.0;
        for (int i = 0; i < o; ++i) a *= beta;
        return a;
    }
    return std::pow(beta, o);
}

}  // namespace detail

// Received power from a transmitter at `beacon` measured at `v`:
// P0 * max(r, r_min)^-zeta * beta^o, with o the wall-crossing count.
inline double received_power(const Point2& beacon, const Point2& v, const MapSpec& map,
                             const PropagationParams& p) {
    const double dx = beacon.x - v.x;
    const double dy = beacon.y - v.y;
    const double r2 = std::max(dx * dx + dy * dy, p.r_min * p.r_min);
    const int o = crossing_count(beacon, v, map);
    const double falloff = (p.zeta == 2.0) ? p.P0 / r2 : p.P0 * std::pow(r2, -0.5 * p.zeta);
    return falloff * detail::wall_attenuation(p.beta, o);
}

// One stochastic draw of the environment: a phase per candidate location and
// an (eps1, eps2) noise pair per channel.
struct MeasurementDraw {
    Eigen::VectorXd phases;  // L, uniform on [0, 2*pi)
    Eigen::MatrixXd noise;   // 2 x C; row 0 = eps1, row 1 = eps2
};

inline MeasurementDraw draw_measurement(Rng& rng, int L, int C, const PropagationParams& p) {
    if (L < 1 || C < 1) throw std::invalid_argument("draw_measurement: L and C must be >= 1");
    MeasurementDraw d;
    d.phases.resize(L);
    for (int l = 0; l < L; ++l) d.phases[l] = kTwoPi * rng.uniform();
    d.noise.resize(2, C);
    const double sd = std::sqrt(p.sigma_z2);
    for (int c = 0; c < C; ++c) {
        d.noise(0, c) = sd * rng.normal();
        d.noise(1, c) = sd * rng.normal();
    }
    return d;
}

// Amplitudes sqrt(P_l(v)) of every candidate at a single receiver location.
inline Eigen::VectorXd amplitude_column(const Point2& v, const std::vector<Point2>& candidates,
                                        const MapSpec& map, const PropagationParams& p) {
    Eigen::VectorXd a(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t l = 0; l < candidates.size(); ++l)
        a[static_cast<Eigen::Index>(l)] = std::sqrt(received_power(candidates[l], v, map, p));
    return a;
}

// Draw-independent amplitude table: column i holds the L candidate amplitudes
// at batch[i]. Reusable across every draw at the same locations.
inline Eigen::MatrixXd amplitude_table(const std::vector<Point2>& batch,
                                       const std::vector<Point2>& candidates, const MapSpec& map,
                                       const PropagationParams& p) {
    Eigen::MatrixXd t(static_cast<Eigen::Index>(candidates.size()),
                      static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i)
        t.col(static_cast<Eigen::Index>(i)) = amplitude_column(batch[i], candidates, map, p);
    return t;
}

inline Eigen::MatrixXd amplitude_table(const std::vector<Point2>& batch, const MapSpec& map,
                                       const PropagationParams& p) {
    return amplitude_table(batch, candidate_locations(map), map, p);
}

// Amplitude table restricted to placed beacons; empty slots read 0. Values at
// placed slots match amplitude_table exactly.
inline Eigen::MatrixXd amplitude_table_placed(const std::vector<Point2>& batch,
                                              const Placement& placement, const MapSpec& map,
                                              const PropagationParams& p) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(placement.size(), static_cast<Eigen::Index>(batch.size()));
    const auto beacons = placement.beacons();
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (const auto& bc : beacons)
            t(bc.index, static_cast<Eigen::Index>(i)) =
                std::sqrt(received_power(bc.pos, batch[i], map, p));
    return t;
}

namespace detail {

// Shared Eq.-4 accumulation kernel. Walks candidates in ascending index order
// (bitwise reproducibility) and adds each weighted amplitude phasor to its
// channel accumulators. `weight(l, c)` supplies the assignment coefficient.
template <typename WeightFn>
inline void accumulate_phasors(int L, int C, const double* amps, const double* cosph,
                               const double* sinph, const double* eps1, const double* eps2,
                               WeightFn&& weight, double* xc, double* yc) {
    for (int c = 0; c < C; ++c) {
        xc[c] = eps1[c];
        yc[c] = eps2[c];
    }
    for (int l = 0; l < L; ++l) {
        const double ac = amps[l] * cosph[l];
        const double as = amps[l] * sinph[l];
        for (int c = 0; c < C; ++c) {
            const double w = weight(l, c);
            xc[c] += w * ac;
            yc[c] += w * as;
        }
    }
}

inline void validate_simplex(const Eigen::MatrixXd& assign) {
    constexpr double tol = 1e-9;
    for (Eigen::Index l = 0; l < assign.cols(); ++l) {
        double sum = 0.0;
        for (Eigen::Index s = 0; s < assign.rows(); ++s) {
            const double v = assign(s, l);
            if (!(v >= -tol))
                throw std::invalid_argument("assignment column " + std::to_string(l) +
                                            " has a negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol)
            throw std::invalid_argument("assignment column " + std::to_string(l) +
                                        " does not sum to 1");
    }
}

}  // namespace detail

// Per-channel measured power for a hard placement (Eq. 4 with one-hot I),
// clipped at tau. Candidate amplitudes are taken from `amps` so that a
// precomputed table and direct evaluation agree bit for bit.
inline Eigen::VectorXd measure_hard(const Placement& placement, const PropagationParams& p,
                                    const MeasurementDraw& draw, const Eigen::VectorXd& amps) {
    const int L = placement.size();
    const int C = placement.channels;
    if (draw.phases.size() != L || draw.noise.cols() != C)
        throw std::invalid_argument("measure_hard: draw shape mismatch");
    if (amps.size() != L) throw std::invalid_argument("measure_hard: amplitude size mismatch");

    Eigen::VectorXd xc(C), yc(C);
    for (int c = 0; c < C; ++c) {
        xc[c] = draw.noise(0, c);
        yc[c] = draw.noise(1, c);
    }
    for (int l = 0; l < L; ++l) {
        const int s = placement.slot[static_cast<std::size_t>(l)];
        if (s == 0) continue;
        double cp, sp;
        detail::phase_components(draw.phases[l], cp, sp);
        xc[s - 1] += amps[l] * cp;
        yc[s - 1] += amps[l] * sp;
    }
    Eigen::VectorXd s(C);
    for (int c = 0; c < C; ++c) s[c] = std::min(p.tau, xc[c] * xc[c] + yc[c] * yc[c]);
    return s;
}

inline Eigen::VectorXd measure_hard(const Point2& v, const Placement& placement, const MapSpec& map,
                                    const PropagationParams& p, const MeasurementDraw& draw) {
    Eigen::VectorXd amps(placement.size());
    for (int l = 0; l < placement.size(); ++l)
        amps[l] = placement.slot[static_cast<std::size_t>(l)] > 0
                      ? std::sqrt(received_power(placement.points[static_cast<std::size_t>(l)], v, map, p))
                      : 0.0;
    return measure_hard(placement, p, draw, amps);
}

// Everything the backward pass needs to differentiate one soft measurement.
struct SoftMeasureCache {
    Eigen::VectorXd amps;     // L
    Eigen::VectorXd cos_ph;   // L
    Eigen::VectorXd sin_ph;   // L
    Eigen::VectorXd xc, yc;   // C accumulators including noise
    Eigen::VectorXd pre_clip; // C
    double tau = 0.0;
    int L = 0;
    int C = 0;
};

// Distributional measurement: Eq. 4 with the relaxed assignment substituted
// for the one-hot vectors. `assign` is (C+1) x L, columns on the simplex.
inline std::pair<Eigen::VectorXd, SoftMeasureCache> measure_soft(const Eigen::MatrixXd& assign,
                                                                 const PropagationParams& p,
                                                                 const MeasurementDraw& draw,
                                                                 const Eigen::VectorXd& amps) {
    const int L = static_cast<int>(assign.cols());
    const int C = static_cast<int>(assign.rows()) - 1;
    if (C < 1) throw std::invalid_argument("measure_soft: assignment needs C+1 >= 2 rows");
    if (draw.phases.size() != L || draw.noise.cols() != C)
        throw std::invalid_argument("measure_soft: draw shape mismatch");
    if (amps.size() != L) throw std::invalid_argument("measure_soft: amplitude size mismatch");
    detail::validate_simplex(assign);

    SoftMeasureCache cache;
    cache.tau = p.tau;
    cache.L = L;
    cache.C = C;
    cache.amps = amps;
    cache.cos_ph.resize(L);
    cache.sin_ph.resize(L);
    for (int l = 0; l < L; ++l)
        detail::phase_components(draw.phases[l], cache.cos_ph[l], cache.sin_ph[l]);
    const Eigen::VectorXd eps1 = draw.noise.row(0).transpose();
    const Eigen::VectorXd eps2 = draw.noise.row(1).transpose();
    cache.xc.resize(C);
    cache.yc.resize(C);
    detail::accumulate_phasors(
        L, C, cache.amps.data(), cache.cos_ph.data(), cache.sin_ph.data(), eps1.data(),
        eps2.data(), [&](int l, int c) { return assign(c + 1, l); }, cache.xc.data(),
        cache.yc.data());
    cache.pre_clip.resize(C);
    Eigen::VectorXd s(C);
    for (int c = 0; c < C; ++c) {
        cache.pre_clip[c] = cache.xc[c] * cache.xc[c] + cache.yc[c] * cache.yc[c];
        s[c] = std::min(p.tau, cache.pre_clip[c]);
    }
    return {std::move(s), std::move(cache)};
}

inline std::pair<Eigen::VectorXd, SoftMeasureCache> measure_soft(const Point2& v,
                                                                 const Eigen::MatrixXd& assign,
                                                                 const std::vector<Point2>& candidates,
                                                                 const MapSpec& map,
                                                                 const PropagationParams& p,
                                                                 const MeasurementDraw& draw) {
    return measure_soft(assign, p, draw, amplitude_column(v, candidates, map, p));
}

// Exact gradient of the clipped Eq. 4 w.r.t. the relaxed assignment. Saturated
// channels (pre-clip power >= tau) contribute nothing; the no-beacon slot
// never enters the measurement, so its row stays zero.
inline Eigen::MatrixXd measure_soft_backward(const SoftMeasureCache& cache,
                                             const Eigen::VectorXd& ds) {
    if (ds.size() != cache.C) throw std::invalid_argument("measure_soft_backward: ds size mismatch");
    Eigen::MatrixXd d_assign = Eigen::MatrixXd::Zero(cache.C + 1, cache.L);
    Eigen::VectorXd gx(cache.C), gy(cache.C);
    for (int c = 0; c < cache.C; ++c) {
        const double g = (cache.pre_clip[c] >= cache.tau) ? 0.0 : ds[c];
        gx[c] = 2.0 * g * cache.xc[c];
        gy[c] = 2.0 * g * cache.yc[c];
    }
    for (int l = 0; l < cache.L; ++l) {
        const double ac = cache.amps[l] * cache.cos_ph[l];
        const double as = cache.amps[l] * cache.sin_ph[l];
        for (int c = 0; c < cache.C; ++c) d_assign(c + 1, l) = gx[c] * ac + gy[c] * as;
    }
    return d_assign;
}

// ---------------------------------------------------------------------------
// Batched forms used by the training loop. A batch draw is exactly B
// sequential draw_measurement calls; the batched measurements apply the same
// per-location kernels column by column.

struct BatchDraw {
    Eigen::MatrixXd phases;  // L x B
    Eigen::MatrixXd eps1;    // C x B
    Eigen::MatrixXd eps2;    // C x B
};

inline BatchDraw draw_measurement_batch(Rng& rng, int L, int C, int B, const PropagationParams& p) {
    BatchDraw d;
    d.phases.resize(L, B);
    d.eps1.resize(C, B);
    d.eps2.resize(C, B);
    const double sd = std::sqrt(p.sigma_z2);
    for (int b = 0; b < B; ++b) {
        for (int l = 0; l < L; ++l) d.phases(l, b) = kTwoPi * rng.uniform();
        for (int c = 0; c < C; ++c) {
            d.eps1(c, b) = sd * rng.normal();
            d.eps2(c, b) = sd * rng.normal();
        }
    }
    return d;
}

struct SoftBatchCache {
    Eigen::MatrixXd amps;      // L x B
    Eigen::MatrixXd cos_ph;    // L x B
    Eigen::MatrixXd sin_ph;    // L x B
    Eigen::MatrixXd xc, yc;    // C x B
    Eigen::MatrixXd pre_clip;  // C x B
    double tau = 0.0;
    int L = 0, C = 0, B = 0;
};

inline Eigen::MatrixXd measure_soft_batch(const Eigen::MatrixXd& assign, const PropagationParams& p,
                                          const BatchDraw& draw, const Eigen::MatrixXd& amps,
                                          SoftBatchCache& cache) {
    const int L = static_cast<int>(assign.cols());
    const int C = static_cast<int>(assign.rows()) - 1;
    const int B = static_cast<int>(draw.phases.cols());
    if (draw.phases.rows() != L || amps.rows() != L || amps.cols() != B)
        throw std::invalid_argument("measure_soft_batch: shape mismatch");
    detail::validate_simplex(assign);

    cache.tau = p.tau;
    cache.L = L;
    cache.C = C;
    cache.B = B;
    cache.amps = amps;
    cache.cos_ph.resize(L, B);
    cache.sin_ph.resize(L, B);
    for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
            detail::phase_components(draw.phases(l, b), cache.cos_ph(l, b), cache.sin_ph(l, b));
    cache.xc.resize(C, B);
    cache.yc.resize(C, B);
    cache.pre_clip.resize(C, B);
    Eigen::MatrixXd s(C, B);
    for (int b = 0; b < B; ++b) {
        detail::accumulate_phasors(
            L, C, cache.amps.col(b).data(), cache.cos_ph.col(b).data(), cache.sin_ph.col(b).data(),
            draw.eps1.col(b).data(), draw.eps2.col(b).data(),
            [&](int l, int c) { return assign(c + 1, l); }, cache.xc.col(b).data(),
            cache.yc.col(b).data());
        for (int c = 0; c < C; ++c) {
            const double pre = cache.xc(c, b) * cache.xc(c, b) + cache.yc(c, b) * cache.yc(c, b);
            cache.pre_clip(c, b) = pre;
            s(c, b) = std::min(p.tau, pre);
        }
    }
    return s;
}

// Gradient w.r.t. the shared assignment, summed over the batch in ascending
// location order.
inline Eigen::MatrixXd measure_soft_backward_batch(const SoftBatchCache& cache,
                                                   const Eigen::MatrixXd& dS) {
    if (dS.rows() != cache.C || dS.cols() != cache.B)
        throw std::invalid_argument("measure_soft_backward_batch: dS shape mismatch");
    Eigen::MatrixXd d_assign = Eigen::MatrixXd::Zero(cache.C + 1, cache.L);
    Eigen::VectorXd gx(cache.C), gy(cache.C);
    for (int b = 0; b < cache.B; ++b) {
        for (int c = 0; c < cache.C; ++c) {
            const double g = (cache.pre_clip(c, b) >= cache.tau) ? 0.0 : dS(c, b);
            gx[c] = 2.0 * g * cache.xc(c, b);
            gy[c] = 2.0 * g * cache.yc(c, b);
        }
        for (int l = 0; l < cache.L; ++l) {
            const double ac = cache.amps(l, b) * cache.cos_ph(l, b);
            const double as = cache.amps(l, b) * cache.sin_ph(l, b);
            for (int c = 0; c < cache.C; ++c) d_assign(c + 1, l) += gx[c] * ac + gy[c] * as;
        }
    }
    return d_assign;
}

inline Eigen::MatrixXd measure_hard_batch(const Placement& placement, const PropagationParams& p,
                                          const BatchDraw& draw, const Eigen::MatrixXd& amps) {
    const int B = static_cast<int>(draw.phases.cols());
    const int C = placement.channels;
    Eigen::MatrixXd s(C, B);
    MeasurementDraw single;
    for (int b = 0; b < B; ++b) {
        single.phases = draw.phases.col(b);
        single.noise.resize(2, C);
        single.noise.row(0) = draw.eps1.col(b).transpose();
        single.noise.row(1) = draw.eps2.col(b).transpose();
        s.col(b) = measure_hard(placement, p, single, amps.col(b));
    }
    return s;
}

}  // namespace beaconopt
