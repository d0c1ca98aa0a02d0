#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "beaconopt/beacon_layer.hpp"
#include "beaconopt/environment.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/net.hpp"
#include "beaconopt/placement.hpp"
#include "beaconopt/serialize.hpp"

namespace beaconopt {

struct LrStep {
    std::int64_t start_iter = 0;
    double lr = 0.01;
};

struct TrainConfig {
    std::int64_t total_iters = 1100000;
    int batch_size = 1000;
    std::vector<LrStep> lr_schedule{{0, 0.01}, {1000000, 0.001}};
    double momentum = 0.9;
    std::uint64_t seed = 1;
    TemperatureSchedule temperature;
    RegSchedule reg;
    std::int64_t snapshot_period = 100000;
    std::int64_t log_period = 100;
    double logit_init_std = 0.01;
};

inline void validate_train_config(const TrainConfig& c) {
    auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
    if (c.total_iters < 0) fail("total_iters must be >= 0");
    if (c.batch_size < 2) fail("batch_size must be >= 2");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must be in [0,1)");
    if (c.temperature.argmax_switch_iter > c.total_iters)
        fail("argmax_switch_iter must be <= total_iters");
    if (c.lr_schedule.empty()) fail("lr_schedule must not be empty");
    if (c.lr_schedule.front().start_iter != 0) fail("lr_schedule must start at iteration 0");
    for (std::size_t i = 1; i < c.lr_schedule.size(); ++i)
        if (c.lr_schedule[i].start_iter <= c.lr_schedule[i - 1].start_iter)
            fail("lr_schedule start iterations must be ascending");
    if (c.log_period < 1) fail("log_period must be >= 1");
    validate_schedule(c.temperature);
    validate_schedule(c.reg);
}

inline double lr_at(std::int64_t t, const std::vector<LrStep>& schedule) {
    double lr = schedule.front().lr;
    for (const LrStep& s : schedule)
        if (s.start_iter <= t) lr = s.lr;
    return lr;
}

struct TrainLogRecord {
    std::int64_t iter = 0;
    double loss = 0.0;
    double mse = 0.0;
    double reg = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    int beacon_count = 0;
    double wall_s = 0.0;  // not serialized; kept out of artifacts for rerun identity
};

inline nlohmann::json log_record_to_json(const TrainLogRecord& r) {
    return {{"iter", r.iter},   {"loss", r.loss},     {"mse", r.mse},
            {"reg", r.reg},     {"alpha", r.alpha},   {"lambda", r.lambda},
            {"beacon_count", r.beacon_count}};
}

struct LossResult {
    double loss = 0.0;
    double mse = 0.0;
    double reg = 0.0;
    Eigen::MatrixXd d_pred;  // 2 x B
};

// Squared-error data term averaged over the batch plus the beacon regularizer.
inline LossResult loss_batch(const std::vector<Point2>& vs, const Eigen::MatrixXd& pred,
                             const Eigen::MatrixXd& assign, double lambda,
                             RegSign sign = RegSign::penalize_beacons) {
    const int B = static_cast<int>(vs.size());
    if (pred.rows() != 2 || pred.cols() != B)
        throw std::invalid_argument("loss_batch: prediction shape mismatch");
    LossResult r;
    Eigen::MatrixXd diff(2, B);
    for (int i = 0; i < B; ++i) {
        diff(0, i) = pred(0, i) - vs[static_cast<std::size_t>(i)].x;
        diff(1, i) = pred(1, i) - vs[static_cast<std::size_t>(i)].y;
    }
    r.mse = diff.squaredNorm() / static_cast<double>(B);
    r.reg = assign.size() > 0 ? regularizer(assign, lambda, sign).value : 0.0;
    r.loss = r.mse + r.reg;
    r.d_pred = (2.0 / static_cast<double>(B)) * diff;
    return r;
}

inline LossResult loss_batch(const std::vector<Point2>& vs, const Eigen::MatrixXd& pred) {
    return loss_batch(vs, pred, Eigen::MatrixXd(), 0.0);
}

// Joint forward/backward of the full objective at one batch: relaxed
// assignment -> measurement -> network -> loss, then the exact chain back to
// the network parameters and the beacon logits.
struct JointStep {
    double loss = 0.0;
    double mse = 0.0;
    double reg = 0.0;
    NetGrads net_grads;
    Eigen::MatrixXd d_logits;
    Eigen::MatrixXd assign;
};

inline JointStep joint_forward_backward(NetParams& net, const Eigen::MatrixXd& logits,
                                        double alpha, double lambda, RegSign sign,
                                        const std::vector<Point2>& vs, const Eigen::MatrixXd& amps,
                                        const BatchDraw& draw, const PropagationParams& prop) {
    JointStep out;
    out.assign = softmax_assign(logits, alpha);
    SoftBatchCache cache;
    const Eigen::MatrixXd signals = measure_soft_batch(out.assign, prop, draw, amps, cache);
    ForwardTape tape;
    const Eigen::MatrixXd pred = forward_train(net, signals, tape);
    const RegResult regr = regularizer(out.assign, lambda, sign);
    LossResult lr = loss_batch(vs, pred);
    out.mse = lr.mse;
    out.reg = regr.value;
    out.loss = lr.mse + regr.value;
    auto [net_grads, d_signals] = backward(net, tape, lr.d_pred);
    out.net_grads = std::move(net_grads);
    Eigen::MatrixXd d_assign = measure_soft_backward_batch(cache, d_signals);
    d_assign += regr.d_assign;
    out.d_logits = softmax_backward(out.assign, alpha, d_assign);
    return out;
}

// Resumable training state.
struct TrainState {
    std::int64_t iter = 0;
    NetParams net;
    Eigen::MatrixXd logits;     // (C+1) x L; empty for inference-only training
    Eigen::MatrixXd logit_buf;  // momentum buffer
    Rng loop_rng{0};
};

inline void save_checkpoint(const TrainState& s, const std::string& path) {
    TensorContainer c = net_to_container(s.net);
    c.meta["kind"] = "checkpoint";
    c.meta["iter"] = s.iter;
    c.meta["loop_rng"] = s.loop_rng.state();
    if (s.logits.size() > 0) {
        c.add("beacon.logits", s.logits);
        c.add("beacon.logit_buf", s.logit_buf);
    }
    save_container(c, path);
}

inline TrainState load_checkpoint(const std::string& path) {
    const TensorContainer c = load_container(path);
    TrainState s;
    s.iter = c.meta.at("iter").get<std::int64_t>();
    s.loop_rng = Rng::from_state(c.meta.at("loop_rng").get<std::string>());
    s.net = net_from_container(c);
    if (c.has("beacon.logits")) {
        s.logits = c.get("beacon.logits");
        s.logit_buf = c.get("beacon.logit_buf");
    }
    return s;
}

struct TrainHooks {
    std::function<void(std::int64_t iter, const Placement&)> on_snapshot;
    std::function<void(const TrainLogRecord&)> on_log;
    std::function<void(std::int64_t iter, const TrainState&)> on_checkpoint;
    std::function<void(const TrainState&, const TrainLogRecord&)> on_diverge;
};

struct TrainResult {
    Placement placement;
    NetParams net;
    Eigen::MatrixXd logits;
    std::vector<TrainLogRecord> log;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(std::int64_t iter)
        : std::runtime_error("training diverged (non-finite loss or gradient) at iteration " +
                             std::to_string(iter)) {}
};

namespace detail {

// Seed substreams: net init, logit init and the sampling loop use independent
// derived streams so that joint and inference-only runs can be aligned.
inline Rng net_rng(std::uint64_t seed) { return Rng(Rng::derive(seed, 1)); }
inline Rng logit_rng(std::uint64_t seed) { return Rng(Rng::derive(seed, 2)); }
inline Rng loop_rng(std::uint64_t seed) { return Rng(Rng::derive(seed, 3)); }

struct LoopContext {
    const MapSpec& map;
    const PropagationParams& prop;
    const TrainConfig& tc;
    const TrainHooks& hooks;
    std::vector<Point2> points;  // candidate coordinates (joint) or placement points
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

inline bool want_log(const LoopContext& ctx, std::int64_t t) {
    return t % ctx.tc.log_period == 0 || t == ctx.tc.total_iters - 1;
}

inline void emit_log(LoopContext& ctx, std::vector<TrainLogRecord>& log, std::int64_t t,
                     double loss, double mse, double reg, double alpha, double lambda,
                     int beacon_count) {
    if (!want_log(ctx, t)) return;
    TrainLogRecord r{t, loss, mse, reg, alpha, lambda, beacon_count, ctx.elapsed()};
    log.push_back(r);
    if (ctx.hooks.on_log) ctx.hooks.on_log(r);
}

inline bool want_snapshot(const LoopContext& ctx, std::int64_t t) {
    return ctx.tc.snapshot_period > 0 && (t + 1) % ctx.tc.snapshot_period == 0;
}

[[noreturn]] inline void diverge(LoopContext& ctx, const TrainState& state, std::int64_t t,
                                 double loss, double mse, double reg, double alpha, double lambda,
                                 int beacon_count) {
    TrainLogRecord r{t, loss, mse, reg, alpha, lambda, beacon_count, ctx.elapsed()};
    if (ctx.hooks.on_diverge) ctx.hooks.on_diverge(state, r);
    throw TrainingDiverged(t);
}

}  // namespace detail

// Joint optimization of the beacon logits and the inference network. Before
// the argmax switch, gradients reach the logits through the soft measurement
// and the regularizer; afterwards the placement is frozen to harden(logits)
// and only the network keeps training (on hard measurements).
inline TrainResult train_joint(const MapSpec& map, const PropagationParams& prop, int channels,
                               const NetConfig& netcfg, const TrainConfig& tc,
                               const TrainHooks& hooks = {}, const TrainState* resume = nullptr) {
    validate_map(map);
    validate_propagation(prop);
    validate_net_config(netcfg);
    validate_train_config(tc);
    if (channels < 1) throw std::invalid_argument("train_joint: channels must be >= 1");
    if (netcfg.input_dim != channels)
        throw std::invalid_argument("train_joint: net input_dim must equal the channel count");

    detail::LoopContext ctx{map, prop, tc, hooks, candidate_locations(map)};
    const int L = static_cast<int>(ctx.points.size());
    const int C = channels;
    const std::int64_t switch_iter = tc.temperature.argmax_switch_iter;

    TrainState state;
    if (resume) {
        state = *resume;
        if (state.logits.rows() != C + 1 || state.logits.cols() != L)
            throw std::invalid_argument("train_joint: checkpoint logits shape mismatch");
    } else {
        state.iter = 0;
        {
            Rng rng = detail::net_rng(tc.seed);
            state.net = init_net(netcfg, rng);
        }
        {
            Rng rng = detail::logit_rng(tc.seed);
            state.logits = init_logits(L, C, rng, tc.logit_init_std);
        }
        state.logit_buf = Eigen::MatrixXd::Zero(C + 1, L);
        state.loop_rng = detail::loop_rng(tc.seed);
    }

    TrainResult out;
    out.log.reserve(static_cast<std::size_t>(tc.total_iters / tc.log_period + 2));
    Placement frozen;
    bool have_frozen = false;

    for (std::int64_t t = state.iter; t < tc.total_iters; ++t) {
        state.iter = t;
        const double lr = lr_at(t, tc.lr_schedule);
        const std::vector<Point2> vs = sample_locations(map, tc.batch_size, state.loop_rng);
        const BatchDraw draw =
            draw_measurement_batch(state.loop_rng, L, C, tc.batch_size, prop);

        if (t < switch_iter) {
            const double alpha = alpha_at(t, tc.temperature).alpha;
            const double lambda = lambda_at(t, tc.reg);
            const Eigen::MatrixXd amps = amplitude_table(vs, ctx.points, map, prop);
            JointStep step = joint_forward_backward(state.net, state.logits, alpha, lambda,
                                                    tc.reg.sign, vs, amps, draw, prop);
            if (!std::isfinite(step.loss) || !grads_finite(step.net_grads) ||
                !step.d_logits.allFinite())
                detail::diverge(ctx, state, t, step.loss, step.mse, step.reg, alpha, lambda,
                                harden(state.logits, ctx.points).beacon_count());
            sgd_step(state.net, step.net_grads, lr, tc.momentum);
            sgd_update(state.logits, state.logit_buf, step.d_logits, lr, tc.momentum);
            state.iter = t + 1;
            if (detail::want_log(ctx, t))
                detail::emit_log(ctx, out.log, t, step.loss, step.mse, step.reg, alpha, lambda,
                                 harden(state.logits, ctx.points).beacon_count());
            if (detail::want_snapshot(ctx, t)) {
                if (hooks.on_snapshot) hooks.on_snapshot(t + 1, harden(state.logits, ctx.points));
                if (hooks.on_checkpoint) hooks.on_checkpoint(t + 1, state);
            }
        } else {
            if (!have_frozen) {
                frozen = harden(state.logits, ctx.points);
                have_frozen = true;
            }
            const double alpha = alpha_at(t, tc.temperature).alpha;
            const Eigen::MatrixXd amps = amplitude_table_placed(vs, frozen, map, prop);
            const Eigen::MatrixXd signals = measure_hard_batch(frozen, prop, draw, amps);
            ForwardTape tape;
            const Eigen::MatrixXd pred = forward_train(state.net, signals, tape);
            const LossResult lr_res = loss_batch(vs, pred);
            if (!std::isfinite(lr_res.loss))
                detail::diverge(ctx, state, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                                frozen.beacon_count());
            auto [grads, d_in] = backward(state.net, tape, lr_res.d_pred);
            (void)d_in;
            if (!grads_finite(grads))
                detail::diverge(ctx, state, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                                frozen.beacon_count());
            sgd_step(state.net, grads, lr, tc.momentum);
            state.iter = t + 1;
            detail::emit_log(ctx, out.log, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                             frozen.beacon_count());
            if (detail::want_snapshot(ctx, t)) {
                if (hooks.on_snapshot) hooks.on_snapshot(t + 1, frozen);
                if (hooks.on_checkpoint) hooks.on_checkpoint(t + 1, state);
            }
        }
    }

    out.placement = have_frozen ? frozen : harden(state.logits, ctx.points);
    out.net = std::move(state.net);
    out.logits = std::move(state.logits);
    return out;
}

// Trains only the inference network on a fixed placement (hard measurements,
// no regularizer, no logit updates). With the same seed and schedules this is
// the same code path as train_joint's post-switch phase.
inline TrainResult train_inference_only(const MapSpec& map, const PropagationParams& prop,
                                        const Placement& placement, const NetConfig& netcfg,
                                        const TrainConfig& tc, const TrainHooks& hooks = {},
                                        const TrainState* resume = nullptr) {
    validate_map(map);
    validate_propagation(prop);
    validate_net_config(netcfg);
    validate_train_config(tc);
    validate_placement(placement);
    if (netcfg.input_dim != placement.channels)
        throw std::invalid_argument(
            "train_inference_only: net input_dim must equal the placement channel count");

    detail::LoopContext ctx{map, prop, tc, hooks, placement.points};
    const int L = placement.size();
    const int C = placement.channels;

    TrainState state;
    if (resume) {
        state = *resume;
    } else {
        state.iter = 0;
        {
            Rng rng = detail::net_rng(tc.seed);
            state.net = init_net(netcfg, rng);
        }
        state.loop_rng = detail::loop_rng(tc.seed);
    }

    TrainResult out;
    out.log.reserve(static_cast<std::size_t>(tc.total_iters / tc.log_period + 2));
    for (std::int64_t t = state.iter; t < tc.total_iters; ++t) {
        state.iter = t;
        const double lr = lr_at(t, tc.lr_schedule);
        const std::vector<Point2> vs = sample_locations(map, tc.batch_size, state.loop_rng);
        const BatchDraw draw =
            draw_measurement_batch(state.loop_rng, L, C, tc.batch_size, prop);
        const double alpha = alpha_at(t, tc.temperature).alpha;
        const Eigen::MatrixXd amps = amplitude_table_placed(vs, placement, map, prop);
        const Eigen::MatrixXd signals = measure_hard_batch(placement, prop, draw, amps);
        ForwardTape tape;
        const Eigen::MatrixXd pred = forward_train(state.net, signals, tape);
        const LossResult lr_res = loss_batch(vs, pred);
        if (!std::isfinite(lr_res.loss))
            detail::diverge(ctx, state, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                            placement.beacon_count());
        auto [grads, d_in] = backward(state.net, tape, lr_res.d_pred);
        (void)d_in;
        if (!grads_finite(grads))
            detail::diverge(ctx, state, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                            placement.beacon_count());
        sgd_step(state.net, grads, lr, tc.momentum);
        state.iter = t + 1;
        detail::emit_log(ctx, out.log, t, lr_res.loss, lr_res.mse, 0.0, alpha, 0.0,
                         placement.beacon_count());
        if (detail::want_snapshot(ctx, t)) {
            if (hooks.on_snapshot) hooks.on_snapshot(t + 1, placement);
            if (hooks.on_checkpoint) hooks.on_checkpoint(t + 1, state);
        }
    }
    out.placement = placement;
    out.net = std::move(state.net);
    return out;
}

}  // namespace beaconopt
