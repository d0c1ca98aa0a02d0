#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "beaconopt/rng.hpp"

namespace beaconopt {

// Architecture of the inference network: `blocks` blocks of
// [FC -> BN -> ReLU] x layers_per_block, each block followed by max pooling
// over disjoint groups of pool_group units, then a linear output layer.
// Activations are stored with one sample per column.
struct NetConfig {
    int input_dim = 8;
    int blocks = 6;
    int layers_per_block = 2;
    int hidden_width = 1024;
    int pool_group = 4;
    int output_dim = 2;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.99;  // fraction of the old running statistic kept

    int pooled_width() const { return hidden_width / pool_group; }
    int fc_count() const { return blocks * layers_per_block + 1; }
    int bn_count() const { return blocks * layers_per_block; }

    // Input width of fully-connected layer `i` (0-based, output layer last).
    int fc_in(int i) const {
        if (i == 0) return input_dim;
        if (i % layers_per_block == 0) return pooled_width();  // first layer of a block, or output
        return hidden_width;
    }
    int fc_out(int i) const { return i == fc_count() - 1 ? output_dim : hidden_width; }
};

inline void validate_net_config(const NetConfig& c) {
    auto fail = [](const std::string& what) { throw std::invalid_argument("net config: " + what); };
    if (c.input_dim < 1) fail("input_dim must be >= 1");
    if (c.blocks < 1) fail("blocks must be >= 1");
    if (c.layers_per_block < 1) fail("layers_per_block must be >= 1");
    if (c.hidden_width < 1) fail("hidden_width must be >= 1");
    if (c.pool_group < 1) fail("pool_group must be >= 1");
    if (c.hidden_width % c.pool_group != 0) fail("hidden_width must be divisible by pool_group");
    if (c.output_dim < 1) fail("output_dim must be >= 1");
    if (!(c.bn_epsilon > 0.0)) fail("bn_epsilon must be > 0");
    if (!(c.bn_momentum > 0.0 && c.bn_momentum < 1.0)) fail("bn_momentum must be in (0,1)");
}

struct LinearLayer {
    Eigen::MatrixXd W;   // out x in
    Eigen::VectorXd b;   // out
    Eigen::MatrixXd vW;  // momentum buffers
    Eigen::VectorXd vb;
};

struct BatchNormLayer {
    Eigen::VectorXd gamma, beta;
    Eigen::VectorXd run_mean, run_var;
    Eigen::VectorXd vgamma, vbeta;
};

struct NetParams {
    NetConfig cfg;
    std::vector<LinearLayer> fc;   // cfg.fc_count() entries, output layer last
    std::vector<BatchNormLayer> bn;
};

struct LinearGrad {
    Eigen::MatrixXd dW;
    Eigen::VectorXd db;
};

struct BatchNormGrad {
    Eigen::VectorXd dgamma, dbeta;
};

struct NetGrads {
    std::vector<LinearGrad> fc;
    std::vector<BatchNormGrad> bn;

    void scale(double f) {
        for (auto& g : fc) {
            g.dW *= f;
            g.db *= f;
        }
        for (auto& g : bn) {
            g.dgamma *= f;
            g.dbeta *= f;
        }
    }
};

// He-style init: FC weights N(0, sqrt(2/fan_in)), biases 0; BN scale 1,
// shift 0, running mean 0, running var 1; momentum buffers 0.
inline NetParams init_net(const NetConfig& cfg, Rng& rng) {
    validate_net_config(cfg);
    NetParams p;
    p.cfg = cfg;
    p.fc.resize(static_cast<std::size_t>(cfg.fc_count()));
    for (int i = 0; i < cfg.fc_count(); ++i) {
        const int in = cfg.fc_in(i);
        const int out = cfg.fc_out(i);
        LinearLayer& fc = p.fc[static_cast<std::size_t>(i)];
        fc.W.resize(out, in);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (int c = 0; c < in; ++c)
            for (int r = 0; r < out; ++r) fc.W(r, c) = sd * rng.normal();
        fc.b = Eigen::VectorXd::Zero(out);
        fc.vW = Eigen::MatrixXd::Zero(out, in);
        fc.vb = Eigen::VectorXd::Zero(out);
    }
    p.bn.resize(static_cast<std::size_t>(cfg.bn_count()));
    for (auto& bn : p.bn) {
        bn.gamma = Eigen::VectorXd::Ones(cfg.hidden_width);
        bn.beta = Eigen::VectorXd::Zero(cfg.hidden_width);
        bn.run_mean = Eigen::VectorXd::Zero(cfg.hidden_width);
        bn.run_var = Eigen::VectorXd::Ones(cfg.hidden_width);
        bn.vgamma = Eigen::VectorXd::Zero(cfg.hidden_width);
        bn.vbeta = Eigen::VectorXd::Zero(cfg.hidden_width);
    }
    return p;
}

// Per-layer intermediates required by the backward pass. Single use, tied to
// one train-mode forward call.
struct ForwardTape {
    struct HiddenLayer {
        Eigen::MatrixXd input;    // FC input
        Eigen::MatrixXd xhat;     // normalized pre-activation
        Eigen::VectorXd inv_std;  // 1/sqrt(var + eps), batch statistics
        Eigen::MatrixXd act_in;   // BN output = ReLU input
    };
    std::vector<HiddenLayer> hidden;
    std::vector<Eigen::MatrixXi> pool_argmax;  // per block: pooled_width x B row offsets
    Eigen::MatrixXd output_input;              // input of the final FC
    int batch = 0;
};

namespace detail {

// Max over disjoint contiguous groups of `group` rows; ties go to the lowest
// row. argmax stores the winning offset within each group.
inline Eigen::MatrixXd max_pool(const Eigen::MatrixXd& x, int group, Eigen::MatrixXi* argmax) {
    const int out_rows = static_cast<int>(x.rows()) / group;
    const int B = static_cast<int>(x.cols());
    Eigen::MatrixXd y(out_rows, B);
    if (argmax) argmax->resize(out_rows, B);
    for (int b = 0; b < B; ++b) {
        for (int g = 0; g < out_rows; ++g) {
            const int base = g * group;
            int best = 0;
            double m = x(base, b);
            for (int k = 1; k < group; ++k) {
                const double v = x(base + k, b);
                if (v > m) {
                    m = v;
                    best = k;
                }
            }
            y(g, b) = m;
            if (argmax) (*argmax)(g, b) = best;
        }
    }
    return y;
}

// Routes the pooled gradient back to each group's argmax unit; all other
// entries stay zero.
inline Eigen::MatrixXd unpool_gradient(const Eigen::MatrixXd& da, const Eigen::MatrixXi& argmax,
                                       int group) {
    const int out_rows = static_cast<int>(da.rows());
    const int B = static_cast<int>(da.cols());
    Eigen::MatrixXd dpre = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out_rows) * group, B);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < out_rows; ++g) dpre(g * group + argmax(g, b), b) = da(g, b);
    return dpre;
}

}  // namespace detail

// Evaluation-mode forward pass: running statistics, no state mutation, any
// batch size >= 1.
inline Eigen::MatrixXd forward_eval(const NetParams& p, const Eigen::MatrixXd& x) {
    const NetConfig& cfg = p.cfg;
    if (x.rows() != cfg.input_dim) throw std::invalid_argument("forward_eval: input dim mismatch");
    Eigen::MatrixXd a = x;
    int li = 0;
    for (int blk = 0; blk < cfg.blocks; ++blk) {
        for (int j = 0; j < cfg.layers_per_block; ++j, ++li) {
            const LinearLayer& fc = p.fc[static_cast<std::size_t>(li)];
            const BatchNormLayer& bn = p.bn[static_cast<std::size_t>(li)];
            Eigen::MatrixXd z = (fc.W * a).colwise() + fc.b;
            const Eigen::ArrayXd scale =
                bn.gamma.array() * (bn.run_var.array() + cfg.bn_epsilon).sqrt().inverse();
            z = (((z.colwise() - bn.run_mean).array().colwise() * scale).colwise() +
                 bn.beta.array())
                    .matrix();
            a = z.cwiseMax(0.0);
        }
        a = detail::max_pool(a, cfg.pool_group, nullptr);
    }
    const LinearLayer& out = p.fc.back();
    return (out.W * a).colwise() + out.b;
}

// Train-mode forward pass: batch statistics for BN, running stats updated,
// tape filled for backward. Requires batch >= 2.
inline Eigen::MatrixXd forward_train(NetParams& p, const Eigen::MatrixXd& x, ForwardTape& tape) {
    const NetConfig& cfg = p.cfg;
    if (x.rows() != cfg.input_dim) throw std::invalid_argument("forward_train: input dim mismatch");
    const int B = static_cast<int>(x.cols());
    if (B < 2) throw std::invalid_argument("forward_train: batch size must be >= 2");
    tape.batch = B;
    tape.hidden.resize(static_cast<std::size_t>(cfg.bn_count()));
    tape.pool_argmax.resize(static_cast<std::size_t>(cfg.blocks));

    Eigen::MatrixXd a = x;
    int li = 0;
    for (int blk = 0; blk < cfg.blocks; ++blk) {
        for (int j = 0; j < cfg.layers_per_block; ++j, ++li) {
            LinearLayer& fc = p.fc[static_cast<std::size_t>(li)];
            BatchNormLayer& bn = p.bn[static_cast<std::size_t>(li)];
            ForwardTape::HiddenLayer& t = tape.hidden[static_cast<std::size_t>(li)];
            t.input = a;
            Eigen::MatrixXd z = (fc.W * a).colwise() + fc.b;

            const Eigen::VectorXd mean = z.rowwise().mean();
            Eigen::MatrixXd centered = z.colwise() - mean;
            const Eigen::VectorXd var =
                (centered.array().square().rowwise().sum() / static_cast<double>(B)).matrix();
            t.inv_std = (var.array() + cfg.bn_epsilon).sqrt().inverse().matrix();
            t.xhat = (centered.array().colwise() * t.inv_std.array()).matrix();
            t.act_in = ((t.xhat.array().colwise() * bn.gamma.array()).colwise() + bn.beta.array())
                           .matrix();

            bn.run_mean = cfg.bn_momentum * bn.run_mean + (1.0 - cfg.bn_momentum) * mean;
            bn.run_var = cfg.bn_momentum * bn.run_var + (1.0 - cfg.bn_momentum) * var;

            a = t.act_in.cwiseMax(0.0);
        }
        a = detail::max_pool(a, cfg.pool_group, &tape.pool_argmax[static_cast<std::size_t>(blk)]);
    }
    tape.output_input = a;
    const LinearLayer& out = p.fc.back();
    return (out.W * a).colwise() + out.b;
}

// Exact gradients of the train-mode forward map. Returns parameter gradients
// and the gradient w.r.t. the input batch (for chaining into the measurement
// backward).
inline std::pair<NetGrads, Eigen::MatrixXd> backward(const NetParams& p, const ForwardTape& tape,
                                                     const Eigen::MatrixXd& d_pred) {
    const NetConfig& cfg = p.cfg;
    const int B = tape.batch;
    if (d_pred.rows() != cfg.output_dim || d_pred.cols() != B)
        throw std::invalid_argument("backward: d_pred shape mismatch");

    NetGrads g;
    g.fc.resize(p.fc.size());
    g.bn.resize(p.bn.size());

    // Output layer.
    const LinearLayer& out = p.fc.back();
    g.fc.back().dW.noalias() = d_pred * tape.output_input.transpose();
    g.fc.back().db = d_pred.rowwise().sum();
    Eigen::MatrixXd da = out.W.transpose() * d_pred;  // grad w.r.t. pooled output of last block

    int li = cfg.bn_count() - 1;
    for (int blk = cfg.blocks - 1; blk >= 0; --blk) {
        da = detail::unpool_gradient(da, tape.pool_argmax[static_cast<std::size_t>(blk)],
                                     cfg.pool_group);

        for (int j = cfg.layers_per_block - 1; j >= 0; --j, --li) {
            const ForwardTape::HiddenLayer& t = tape.hidden[static_cast<std::size_t>(li)];
            const LinearLayer& fc = p.fc[static_cast<std::size_t>(li)];
            const BatchNormLayer& bn = p.bn[static_cast<std::size_t>(li)];

            // ReLU.
            Eigen::MatrixXd du = (t.act_in.array() > 0.0).select(da, 0.0);

            // BN (batch statistics).
            g.bn[static_cast<std::size_t>(li)].dgamma =
                (du.array() * t.xhat.array()).rowwise().sum().matrix();
            g.bn[static_cast<std::size_t>(li)].dbeta = du.rowwise().sum();
            Eigen::MatrixXd dxhat = (du.array().colwise() * bn.gamma.array()).matrix();
            const Eigen::VectorXd mean_dxhat = dxhat.rowwise().mean();
            const Eigen::VectorXd mean_dxhat_xhat =
                (dxhat.array() * t.xhat.array()).rowwise().mean().matrix();
            Eigen::MatrixXd dz =
                (((dxhat.colwise() - mean_dxhat).array() -
                  t.xhat.array().colwise() * mean_dxhat_xhat.array())
                     .colwise() *
                 t.inv_std.array())
                    .matrix();

            // FC.
            g.fc[static_cast<std::size_t>(li)].dW.noalias() = dz * t.input.transpose();
            g.fc[static_cast<std::size_t>(li)].db = dz.rowwise().sum();
            da.noalias() = fc.W.transpose() * dz;
        }
    }
    return {std::move(g), std::move(da)};
}

// One SGD-with-momentum update: buf <- m*buf + grad; param <- param - lr*buf.
template <typename P, typename V, typename G>
inline void sgd_update(Eigen::MatrixBase<P>& param, Eigen::MatrixBase<V>& buf,
                       const Eigen::MatrixBase<G>& grad, double lr, double momentum) {
    buf.derived() = momentum * buf.derived() + grad.derived();
    param.derived() -= lr * buf.derived();
}

inline void sgd_step(NetParams& p, const NetGrads& g, double lr, double momentum) {
    if (g.fc.size() != p.fc.size() || g.bn.size() != p.bn.size())
        throw std::invalid_argument("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.fc.size(); ++i) {
        sgd_update(p.fc[i].W, p.fc[i].vW, g.fc[i].dW, lr, momentum);
        sgd_update(p.fc[i].b, p.fc[i].vb, g.fc[i].db, lr, momentum);
    }
    for (std::size_t i = 0; i < p.bn.size(); ++i) {
        sgd_update(p.bn[i].gamma, p.bn[i].vgamma, g.bn[i].dgamma, lr, momentum);
        sgd_update(p.bn[i].beta, p.bn[i].vbeta, g.bn[i].dbeta, lr, momentum);
    }
}

// True when every gradient entry is finite.
inline bool grads_finite(const NetGrads& g) {
    for (const auto& f : g.fc)
        if (!f.dW.allFinite() || !f.db.allFinite()) return false;
    for (const auto& b : g.bn)
        if (!b.dgamma.allFinite() || !b.dbeta.allFinite()) return false;
    return true;
}

}  // namespace beaconopt
