#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flownp/encoding.hpp"
#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"
#include "flownp/rng.hpp"
#include "flownp/schedule.hpp"
#include "flownp/tape.hpp"

namespace flownp {

struct ModelConfig {
    int layers = 6;
    int hidden = 128;
    int heads = 4;
    Encoding enc;  // shared sinusoidal family for positions x and flow time t
    int x_dim = 1;
    int y_dim = 1;
    Objective objective = Objective::velocity;
    ScheduleKind schedule = ScheduleKind::cond_ot;
    // Per-dim standardization of y; the flow runs in standardized space.
    std::vector<double> y_mean;
    std::vector<double> y_std;
    static constexpr int mlp_ratio = 4;

    int token_dim() const { return enc.dim() * x_dim + enc.dim() + y_dim; }

    void validate() const {
        enc.validate();
        if (layers < 1) throw config_error("ModelConfig: layers must be >= 1");
        if (hidden < 1 || heads < 1) throw config_error("ModelConfig: hidden/heads must be >= 1");
        if (hidden % heads != 0) throw config_error("ModelConfig: hidden must be divisible by heads");
        if (x_dim < 1 || y_dim < 1) throw config_error("ModelConfig: x_dim/y_dim must be >= 1");
        if (!y_mean.empty() && static_cast<int>(y_mean.size()) != y_dim) {
            throw config_error("ModelConfig: y_mean size != y_dim");
        }
        if (!y_std.empty() && static_cast<int>(y_std.size()) != y_dim) {
            throw config_error("ModelConfig: y_std size != y_dim");
        }
        for (double s : y_std) {
            if (!(s > 0)) throw config_error("ModelConfig: y_std entries must be positive");
        }
    }
};

template <class T>
struct NamedTensor {
    std::string name;
    MatX<T> value;
};

// Set-transformer velocity network. Context and target points are embedded by
// one shared affine map of [enc(x), enc(t), y]; context tokens always carry
// t = 1 and the observed values. Full self-attention over all M+N tokens, no
// sequence-position information anywhere, output head on target tokens only.
template <class T>
struct VelocityModel {
    ModelConfig cfg;
    std::vector<NamedTensor<T>> params;

    static VelocityModel init(const ModelConfig& cfg, RngStream rng) {
        cfg.validate();
        VelocityModel m;
        m.cfg = cfg;
        const int d = cfg.hidden;
        const int f = cfg.token_dim();
        const int mlp = ModelConfig::mlp_ratio * d;
        auto gauss = [&rng](int rows, int cols, double std) {
            MatX<T> w(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) w(i, j) = static_cast<T>(std * rng.normal());
            return w;
        };
        auto fan_in = [&](const std::string& name, int rows, int cols) {
            m.params.push_back({name, gauss(rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)))});
        };
        auto zeros = [&](const std::string& name, int rows, int cols) {
            m.params.push_back({name, MatX<T>::Zero(rows, cols)});
        };
        auto ones = [&](const std::string& name, int cols) {
            m.params.push_back({name, MatX<T>::Ones(1, cols)});
        };
        fan_in("embed.w", d, f);
        zeros("embed.b", 1, d);
        for (int l = 0; l < cfg.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            ones(p + "ln1.g", d);
            zeros(p + "ln1.b", 1, d);
            fan_in(p + "qkv.w", 3 * d, d);
            zeros(p + "qkv.b", 1, 3 * d);
            fan_in(p + "proj.w", d, d);
            zeros(p + "proj.b", 1, d);
            ones(p + "ln2.g", d);
            zeros(p + "ln2.b", 1, d);
            fan_in(p + "mlp1.w", mlp, d);
            zeros(p + "mlp1.b", 1, mlp);
            fan_in(p + "mlp2.w", d, mlp);
            zeros(p + "mlp2.b", 1, d);
        }
        ones("final_ln.g", d);
        zeros("final_ln.b", 1, d);
        // Zero head: the untrained flow is the identity map.
        zeros("head.w", cfg.y_dim, d);
        zeros("head.b", 1, cfg.y_dim);
        return m;
    }

    MatX<T>& tensor(const std::string& name) {
        for (auto& p : params)
            if (p.name == name) return p.value;
        throw config_error("VelocityModel: no tensor named " + name);
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    VecX<T> flatten() const {
        VecX<T> out(param_count());
        std::int64_t at = 0;
        for (const auto& p : params) {
            Eigen::Map<VecX<T>>(out.data() + at, p.value.size()) =
                Eigen::Map<const VecX<T>>(p.value.data(), p.value.size());
            at += p.value.size();
        }
        return out;
    }

    void unflatten(const VecX<T>& theta) {
        if (theta.size() != param_count()) throw config_error("unflatten: size mismatch");
        std::int64_t at = 0;
        for (auto& p : params) {
            Eigen::Map<VecX<T>>(p.value.data(), p.value.size()) =
                theta.segment(at, p.value.size());
            at += p.value.size();
        }
    }

    template <class U>
    VelocityModel<U> cast() const {
        VelocityModel<U> out;
        out.cfg = cfg;
        out.params.reserve(params.size());
        for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>()});
        return out;
    }

    MatX<T> standardize_y(const MatX<T>& y) const {
        if (cfg.y_mean.empty() && cfg.y_std.empty()) return y;
        MatX<T> out = y;
        for (int j = 0; j < cfg.y_dim; ++j) {
            const T mu = static_cast<T>(cfg.y_mean.empty() ? 0.0 : cfg.y_mean[j]);
            const T sd = static_cast<T>(cfg.y_std.empty() ? 1.0 : cfg.y_std[j]);
            out.col(j) = (out.col(j).array() - mu) / sd;
        }
        return out;
    }

    MatX<T> unstandardize_y(const MatX<T>& y) const {
        if (cfg.y_mean.empty() && cfg.y_std.empty()) return y;
        MatX<T> out = y;
        for (int j = 0; j < cfg.y_dim; ++j) {
            const T mu = static_cast<T>(cfg.y_mean.empty() ? 0.0 : cfg.y_mean[j]);
            const T sd = static_cast<T>(cfg.y_std.empty() ? 1.0 : cfg.y_std[j]);
            out.col(j) = out.col(j).array() * sd + mu;
        }
        return out;
    }

    /// sum over dims of log y_std; loglik in raw space = flow-space loglik - N * this.
    double log_std_sum() const {
        double s = 0.0;
        for (double v : cfg.y_std) s += std::log(v);
        return s;
    }
};

template <class T>
struct ForwardGraph {
    typename Tape<T>::Var out;    // network output on target tokens, N x y_dim
    typename Tape<T>::Var y_tgt;  // leaf for the flow-space target values
    std::vector<typename Tape<T>::Var> param_vars;  // aligned with model.params
};

/// Encoded constant token features [enc(x), enc(t_token)] for one point set.
/// Positions are encoded per input dimension; context rows use t = 1.
template <class T>
MatX<T> encode_token_features(const Mat& xs, double t_token, const Encoding& enc) {
    const int n = static_cast<int>(xs.rows());
    const int xd = static_cast<int>(xs.cols());
    const int ed = enc.dim();
    MatX<T> out(n, ed * xd + ed);
    std::vector<T> buf(static_cast<std::size_t>(ed));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < xd; ++j) {
            sinusoidal_encode<T>(xs(i, j), enc, buf.data());
            for (int k = 0; k < ed; ++k) out(i, j * ed + k) = buf[static_cast<std::size_t>(k)];
        }
        sinusoidal_encode<T>(t_token, enc, buf.data());
        for (int k = 0; k < ed; ++k) out(i, xd * ed + k) = buf[static_cast<std::size_t>(k)];
    }
    return out;
}

// Builds the full forward graph on the tape. ctx_y and y_t are flow-space
// (standardized) values. When pad_to exceeds M+N, filler tokens are appended
// and masked out of attention; they must not change any real output.
template <class T>
ForwardGraph<T> build_forward(Tape<T>& tape, const VelocityModel<T>& m, const Mat& ctx_x,
                              const MatX<T>& ctx_y, const Mat& tgt_x, const MatX<T>& y_t,
                              double t, bool params_need_grad, int pad_to = 0) {
    using Var = typename Tape<T>::Var;
    const ModelConfig& cfg = m.cfg;
    const int M = static_cast<int>(ctx_x.rows());
    const int N = static_cast<int>(tgt_x.rows());
    if (N < 1) throw config_error("build_forward: need at least one target");
    if (ctx_y.rows() != M || y_t.rows() != N) throw config_error("build_forward: row mismatch");
    if (ctx_x.cols() != cfg.x_dim || tgt_x.cols() != cfg.x_dim ||
        (M > 0 && ctx_y.cols() != cfg.y_dim) || y_t.cols() != cfg.y_dim) {
        throw config_error("build_forward: dimension mismatch with model config");
    }
    const int n_real = M + N;
    const int n_tok = std::max(n_real, pad_to);
    const int n_pad = n_tok - n_real;

    ForwardGraph<T> g;
    g.param_vars.reserve(m.params.size());
    for (const auto& p : m.params) {
        g.param_vars.push_back(params_need_grad ? tape.input(p.value) : tape.constant(p.value));
    }
    auto pv = [&](const std::string& name) -> Var {
        for (std::size_t i = 0; i < m.params.size(); ++i) {
            if (m.params[i].name == name) return g.param_vars[i];
        }
        throw config_error("build_forward: no parameter " + name);
    };

    const int fdim = cfg.enc.dim() * cfg.x_dim + cfg.enc.dim();
    MatX<T> feat(n_tok, fdim);
    if (M > 0) feat.topRows(M) = encode_token_features<T>(ctx_x, 1.0, cfg.enc);
    feat.middleRows(M, N) = encode_token_features<T>(tgt_x, t, cfg.enc);
    if (n_pad > 0) feat.bottomRows(n_pad).setConstant(T(1000));

    Var y_leaf = tape.input(y_t);
    g.y_tgt = y_leaf;
    Var y_part = y_leaf;
    if (M > 0) y_part = tape.vconcat(tape.constant(ctx_y), y_part);
    if (n_pad > 0) {
        y_part = tape.vconcat(y_part, tape.constant(MatX<T>::Constant(n_pad, cfg.y_dim, T(1000))));
    }
    Var tokens = tape.hconcat({tape.constant(std::move(feat)), y_part});
    Var x = tape.linear(tokens, pv("embed.w"), pv("embed.b"));

    const int d = cfg.hidden;
    const int dh = d / cfg.heads;
    const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Var h = tape.layernorm(x, pv(p + "ln1.g"), pv(p + "ln1.b"));
        Var qkv = tape.linear(h, pv(p + "qkv.w"), pv(p + "qkv.b"));
        std::vector<Var> heads_out;
        heads_out.reserve(static_cast<std::size_t>(cfg.heads));
        for (int hh = 0; hh < cfg.heads; ++hh) {
            Var q = tape.slice_cols(qkv, hh * dh, dh);
            Var k = tape.slice_cols(qkv, d + hh * dh, dh);
            Var v = tape.slice_cols(qkv, 2 * d + hh * dh, dh);
            Var s = tape.matmul_nt(q, k, att_scale);
            Var pvar = tape.softmax_rows(s, n_pad > 0 ? n_real : -1);
            heads_out.push_back(tape.matmul(pvar, v));
        }
        Var att = cfg.heads == 1 ? heads_out[0] : tape.hconcat(heads_out);
        x = tape.add(x, tape.linear(att, pv(p + "proj.w"), pv(p + "proj.b")));
        Var h2 = tape.layernorm(x, pv(p + "ln2.g"), pv(p + "ln2.b"));
        Var a = tape.gelu(tape.linear(h2, pv(p + "mlp1.w"), pv(p + "mlp1.b")));
        x = tape.add(x, tape.linear(a, pv(p + "mlp2.w"), pv(p + "mlp2.b")));
    }
    Var hf = tape.layernorm(x, pv("final_ln.g"), pv("final_ln.b"));
    Var tgt_rows = tape.slice_rows(hf, M, N);
    g.out = tape.linear(tgt_rows, pv("head.w"), pv("head.b"));
    if (!tape.value(g.out).allFinite()) {
        throw numeric_error("forward_velocity: non-finite activations in output head (layer " +
                            std::to_string(cfg.layers) + ")");
    }
    return g;
}

/// Plain forward: network output on target tokens (flow-space), no gradients.
template <class T>
MatX<T> forward_velocity(const VelocityModel<T>& m, const Mat& ctx_x, const MatX<T>& ctx_y,
                         const Mat& tgt_x, const MatX<T>& y_t, double t, int pad_to = 0) {
    Tape<T> tape;
    auto g = build_forward<T>(tape, m, ctx_x, ctx_y, tgt_x, y_t, t, false, pad_to);
    return tape.value(g.out);
}

/// Applies the objective -> velocity conversion on the tape so input
/// gradients flow through both the network and the direct y_t term.
template <class T>
typename Tape<T>::Var to_velocity_on_tape(Tape<T>& tape, Objective obj,
                                          typename Tape<T>::Var net_out,
                                          typename Tape<T>::Var y_t, T t, ScheduleKind s) {
    if (obj == Objective::velocity) return net_out;
    const auto se = schedule_eval(s, t);
    if (obj == Objective::clean) {
        if (std::abs(se.beta) < T(1e-6)) {
            throw numeric_error("to_velocity: beta_t below 1e-6 for clean objective");
        }
        const T r = se.dbeta / se.beta;
        return tape.add_scaled(tape.scale(net_out, se.dalpha - r * se.alpha), y_t, r);
    }
    if (std::abs(se.alpha) < T(1e-6)) {
        throw numeric_error("to_velocity: alpha_t below 1e-6 for noise objective");
    }
    const T r = se.dalpha / se.alpha;
    return tape.add_scaled(tape.scale(net_out, se.dbeta - r * se.beta), y_t, r);
}

/// Flattened parameter gradients after a backward pass, aligned with flatten().
template <class T>
VecX<T> flatten_param_grads(Tape<T>& tape, const ForwardGraph<T>& g, const VelocityModel<T>& m) {
    VecX<T> out(m.param_count());
    std::int64_t at = 0;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        MatX<T> gr = tape.grad(g.param_vars[i]);
        Eigen::Map<VecX<T>>(out.data() + at, gr.size()) = Eigen::Map<const VecX<T>>(gr.data(), gr.size());
        at += gr.size();
    }
    return out;
}

}  // namespace flownp
