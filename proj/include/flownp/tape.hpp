#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"

namespace flownp {

// Reverse-mode autodiff tape at matrix granularity. Nodes own their value;
// gradients are allocated on first touch so cheap backward passes (input-only
// VJPs for divergence probes) skip parameter accumulation entirely via the
// needs_grad flag. A tape supports one forward build and any number of
// backward passes (zero_grad between them).
template <class T>
class Tape {
public:
    using M = MatX<T>;

    struct Var {
        int i = -1;
        bool valid() const { return i >= 0; }
    };

    Var input(M value) { return make_leaf(std::move(value), true); }
    Var constant(M value) { return make_leaf(std::move(value), false); }

    const M& value(Var v) const { return nodes_[check(v)].value; }

    /// Gradient of the last backward pass; zero matrix if never touched.
    M grad(Var v) {
        Node& n = nodes_[check(v)];
        if (n.grad.size() == 0) return M::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    void zero_grad() {
        for (Node& n : nodes_) {
            if (n.grad.size() != 0) n.grad.setZero();
        }
    }

    void backward(Var out, const M& seed) {
        Node& o = nodes_[check(out)];
        if (seed.rows() != o.value.rows() || seed.cols() != o.value.cols()) {
            throw config_error("Tape::backward: seed shape mismatch");
        }
        accum(out.i, seed);
        for (int i = out.i; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && n.grad.size() != 0) n.back(n.grad);
        }
    }

    // ---- ops ----

    /// y = x * W^T + 1 b^T.  x:[n,in], W:[out,in], b:[1,out]
    Var linear(Var x, Var W, Var b) {
        const M& xv = val(x);
        const M& wv = val(W);
        const M& bv = val(b);
        if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows()) {
            throw config_error("Tape::linear: shape mismatch");
        }
        M out = xv * wv.transpose();
        out.rowwise() += bv.row(0);
        return make(std::move(out), {x, W, b}, [this, x, W, b](const M& g) {
            if (needs(x)) accum(x.i, g * val(W));
            if (needs(W)) accum(W.i, g.transpose() * val(x));
            if (needs(b)) accum(b.i, g.colwise().sum());
        });
    }

    /// c = a * b^T, scaled.
    Var matmul_nt(Var a, Var b, T scale = T(1)) {
        M out = (val(a) * val(b).transpose()) * scale;
        return make(std::move(out), {a, b}, [this, a, b, scale](const M& g) {
            if (needs(a)) accum(a.i, (g * val(b)) * scale);
            if (needs(b)) accum(b.i, (g.transpose() * val(a)) * scale);
        });
    }

    Var matmul(Var a, Var b) {
        M out = val(a) * val(b);
        return make(std::move(out), {a, b}, [this, a, b](const M& g) {
            if (needs(a)) accum(a.i, g * val(b).transpose());
            if (needs(b)) accum(b.i, val(a).transpose() * g);
        });
    }

    Var add(Var a, Var b) {
        M out = val(a) + val(b);
        return make(std::move(out), {a, b}, [this, a, b](const M& g) {
            if (needs(a)) accum(a.i, g);
            if (needs(b)) accum(b.i, g);
        });
    }

    /// a + c * b
    Var add_scaled(Var a, Var b, T c) {
        M out = val(a) + c * val(b);
        return make(std::move(out), {a, b}, [this, a, b, c](const M& g) {
            if (needs(a)) accum(a.i, g);
            if (needs(b)) accum(b.i, (c * g).eval());
        });
    }

    Var scale(Var a, T c) {
        M out = c * val(a);
        return make(std::move(out), {a}, [this, a, c](const M& g) {
            if (needs(a)) accum(a.i, (c * g).eval());
        });
    }

    Var slice_rows(Var a, int i0, int n) {
        M out = val(a).middleRows(i0, n);
        return make(std::move(out), {a}, [this, a, i0, n](const M& g) {
            if (needs(a)) {
                Node& p = nodes_[static_cast<std::size_t>(a.i)];
                grad_ref(p).middleRows(i0, n) += g;
            }
        });
    }

    Var slice_cols(Var a, int j0, int n) {
        M out = val(a).middleCols(j0, n);
        return make(std::move(out), {a}, [this, a, j0, n](const M& g) {
            if (needs(a)) {
                Node& p = nodes_[static_cast<std::size_t>(a.i)];
                grad_ref(p).middleCols(j0, n) += g;
            }
        });
    }

    Var hconcat(const std::vector<Var>& parts) {
        Eigen::Index rows = val(parts.at(0)).rows();
        Eigen::Index cols = 0;
        for (Var p : parts) cols += val(p).cols();
        M out(rows, cols);
        Eigen::Index j = 0;
        for (Var p : parts) {
            out.middleCols(j, val(p).cols()) = val(p);
            j += val(p).cols();
        }
        return make(std::move(out), parts, [this, parts](const M& g) {
            Eigen::Index j = 0;
            for (Var p : parts) {
                Eigen::Index w = val(p).cols();
                if (needs(p)) {
                    Node& pn = nodes_[static_cast<std::size_t>(p.i)];
                    grad_ref(pn) += g.middleCols(j, w);
                }
                j += w;
            }
        });
    }

    Var vconcat(Var top, Var bottom) {
        const M& tv = val(top);
        const M& bv = val(bottom);
        M out(tv.rows() + bv.rows(), tv.cols());
        out.topRows(tv.rows()) = tv;
        out.bottomRows(bv.rows()) = bv;
        const int nt = static_cast<int>(tv.rows());
        return make(std::move(out), {top, bottom}, [this, top, bottom, nt](const M& g) {
            if (needs(top)) accum(top.i, g.topRows(nt));
            if (needs(bottom)) accum(bottom.i, g.bottomRows(g.rows() - nt));
        });
    }

    /// Row-wise layernorm with learnable gain/bias, both [1,d].
    Var layernorm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
        const M& xv = val(x);
        const Eigen::Index d = xv.cols();
        M xhat(xv.rows(), d);
        VecX<T> inv_std(xv.rows());
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
            const T mu = xv.row(r).mean();
            const T var = (xv.row(r).array() - mu).square().mean();
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[r] = is;
            xhat.row(r) = (xv.row(r).array() - mu) * is;
        }
        M out = xhat;
        out.array().rowwise() *= val(gain).row(0).array();
        out.rowwise() += val(bias).row(0);
        return make(std::move(out), {x, gain, bias},
                    [this, x, gain, bias, xhat, inv_std](const M& g) {
                        if (needs(gain)) accum(gain.i, (g.array() * xhat.array()).colwise().sum().matrix());
                        if (needs(bias)) accum(bias.i, g.colwise().sum());
                        if (needs(x)) {
                            const Eigen::Index d = g.cols();
                            M gx = g;
                            gx.array().rowwise() *= val(gain).row(0).array();
                            M dx(g.rows(), d);
                            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                                const T m1 = gx.row(r).mean();
                                const T m2 = (gx.row(r).array() * xhat.row(r).array()).mean();
                                dx.row(r) = ((gx.row(r).array() - m1) - xhat.row(r).array() * m2) * inv_std[r];
                            }
                            accum(x.i, dx);
                        }
                    });
    }

    /// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
    Var gelu(Var x) {
        const M& xv = val(x);
        M cdf = xv.unaryExpr([](T v) { return T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475244L))); });
        M out = xv.array() * cdf.array();
        return make(std::move(out), {x}, [this, x, cdf](const M& g) {
            if (!needs(x)) return;
            const M& xv = val(x);
            constexpr T inv_sqrt2pi = T(0.39894228040143267794L);
            M pdf = xv.unaryExpr([](T v) { return std::exp(T(-0.5) * v * v); }) * inv_sqrt2pi;
            M dx = (g.array() * (cdf.array() + xv.array() * pdf.array())).matrix();
            accum(x.i, dx);
        });
    }

    /// Row-wise softmax. Columns >= valid_cols (when >= 0) get exactly zero
    /// weight, so padded key tokens cannot influence any valid row.
    Var softmax_rows(Var x, int valid_cols = -1) {
        const M& xv = val(x);
        const Eigen::Index nc = xv.cols();
        const Eigen::Index vc = valid_cols >= 0 ? valid_cols : nc;
        if (vc < 1 || vc > nc) throw config_error("Tape::softmax_rows: bad valid_cols");
        M p = M::Zero(xv.rows(), nc);
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
            const T mx = xv.row(r).head(vc).maxCoeff();
            auto e = (xv.row(r).head(vc).array() - mx).exp();
            p.row(r).head(vc) = e / e.sum();
        }
        return make(p, {x}, [this, x, p](const M& g) {
            if (!needs(x)) return;
            M dx(g.rows(), g.cols());
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                const T dot = g.row(r).dot(p.row(r));
                dx.row(r) = (g.row(r).array() - dot) * p.row(r).array();
            }
            accum(x.i, dx);
        });
    }

    /// Scalar node: mean((x - target)^2) over all entries.
    Var mean_sq_error(Var x, const M& target) {
        const M& xv = val(x);
        if (xv.rows() != target.rows() || xv.cols() != target.cols()) {
            throw config_error("Tape::mean_sq_error: shape mismatch");
        }
        M out(1, 1);
        out(0, 0) = (xv - target).squaredNorm() / static_cast<T>(xv.size());
        return make(std::move(out), {x}, [this, x, target](const M& g) {
            if (!needs(x)) return;
            const M& xv = val(x);
            const T c = g(0, 0) * T(2) / static_cast<T>(xv.size());
            accum(x.i, (c * (xv - target)).eval());
        });
    }

private:
    struct Node {
        M value;
        M grad;
        bool needs_grad = false;
        std::function<void(const M&)> back;
    };

    int check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.i) >= nodes_.size()) {
            throw config_error("Tape: invalid Var");
        }
        return v.i;
    }

    const M& val(Var v) const { return nodes_[check(v)].value; }
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].needs_grad; }

    M& grad_ref(Node& n) {
        if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    template <class Rhs>
    void accum(int idx, const Rhs& g) {
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        grad_ref(n) += g;
    }

    Var make_leaf(M value, bool needs_grad) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var make(M value, const std::vector<Var>& parents, std::function<void(const M&)> back) {
        Node n;
        n.value = std::move(value);
        for (Var p : parents) {
            check(p);
            n.needs_grad = n.needs_grad || needs(p);
        }
        if (n.needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

}  // namespace flownp
