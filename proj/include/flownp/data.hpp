#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flownp/errors.hpp"
#include "flownp/gp.hpp"
#include "flownp/numerics.hpp"
#include "flownp/rng.hpp"

namespace flownp {

// One realized function from a stochastic process: positions, values, and a
// record of the generating hyperparameters.
struct FunctionSample {
    Mat x;  // n x x_dim
    Mat y;  // n x y_dim
    std::string process;                                  // "gp" | "step" | "image"
    std::vector<std::pair<std::string, double>> kernel_meta;  // generating hyperparameters
    std::uint64_t sample_id = 0;

    void validate() const {
        if (x.rows() != y.rows()) throw config_error("FunctionSample: |x| != |y|");
        if (!x.allFinite() || !y.allFinite()) throw config_error("FunctionSample: non-finite entries");
    }
};

// Context/target split of one FunctionSample; the unit of training and eval.
struct Task {
    Mat ctx_x, ctx_y;  // M rows
    Mat tgt_x, tgt_y;  // N rows
    std::uint64_t sample_id = 0;

    int m() const { return static_cast<int>(ctx_x.rows()); }
    int n() const { return static_cast<int>(tgt_x.rows()); }
};

struct SizeLaw {
    int lo = 1;
    int hi = 1;

    void validate() const {
        if (lo > hi) throw config_error("SizeLaw: lo > hi");
    }
};

// Context/target sizing and observation-noise law for task splits.
//   random-hp:   M ~ U{3..47}, N ~ U{3..min(47, 50-M)}, noise 0
//   fixed-noisy: M ~ U{1..10}, N = 50, noise std 0.05
struct ProtocolSpec {
    std::string name = "fixed-noisy";
    SizeLaw ctx_size{1, 10};
    SizeLaw tgt_size{50, 50};
    double noise_std = 0.05;
    int max_total = 0;  // 0 = no joint constraint on M+N

    static ProtocolSpec random_hp() { return {"random-hp", {3, 47}, {3, 47}, 0.0, 50}; }
    static ProtocolSpec fixed_noisy() { return {"fixed-noisy", {1, 10}, {50, 50}, 0.05, 0}; }

    void validate() const {
        ctx_size.validate();
        tgt_size.validate();
        if (ctx_size.lo < 0) throw config_error("ProtocolSpec: context size must be >= 0");
        if (tgt_size.lo < 1) throw config_error("ProtocolSpec: target size must be >= 1");
        if (noise_std < 0) throw config_error("ProtocolSpec: negative noise std");
        if (max_total > 0 && ctx_size.lo + tgt_size.lo > max_total) {
            throw config_error("ProtocolSpec: size laws incompatible with max_total");
        }
    }
};

/// n positions drawn uniformly over [x_min, x_max)^d.
inline Mat uniform_positions(int n, int x_dim, double x_min, double x_max, RngStream& rng) {
    Mat out(n, x_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < x_dim; ++j) out(i, j) = rng.uniform(x_min, x_max);
    return out;
}

/// y ~ N(0, K(x,x) + noise_var I) over the given grid, via the oracle
/// Cholesky path.
inline FunctionSample sample_gp_function(const Kernel& k, const Mat& x_grid, RngStream& rng,
                                         double noise_var = 0.0) {
    FunctionSample fs;
    fs.x = x_grid;
    fs.y = gp_prior_sample(k, x_grid, noise_var, rng);
    fs.process = "gp";
    fs.kernel_meta = {{"kind", static_cast<double>(static_cast<int>(k.kind))},
                      {"lengthscale", k.lengthscale},
                      {"variance", k.variance},
                      {"period", k.period}};
    return fs;
}

/// y_i = [x_i >= c] with changepoint c; pass c explicitly for degenerate cases.
inline FunctionSample step_function_at(const Mat& x_grid, double c) {
    FunctionSample fs;
    fs.x = x_grid;
    fs.y.resize(x_grid.rows(), 1);
    for (Eigen::Index i = 0; i < x_grid.rows(); ++i) fs.y(i, 0) = x_grid(i, 0) >= c ? 1.0 : 0.0;
    fs.process = "step";
    fs.kernel_meta = {{"changepoint", c}};
    return fs;
}

/// Random step function: changepoint uniform over [x_min, x_max).
inline FunctionSample sample_step_function(const Mat& x_grid, double x_min, double x_max,
                                           RngStream& rng) {
    return step_function_at(x_grid, rng.uniform(x_min, x_max));
}

/// Grayscale grid (values in [0,1]) as a function: x = pixel coordinates
/// normalized to [-1,1]^2 (column then row), y = value + N(0, noise_std^2).
inline FunctionSample image_to_function(const Mat& grid, double noise_std, RngStream& rng) {
    if (grid.size() == 0) throw config_error("image_to_function: empty grid");
    const Eigen::Index h = grid.rows(), w = grid.cols();
    FunctionSample fs;
    fs.x.resize(h * w, 2);
    fs.y.resize(h * w, 1);
    auto norm_coord = [](Eigen::Index i, Eigen::Index n) {
        return n > 1 ? -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) : -1.0;
    };
    Eigen::Index at = 0;
    for (Eigen::Index r = 0; r < h; ++r) {
        for (Eigen::Index c = 0; c < w; ++c, ++at) {
            fs.x(at, 0) = norm_coord(c, w);
            fs.x(at, 1) = norm_coord(r, h);
            fs.y(at, 0) = grid(r, c) + noise_std * rng.normal();
        }
    }
    fs.process = "image";
    fs.kernel_meta = {{"noise_std", noise_std}};
    return fs;
}

/// Draws (M, N) under the protocol's laws and joint constraint.
inline std::pair<int, int> draw_sizes(const ProtocolSpec& spec, RngStream& rng) {
    const int m = static_cast<int>(rng.uniform_int(std::int64_t(spec.ctx_size.lo),
                                                   std::int64_t(spec.ctx_size.hi)));
    int n_hi = spec.tgt_size.hi;
    if (spec.max_total > 0) n_hi = std::min(n_hi, spec.max_total - m);
    if (n_hi < spec.tgt_size.lo) {
        throw config_error("draw_sizes: joint constraint leaves no room for targets");
    }
    const int n =
        static_cast<int>(rng.uniform_int(std::int64_t(spec.tgt_size.lo), std::int64_t(n_hi)));
    return {m, n};
}

// Splits one FunctionSample into disjoint context and target index sets with
// sizes drawn from the protocol; observation noise is added independently to
// both sides.
inline Task split_task(const FunctionSample& fs, const ProtocolSpec& spec, RngStream& rng) {
    spec.validate();
    auto [m, n] = draw_sizes(spec, rng);
    const int total = static_cast<int>(fs.x.rows());
    if (m + n > total) {
        throw config_error("split_task: sample has " + std::to_string(total) +
                           " points, need " + std::to_string(m + n));
    }
    std::vector<int> idx(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < m + n; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    Task t;
    t.sample_id = fs.sample_id;
    t.ctx_x.resize(m, fs.x.cols());
    t.ctx_y.resize(m, fs.y.cols());
    t.tgt_x.resize(n, fs.x.cols());
    t.tgt_y.resize(n, fs.y.cols());
    for (int i = 0; i < m; ++i) {
        t.ctx_x.row(i) = fs.x.row(idx[static_cast<std::size_t>(i)]);
        t.ctx_y.row(i) = fs.y.row(idx[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < n; ++i) {
        t.tgt_x.row(i) = fs.x.row(idx[static_cast<std::size_t>(m + i)]);
        t.tgt_y.row(i) = fs.y.row(idx[static_cast<std::size_t>(m + i)]);
    }
    if (spec.noise_std > 0) {
        for (Eigen::Index i = 0; i < t.ctx_y.rows(); ++i)
            for (Eigen::Index j = 0; j < t.ctx_y.cols(); ++j)
                t.ctx_y(i, j) += spec.noise_std * rng.normal();
        for (Eigen::Index i = 0; i < t.tgt_y.rows(); ++i)
            for (Eigen::Index j = 0; j < t.tgt_y.cols(); ++j)
                t.tgt_y(i, j) += spec.noise_std * rng.normal();
    }
    return t;
}

/// Produces one FunctionSample per call; the stream passed in is owned by the
/// caller, so per-index derivation keeps generation order-independent.
using FunctionSampler = std::function<FunctionSample(RngStream&)>;

struct RandomParamLaw {
    double lengthscale_lo = 0.25, lengthscale_hi = 2.0;
    double variance_lo = 0.5, variance_hi = 2.0;
    double period_lo = 0.5, period_hi = 2.0;
};

/// GP sampler with fixed kernel hyperparameters.
inline FunctionSampler make_gp_sampler(Kernel k, int points, double x_min, double x_max) {
    return [k, points, x_min, x_max](RngStream& rng) {
        Mat x = uniform_positions(points, 1, x_min, x_max, rng);
        return sample_gp_function(k, x, rng);
    };
}

/// GP sampler with hyperparameters redrawn per function (log-uniform laws).
inline FunctionSampler make_random_hp_gp_sampler(KernelKind kind, RandomParamLaw law, int points,
                                                 double x_min, double x_max) {
    return [kind, law, points, x_min, x_max](RngStream& rng) {
        Kernel k;
        k.kind = kind;
        k.lengthscale = rng.log_uniform(law.lengthscale_lo, law.lengthscale_hi);
        k.variance = rng.log_uniform(law.variance_lo, law.variance_hi);
        if (kind == KernelKind::periodic) k.period = rng.log_uniform(law.period_lo, law.period_hi);
        Mat x = uniform_positions(points, 1, x_min, x_max, rng);
        return sample_gp_function(k, x, rng);
    };
}

inline FunctionSampler make_step_sampler(int points, double x_min, double x_max) {
    return [points, x_min, x_max](RngStream& rng) {
        Mat x = uniform_positions(points, 1, x_min, x_max, rng);
        return sample_step_function(x, x_min, x_max, rng);
    };
}

/// Cycles through a fixed set of records (dataset-file replay).
inline FunctionSampler make_dataset_sampler(std::vector<FunctionSample> records) {
    if (records.empty()) throw config_error("make_dataset_sampler: empty dataset");
    auto shared = std::make_shared<std::vector<FunctionSample>>(std::move(records));
    return [shared](RngStream& rng) {
        return (*shared)[static_cast<std::size_t>(rng.uniform_int(shared->size()))];
    };
}

}  // namespace flownp
