#pragma once

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"
#include "flownp/rng.hpp"

namespace flownp {

enum class KernelKind { rbf, matern52, periodic };

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::rbf: return "rbf";
        case KernelKind::matern52: return "matern52";
        case KernelKind::periodic: return "periodic";
    }
    return "?";
}

inline KernelKind kernel_from_string(const std::string& s) {
    if (s == "rbf") return KernelKind::rbf;
    if (s == "matern52") return KernelKind::matern52;
    if (s == "periodic") return KernelKind::periodic;
    throw config_error("unknown kernel: " + s);
}

struct Kernel {
    KernelKind kind = KernelKind::rbf;
    double lengthscale = 1.0;
    double variance = 1.0;  // s^2, the value at zero lag
    double period = 1.0;    // periodic only

    void validate() const {
        if (!(lengthscale > 0) || !(variance > 0)) {
            throw config_error("Kernel: lengthscale and variance must be positive");
        }
        if (kind == KernelKind::periodic && !(period > 0)) {
            throw config_error("Kernel: period must be positive");
        }
    }

    std::string describe() const {
        std::string s = std::string(to_string(kind)) + "(l=" + std::to_string(lengthscale) +
                        ", s2=" + std::to_string(variance);
        if (kind == KernelKind::periodic) s += ", p=" + std::to_string(period);
        return s + ")";
    }
};

/// Stationary kernel value at positions a, b (rows of equal dimension).
/// RBF: s^2 exp(-r^2 / 2l^2); Matern-5/2: s^2 (1 + sqrt5 r/l + 5r^2/3l^2) exp(-sqrt5 r/l);
/// Periodic: s^2 exp(-2 sin^2(pi r / p) / l^2), with r = |a - b|.
inline double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                          const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    const double r = (a - b).norm();
    switch (k.kind) {
        case KernelKind::rbf: {
            const double z = r / k.lengthscale;
            return k.variance * std::exp(-0.5 * z * z);
        }
        case KernelKind::matern52: {
            const double z = std::sqrt(5.0) * r / k.lengthscale;
            return k.variance * (1.0 + z + z * z / 3.0) * std::exp(-z);
        }
        case KernelKind::periodic: {
            const double s = std::sin(M_PI * r / k.period);
            return k.variance * std::exp(-2.0 * s * s / (k.lengthscale * k.lengthscale));
        }
    }
    throw config_error("kernel_eval: bad kind");
}

inline double kernel_eval(const Kernel& k, double a, double b) {
    Eigen::RowVectorXd ra(1), rb(1);
    ra << a;
    rb << b;
    return kernel_eval(k, ra, rb);
}

inline Mat gram(const Kernel& k, const Mat& xa, const Mat& xb) {
    Mat out(xa.rows(), xb.rows());
    for (Eigen::Index i = 0; i < xa.rows(); ++i)
        for (Eigen::Index j = 0; j < xb.rows(); ++j) out(i, j) = kernel_eval(k, xa.row(i), xb.row(j));
    return out;
}

/// Cholesky with the jitter ladder {1e-8, 1e-6, 1e-4} scaled by mean diagonal.
inline Eigen::LLT<Mat> chol_with_jitter(Mat a, const std::string& what) {
    const double scale = a.rows() > 0 ? std::max(a.diagonal().mean(), 1e-12) : 1.0;
    Eigen::LLT<Mat> llt(a);
    if (llt.info() == Eigen::Success) return llt;
    for (double j : {1e-8, 1e-6, 1e-4}) {
        Mat aj = a + j * scale * Mat::Identity(a.rows(), a.cols());
        llt.compute(aj);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw numeric_error("Cholesky failed after jitter ladder for " + what);
}

inline double mvn_logpdf(const Vec& y, const Vec& mean, const Eigen::LLT<Mat>& llt) {
    const double d = static_cast<double>(y.size());
    Vec r = y - mean;
    Vec alpha = llt.matrixL().solve(r);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * d * std::log(two_pi_v<double>) - logdet - 0.5 * alpha.squaredNorm();
}

struct PosteriorQuery {
    Mat ctx_x;  // M x d
    Vec ctx_y;  // M
    Mat tgt_x;  // N x d
    double noise_var = 0.0;

    void validate() const {
        if (ctx_x.rows() != ctx_y.size()) throw config_error("PosteriorQuery: ctx size mismatch");
        if (noise_var < 0) throw config_error("PosteriorQuery: negative noise variance");
        if (!ctx_x.allFinite() || !ctx_y.allFinite() || !tgt_x.allFinite()) {
            throw config_error("PosteriorQuery: non-finite inputs");
        }
    }
};

struct GpPosterior {
    Vec mean;  // N
    Mat cov;   // N x N, includes observation noise on the diagonal
};

/// Standard GP predictive. mean = K*^T (K + s_n^2 I)^-1 y,
/// cov = K** - K*^T (K + s_n^2 I)^-1 K* + s_n^2 I. Empty context gives the prior.
inline GpPosterior gp_posterior(const PosteriorQuery& q, const Kernel& k) {
    q.validate();
    k.validate();
    const Eigen::Index m = q.ctx_x.rows();
    GpPosterior post;
    Mat kss = gram(k, q.tgt_x, q.tgt_x);
    kss.diagonal().array() += q.noise_var;
    if (m == 0) {
        post.mean = Vec::Zero(q.tgt_x.rows());
        post.cov = std::move(kss);
        return post;
    }
    Mat kcc = gram(k, q.ctx_x, q.ctx_x);
    kcc.diagonal().array() += q.noise_var;
    auto llt = chol_with_jitter(std::move(kcc), "context gram of " + k.describe());
    Mat kct = gram(k, q.ctx_x, q.tgt_x);  // M x N
    Mat solved = llt.solve(kct);          // (K + s I)^-1 K*
    post.mean = solved.transpose() * q.ctx_y;
    post.cov = kss - kct.transpose() * solved;
    return post;
}

/// Joint log-density of tgt_y under the predictive; optionally exposes the
/// per-point predictive mean.
inline double gp_posterior_loglik(const PosteriorQuery& q, const Kernel& k, const Vec& tgt_y,
                                  Vec* mean_out = nullptr) {
    if (tgt_y.size() != q.tgt_x.rows()) throw config_error("gp_posterior_loglik: tgt size mismatch");
    GpPosterior post = gp_posterior(q, k);
    if (mean_out) *mean_out = post.mean;
    auto llt = chol_with_jitter(post.cov, "predictive covariance of " + k.describe());
    return mvn_logpdf(tgt_y, post.mean, llt);
}

/// Draw from N(mean, cov) via Cholesky.
inline Vec gp_posterior_sample(const PosteriorQuery& q, const Kernel& k, RngStream& rng) {
    GpPosterior post = gp_posterior(q, k);
    auto llt = chol_with_jitter(post.cov, "predictive covariance of " + k.describe());
    Vec z(post.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return post.mean + Mat(llt.matrixL()) * z;
}

/// Prior draw y ~ N(0, K(x,x) + noise_var I) over the given positions.
inline Vec gp_prior_sample(const Kernel& k, const Mat& x, double noise_var, RngStream& rng) {
    k.validate();
    Mat kk = gram(k, x, x);
    kk.diagonal().array() += noise_var;
    auto llt = chol_with_jitter(std::move(kk), "prior gram of " + k.describe());
    Vec z(x.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return Mat(llt.matrixL()) * z;
}

}  // namespace flownp
