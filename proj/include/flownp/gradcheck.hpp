#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"
#include "flownp/rng.hpp"

namespace flownp {

// Central-difference check of an analytic gradient. Gates the autodiff
// backbone before anything downstream trusts it; run with T = long double
// where the 1e-4 tolerance would otherwise be flaky.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::int64_t worst_coord = -1;
    bool finite = true;
};

/// f: callable VecX<T> -> T. grad: analytic gradient at theta.
/// Checks coordinates coords (all of theta when empty) against
/// (f(theta + h e) - f(theta - h e)) / (2h), relative error floored at 1e-8.
template <class T, class F>
GradCheckResult grad_check(F&& f, const VecX<T>& theta, const VecX<T>& grad, T h,
                           std::vector<std::int64_t> coords = {}) {
    if (!(h > T(0))) throw config_error("grad_check: step h must be positive");
    if (coords.empty()) {
        coords.resize(static_cast<std::size_t>(theta.size()));
        for (std::int64_t i = 0; i < theta.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    constexpr double floor = 1e-8;
    GradCheckResult res;
    VecX<T> probe = theta;
    for (std::int64_t i : coords) {
        const T saved = probe[i];
        probe[i] = saved + h;
        const T fp = f(probe);
        probe[i] = saved - h;
        const T fm = f(probe);
        probe[i] = saved;
        if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
            res.finite = false;
            res.max_rel_error = std::numeric_limits<double>::infinity();
            res.worst_coord = i;
            return res;
        }
        const double fd = static_cast<double>((fp - fm) / (T(2) * h));
        const double an = static_cast<double>(grad[i]);
        const double denom = std::max({std::abs(fd), std::abs(an), floor});
        const double rel = std::abs(fd - an) / denom;
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_coord = i;
        }
    }
    return res;
}

/// Deterministic sample of n coordinate indices out of [0, total), spread so
/// large parameter vectors are still checked everywhere.
inline std::vector<std::int64_t> sample_coords(std::int64_t total, std::int64_t n, RngStream rng) {
    std::vector<std::int64_t> out;
    if (n <= 0 || n >= total) {
        out.resize(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) out[static_cast<std::size_t>(i)] = i;
        return out;
    }
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        // one draw per stratum [k*total/n, (k+1)*total/n)
        std::int64_t lo = k * total / n;
        std::int64_t hi = (k + 1) * total / n;
        out.push_back(lo + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo))));
    }
    return out;
}

}  // namespace flownp
