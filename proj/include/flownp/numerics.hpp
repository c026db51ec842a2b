#pragma once

#include <cmath>
#include <span>

#include <Eigen/Core>

#include "flownp/errors.hpp"

namespace flownp {

template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Mat = MatX<double>;
using Vec = VecX<double>;

template <class T>
inline constexpr T two_pi_v = T(6.283185307179586476925286766559L);

/// log N(v; 0, I) = -(d/2) ln(2*pi) - |v|^2 / 2
template <class T>
T std_normal_logpdf(const Eigen::Ref<const MatX<T>>& v) {
    const T d = static_cast<T>(v.size());
    return -T(0.5) * d * std::log(two_pi_v<T>) - T(0.5) * v.squaredNorm();
}

inline double std_normal_logpdf(std::span<const double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    return -0.5 * static_cast<double>(v.size()) * std::log(two_pi_v<double>) - 0.5 * ss;
}

template <class T>
bool all_finite(const MatX<T>& m) {
    return m.allFinite();
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw numeric_error(std::string("non-finite values in ") + what);
    }
}

}  // namespace flownp
