#pragma once

#include <cmath>
#include <string>

#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"

namespace flownp {

// Probability-path schedules y_t = alpha_t y1 + beta_t y0.
enum class ScheduleKind { cond_ot, linear_vp, cosine, poly2 };

// What the network regresses / outputs at each step.
enum class Objective { velocity, clean, noise };

inline const char* to_string(ScheduleKind s) {
    switch (s) {
        case ScheduleKind::cond_ot: return "cond-ot";
        case ScheduleKind::linear_vp: return "linear-vp";
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::poly2: return "poly2";
    }
    return "?";
}

inline const char* to_string(Objective o) {
    switch (o) {
        case Objective::velocity: return "velocity";
        case Objective::clean: return "clean";
        case Objective::noise: return "noise";
    }
    return "?";
}

inline ScheduleKind schedule_from_string(const std::string& s) {
    if (s == "cond-ot") return ScheduleKind::cond_ot;
    if (s == "linear-vp") return ScheduleKind::linear_vp;
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "poly2") return ScheduleKind::poly2;
    throw config_error("unknown schedule: " + s);
}

inline Objective objective_from_string(const std::string& s) {
    if (s == "velocity") return Objective::velocity;
    if (s == "clean") return Objective::clean;
    if (s == "noise") return Objective::noise;
    throw config_error("unknown objective: " + s);
}

template <class T>
struct ScheduleEval {
    T alpha, beta, dalpha, dbeta;
};

/// (alpha, beta) and their exact derivatives at t in [0,1]. linear-vp has
/// dbeta -> -inf at t=1; callers that divide by schedule coefficients keep
/// their grids off the endpoints.
template <class T>
ScheduleEval<T> schedule_eval(ScheduleKind s, T t) {
    if (!(t >= T(0) && t <= T(1))) throw config_error("schedule_eval: t outside [0,1]");
    switch (s) {
        case ScheduleKind::cond_ot:
            return {t, T(1) - t, T(1), T(-1)};
        case ScheduleKind::linear_vp: {
            const T beta = std::sqrt(T(1) - t * t);
            const T dbeta = beta > T(0) ? -t / beta : -std::numeric_limits<T>::infinity();
            return {t, beta, T(1), dbeta};
        }
        case ScheduleKind::cosine: {
            const T h = T(0.5L) * two_pi_v<T> / T(2);  // pi/2
            return {std::sin(h * t), std::cos(h * t), h * std::cos(h * t), -h * std::sin(h * t)};
        }
        case ScheduleKind::poly2: {
            const T u = T(1) - t;
            return {t * t, u * u, T(2) * t, T(-2) * u};
        }
    }
    throw config_error("schedule_eval: bad kind");
}

/// Converts a network output into a flow velocity at (y_t, t).
///   velocity: identity
///   clean:    u = da*yhat1 + db*(y_t - a*yhat1)/b
///   noise:    u = da*(y_t - b*yhat0)/a + db*yhat0
/// Throws when the required divisor is below 1e-6 (samplers avoid the
/// singular endpoints of the schedule).
template <class T>
MatX<T> to_velocity(Objective obj, const MatX<T>& net_out, const MatX<T>& y_t, T t,
                    ScheduleKind s) {
    if (obj == Objective::velocity) return net_out;
    const auto se = schedule_eval(s, t);
    if (obj == Objective::clean) {
        if (std::abs(se.beta) < T(1e-6)) {
            throw numeric_error("to_velocity: beta_t below 1e-6 for clean objective");
        }
        const T r = se.dbeta / se.beta;
        return ((se.dalpha - r * se.alpha) * net_out + r * y_t).eval();
    }
    if (std::abs(se.alpha) < T(1e-6)) {
        throw numeric_error("to_velocity: alpha_t below 1e-6 for noise objective");
    }
    const T r = se.dalpha / se.alpha;
    return ((se.dbeta - r * se.beta) * net_out + r * y_t).eval();
}

}  // namespace flownp
