#pragma once

#include <cmath>
#include <cstdint>

#include "flownp/errors.hpp"
#include "flownp/numerics.hpp"

namespace flownp {

// Sinusoidal feature encoding of a scalar input (position x or flow time t).
// K frequencies in geometric progression from 2*pi/max_period up to
// 2*pi/min_period; output is [sin(w1 x), cos(w1 x), ..., sin(wK x), cos(wK x)].
// The encoding is a function of the value itself, never of sequence position.
struct Encoding {
    int num_frequencies = 10;
    double min_period = 0.1;
    double max_period = 8.0;

    int dim() const { return 2 * num_frequencies; }

    void validate() const {
        if (num_frequencies < 1) throw config_error("Encoding: num_frequencies must be >= 1");
        if (!(min_period > 0) || !(max_period > 0)) {
            throw config_error("Encoding: periods must be positive");
        }
        if (min_period > max_period) throw config_error("Encoding: min_period > max_period");
    }

    double frequency(int k) const {
        const double w_lo = two_pi_v<double> / max_period;
        const double w_hi = two_pi_v<double> / min_period;
        if (num_frequencies == 1) return w_lo;
        const double ratio = std::pow(w_hi / w_lo, 1.0 / (num_frequencies - 1));
        return w_lo * std::pow(ratio, k);
    }
};

/// Writes the 2K-dimensional encoding of x into out[0..2K).
template <class T>
void sinusoidal_encode(double x, const Encoding& enc, T* out) {
    if (!std::isfinite(x)) throw numeric_error("sinusoidal_encode: non-finite input");
    for (int k = 0; k < enc.num_frequencies; ++k) {
        const double wx = enc.frequency(k) * x;
        out[2 * k] = static_cast<T>(std::sin(wx));
        out[2 * k + 1] = static_cast<T>(std::cos(wx));
    }
}

inline Vec sinusoidal_encode(double x, const Encoding& enc) {
    Vec out(enc.dim());
    sinusoidal_encode<double>(x, enc, out.data());
    return out;
}

}  // namespace flownp
