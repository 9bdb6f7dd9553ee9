#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "evkit/errors.hpp"
#include "evkit/tensor.hpp"

namespace evkit {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference check of an analytic gradient. Returns the maximum over
// coordinates of |analytic - numeric| / max(1, |analytic|). Throws
// NumericError if f evaluates to a non-finite value anywhere.
inline double grad_check(const ScalarFn& f, const Tensor& x, const Tensor& analytic,
                         double h = 1e-5) {
    require_same_shape(x, analytic, "grad_check");
    Tensor probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = probe.flat(i);
        probe.flat(i) = original + h;
        const double f_plus = f(probe);
        probe.flat(i) = original - h;
        const double f_minus = f(probe);
        probe.flat(i) = original;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw NumericError("grad_check: non-finite evaluation at coordinate " +
                               std::to_string(i));
        }
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double rel = std::abs(analytic.flat(i) - numeric) /
                           std::max(1.0, std::abs(analytic.flat(i)));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace evkit
