#pragma once
#include <cmath>
#include <span>

#include "error.hpp"

namespace gaittorque {

/// Coefficient of determination, 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw Error(ErrorKind::LengthMismatch, "r_squared: lengths differ");
    if (y.size() < 2) throw Error(ErrorKind::LengthMismatch, "r_squared needs at least 2 samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - y_hat[i];
        const double d = y[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (!(ss_tot > 0.0)) throw Error(ErrorKind::ConstantTarget, "r_squared is undefined for a constant target");
    return 1.0 - ss_res / ss_tot;
}

inline double rmse(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw Error(ErrorKind::LengthMismatch, "rmse: lengths differ");
    if (y.empty()) throw Error(ErrorKind::LengthMismatch, "rmse needs at least 1 sample");
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - y_hat[i];
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(y.size()));
}

} // namespace gaittorque
