// Independent reference computations used by the tests. Nothing here calls
// into the library under test.
#pragma once
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double sse_about_mean(const std::vector<double>& y) {
    if (y.empty()) return 0.0;
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    double s = 0.0;
    for (double v : y) s += (v - m) * (v - m);
    return s;
}

/// Minimum SSE over every axis-aligned single split (and no split), found by
/// trying each feature and each gap between distinct sorted values.
inline double best_stump_sse(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    double best = sse_about_mean(y);
    const std::size_t nf = x.empty() ? 0 : x[0].size();
    for (std::size_t f = 0; f < nf; ++f) {
        std::vector<double> values;
        for (const auto& row : x) values.push_back(row[f]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            const double t = 0.5 * (values[i] + values[i + 1]);
            std::vector<double> l, r;
            for (std::size_t j = 0; j < x.size(); ++j) (x[j][f] <= t ? l : r).push_back(y[j]);
            best = std::min(best, sse_about_mean(l) + sse_about_mean(r));
        }
    }
    return best;
}

inline double r_squared(const std::vector<double>& y, const std::vector<double>& yh) {
    double res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) res += (y[i] - yh[i]) * (y[i] - yh[i]);
    return 1.0 - res / sse_about_mean(y);
}

struct SignedRank {
    double w_plus = 0.0;
    double p_greater = 0.0;
    double p_less = 0.0;
    double p_two_sided = 0.0;
};

/// Wilcoxon signed-rank statistic and p-values by listing all 2^n sign
/// assignments. Ranks are computed by counting (O(n^2)).
inline SignedRank signed_rank_enumerate(const std::vector<double>& diffs) {
    std::vector<double> d;
    for (double v : diffs)
        if (v != 0.0) d.push_back(v);
    const std::size_t n = d.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double below = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) below += 1.0;
            else if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
        }
        rank[i] = below + (equal + 1.0) / 2.0;
    }
    SignedRank out;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) out.w_plus += rank[i];
    const std::uint64_t patterns = std::uint64_t{1} << n;
    std::uint64_t ge = 0, le = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1U) w += rank[i];
        if (w >= out.w_plus - 1e-9) ++ge;
        if (w <= out.w_plus + 1e-9) ++le;
    }
    out.p_greater = static_cast<double>(ge) / static_cast<double>(patterns);
    out.p_less = static_cast<double>(le) / static_cast<double>(patterns);
    out.p_two_sided = std::min(1.0, 2.0 * std::min(out.p_greater, out.p_less));
    return out;
}

/// Amplitude of the frequency-f component of x (sampled at fs) from a direct
/// DFT projection. Use a window spanning a whole number of periods.
inline double tone_amplitude(const std::vector<double>& x, std::size_t begin, std::size_t end, double f, double fs) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = begin; i < end; ++i) {
        const double ph = -2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
        acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return 2.0 * std::abs(acc) / static_cast<double>(end - begin);
}

/// Magnitude of a digital Butterworth low-pass of the given order designed by
/// the prewarped bilinear transform.
inline double butterworth_magnitude(double f, double cutoff, double fs, int order) {
    const double r = std::tan(std::numbers::pi * f / fs) / std::tan(std::numbers::pi * cutoff / fs);
    return 1.0 / std::sqrt(1.0 + std::pow(r, 2.0 * order));
}

} // namespace oracle
