#pragma once
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "gait_data.hpp"
#include "matrix.hpp"

namespace gaittorque {

/// Linear interpolation onto `n` points spanning the original index range.
/// The first and last samples are reproduced exactly.
inline Series resample_cycle(std::span<const double> series, std::size_t n = kCycleSamples) {
    if (series.size() < 2) throw Error(ErrorKind::TooShort, "resample_cycle needs at least 2 samples");
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "resample_cycle target length must be positive");
    Series out(n);
    out[0] = series.front();
    if (n == 1) return out;
    const std::size_t last = series.size() - 1;
    const double step = static_cast<double>(last) / static_cast<double>(n - 1);
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double pos = static_cast<double>(j) * step;
        const auto i0 = std::min(static_cast<std::size_t>(pos), last - 1);
        const double frac = pos - static_cast<double>(i0);
        out[j] = series[i0] + frac * (series[i0 + 1] - series[i0]);
    }
    out[n - 1] = series.back();
    return out;
}

/// Per-sample forward difference; the last value repeats so the length is kept.
inline Series first_difference(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 2) throw Error(ErrorKind::TooShort, "first_difference needs at least 2 samples");
    Series out(n);
    for (std::size_t i = 0; i + 1 < n; ++i) out[i] = series[i + 1] - series[i];
    out[n - 1] = out[n - 2];
    return out;
}

struct FilterSpec {
    double cutoff_hz = 6.0;
    int order = 2; // per pass
    bool zero_phase = true;
};

/// One second-order (or first-order, with b2 = a2 = 0) section, transposed direct form II.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;

    double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Digital Butterworth low-pass as cascaded sections (bilinear transform with
/// frequency prewarping, so |H(cutoff)|^2 = 1/2 exactly).
inline std::vector<Biquad> butterworth_sections(int order, double cutoff_hz, double fs_hz) {
    if (order < 1) throw Error(ErrorKind::InvalidArgument, "filter order must be positive");
    if (!(cutoff_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "cutoff must be positive");
    if (!(cutoff_hz < fs_hz / 2.0))
        throw Error(ErrorKind::CutoffAboveNyquist, "cutoff " + std::to_string(cutoff_hz) + " Hz >= Nyquist " +
                                                       std::to_string(fs_hz / 2.0) + " Hz");
    const double k = std::tan(std::numbers::pi * cutoff_hz / fs_hz);
    const double k2 = k * k;
    std::vector<Biquad> sections;
    for (int i = 0; i < order / 2; ++i) {
        const double q = 1.0 / (2.0 * std::cos(std::numbers::pi * (2 * i + 1) / (2.0 * order)));
        const double norm = 1.0 / (1.0 + k / q + k2);
        Biquad s;
        s.b0 = k2 * norm;
        s.b1 = 2.0 * s.b0;
        s.b2 = s.b0;
        s.a1 = 2.0 * (k2 - 1.0) * norm;
        s.a2 = (1.0 - k / q + k2) * norm;
        sections.push_back(s);
    }
    if (order % 2 == 1) {
        Biquad s;
        s.b0 = k / (1.0 + k);
        s.b1 = s.b0;
        s.a1 = (k - 1.0) / (k + 1.0);
        sections.push_back(s);
    }
    return sections;
}

namespace detail {
// Filters in place, starting each section in the steady state it would reach
// for a constant input equal to the first sample.
inline void run_sections(std::vector<double>& x, const std::vector<Biquad>& sections) {
    for (const auto& s : sections) {
        const double x0 = x.front();
        const double y0 = s.dc_gain() * x0;
        double z2 = s.b2 * x0 - s.a2 * y0;
        double z1 = s.b1 * x0 - s.a1 * y0 + z2;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}
} // namespace detail

/// Butterworth low-pass. With `zero_phase` the filter runs forward then
/// backward over an odd-reflection padded copy (3×order samples per edge).
inline Series butterworth_lowpass(std::span<const double> series, const FilterSpec& spec, double fs_hz) {
    const auto sections = butterworth_sections(spec.order, spec.cutoff_hz, fs_hz);
    const std::size_t pad = 3 * static_cast<std::size_t>(spec.order);
    const std::size_t n = series.size();
    if (n <= pad) throw Error(ErrorKind::TooShort, "filter needs more than 3*order samples");

    if (!spec.zero_phase) {
        Series out(series.begin(), series.end());
        detail::run_sections(out, sections);
        return out;
    }

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * series[0] - series[i]);
    ext.insert(ext.end(), series.begin(), series.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * series[n - 1] - series[n - 1 - i]);

    detail::run_sections(ext, sections);
    std::reverse(ext.begin(), ext.end());
    detail::run_sections(ext, sections);
    std::reverse(ext.begin(), ext.end());
    return Series(ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

inline Series mass_normalize(std::span<const double> torque, double mass_kg) {
    if (!(mass_kg > 0.0)) throw Error(ErrorKind::NonPositiveMass, "mass must be > 0, got " + std::to_string(mass_kg));
    Series out(torque.size());
    for (std::size_t i = 0; i < torque.size(); ++i) out[i] = torque[i] / mass_kg;
    return out;
}

enum class ProcessingOrder {
    resample_differentiate_filter, // default
    filter_resample_differentiate, // filter at native rate first; sensitivity check only
};

struct PrepConfig {
    FilterSpec filter{};
    ProcessingOrder order = ProcessingOrder::resample_differentiate_filter;
};

/// Turns a validated raw trial into the 200×9 feature matrix and the
/// mass-normalized torque target.
inline ProcessedTrial build_feature_matrix(const TrialRecord& trial, const SubjectMeta& subject,
                                           const PrepConfig& cfg = {}) {
    if (subject.id != trial.subject_id)
        throw Error(ErrorKind::DanglingSubjectRef, "trial '" + trial.id + "' belongs to '" + trial.subject_id + "'");
    if (!(trial.cycle_duration_s > 0.0))
        throw Error(ErrorKind::InvalidArgument, "cycle_duration_s must be > 0 for trial '" + trial.id + "'");
    const auto& ch = trial.channels;
    const std::array<const Series*, 3> angles = {&ch.theta_hip_deg, &ch.theta_knee_deg, &ch.theta_shank_deg};
    const double fs_cycle = static_cast<double>(kCycleSamples) / trial.cycle_duration_s;

    const auto to_cycle = [&](const Series& s) {
        if (!trial.raw && s.size() == kCycleSamples) return s;
        return resample_cycle(s, kCycleSamples);
    };

    std::array<Series, 6> kin;
    if (cfg.order == ProcessingOrder::resample_differentiate_filter) {
        for (std::size_t c = 0; c < 3; ++c) {
            kin[c] = to_cycle(*angles[c]);
            kin[c + 3] = first_difference(kin[c]);
        }
        for (auto& s : kin) s = butterworth_lowpass(s, cfg.filter, fs_cycle);
    } else {
        const double fs_native = static_cast<double>(angles[0]->size()) / trial.cycle_duration_s;
        for (std::size_t c = 0; c < 3; ++c) {
            kin[c] = to_cycle(butterworth_lowpass(*angles[c], cfg.filter, fs_native));
            kin[c + 3] = first_difference(kin[c]);
        }
    }

    ProcessedTrial out;
    out.id = trial.id;
    out.subject_id = trial.subject_id;
    out.cohort = subject.cohort;
    out.speed_mps = trial.speed_mps;
    out.speed_class = trial.speed_class;
    out.target = mass_normalize(to_cycle(ch.tau_ankle_Nm), subject.mass_kg);
    out.features = Matrix(kCycleSamples, kFeatureNames.size());
    for (std::size_t r = 0; r < kCycleSamples; ++r) {
        for (std::size_t c = 0; c < 6; ++c) out.features(r, c) = kin[c][r];
        out.features(r, 6) = subject.l_thigh_m;
        out.features(r, 7) = subject.l_shank_m;
        out.features(r, 8) = subject.l_foot_m;
    }
    return out;
}

/// Processes every trial of a dataset, in dataset order.
inline std::vector<ProcessedTrial> process_dataset(const Dataset& d, const PrepConfig& cfg = {}) {
    std::vector<ProcessedTrial> out;
    out.reserve(d.trials.size());
    for (const auto& t : d.trials) out.push_back(build_feature_matrix(t, d.subject(t.subject_id), cfg));
    return out;
}

} // namespace gaittorque
