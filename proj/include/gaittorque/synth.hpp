#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gait_data.hpp"
#include "random.hpp"
#include "signal.hpp"

namespace gaittorque {

/// Constants of the synthetic gait generator. Angles in degrees, phases in
/// fractions of a cycle, torque in N·m/kg.
struct OracleParams {
    double amp_hip = 25.0;
    double amp_knee = 30.0;
    double amp_shank = 20.0;
    double phase_hip = 0.0;
    double phase_knee = 0.0;
    double phase_shank = 0.0;
    double speed_gain_hip = 5.0; // degrees per m/s
    double speed_gain_knee = 10.0;
    double speed_gain_shank = 8.0;
    double reference_speed = 1.3;
    double w_hip = 0.4;
    double w_shankdot = -0.6;
    double w_knee = 0.3;
    double knee_hinge = 20.0;
    double noise_sigma = 0.01;
    double amputee_shank_factor = 0.6;
    double amputee_knee_phase = 0.06;
    double speed_jitter = 0.05;
};

/// Per-subject variation around the oracle constants.
struct SubjectModulation {
    double amp_hip = 1.0;
    double amp_knee = 1.0;
    double amp_shank = 1.0;
    double phase_hip = 0.0;
    double phase_knee = 0.0;
    double phase_shank = 0.0;

    friend bool operator==(const SubjectModulation&, const SubjectModulation&) = default;
};

struct SyntheticSubject {
    SubjectMeta meta;
    SubjectModulation mod;
};

inline SyntheticSubject gen_subject(std::uint64_t seed, Cohort cohort, std::string id = "S") {
    Rng rng(seed);
    SyntheticSubject s;
    s.meta.id = std::move(id);
    s.meta.cohort = cohort;
    s.mod.amp_hip = rng.uniform(0.9, 1.1);
    s.mod.amp_knee = rng.uniform(0.9, 1.1);
    s.mod.amp_shank = rng.uniform(0.9, 1.1);
    s.mod.phase_hip = rng.uniform(-0.05, 0.05);
    s.mod.phase_knee = rng.uniform(-0.05, 0.05);
    s.mod.phase_shank = rng.uniform(-0.05, 0.05);
    s.meta.mass_kg = rng.uniform(60.0, 100.0);
    s.meta.l_thigh_m = rng.uniform(0.38, 0.46);
    s.meta.l_shank_m = rng.uniform(0.37, 0.45);
    s.meta.l_foot_m = rng.uniform(0.23, 0.29);
    s.meta.height_m = (s.meta.l_thigh_m + s.meta.l_shank_m) / 0.53;
    return s;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// Ground-truth torque (N·m/kg) of one sample given hip angle, knee angle and
/// per-sample shank angle difference.
inline double oracle_torque(double theta_hip, double theta_knee, double dtheta_shank, const OracleParams& p = {}) {
    return p.w_hip * theta_hip / p.amp_hip + p.w_shankdot * dtheta_shank +
           p.w_knee * softplus(theta_knee - p.knee_hinge) / 10.0;
}

/// Nominal gait-cycle duration at a walking speed.
inline double synthetic_cycle_duration(double speed_mps) {
    return std::max(0.6, 1.1 - 0.3 * (speed_mps - 1.3));
}

/// One 200-sample cycle. Amputee subjects get the shank amplitude and knee
/// phase distortion applied to their kinematic channels.
inline TrialRecord gen_trial(const SyntheticSubject& subject, double speed_mps, std::uint64_t seed,
                             const OracleParams& p = {}, std::string id = "trial",
                             SpeedClass speed_class = SpeedClass::normal) {
    if (!(speed_mps > 0.0)) throw Error(ErrorKind::InvalidArgument, "speed must be > 0");
    const auto& m = subject.mod;
    const bool amputee = subject.meta.cohort == Cohort::amputee;
    const double dv = speed_mps - p.reference_speed;
    const double a_hip = m.amp_hip * (p.amp_hip + p.speed_gain_hip * dv);
    const double a_knee = m.amp_knee * (p.amp_knee + p.speed_gain_knee * dv);
    const double a_shank =
        m.amp_shank * (p.amp_shank + p.speed_gain_shank * dv) * (amputee ? p.amputee_shank_factor : 1.0);
    const double ph_hip = p.phase_hip + m.phase_hip;
    const double ph_knee = p.phase_knee + m.phase_knee + (amputee ? p.amputee_knee_phase : 0.0);
    const double ph_shank = p.phase_shank + m.phase_shank;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    TrialRecord t;
    t.id = std::move(id);
    t.subject_id = subject.meta.id;
    t.path = "trials/" + t.id + ".csv";
    t.speed_mps = speed_mps;
    t.speed_class = speed_class;
    t.cycle_duration_s = synthetic_cycle_duration(speed_mps);
    t.raw = false;
    auto& c = t.channels;
    for (std::size_t i = 0; i < kCycleSamples; ++i) {
        const double phi = static_cast<double>(i) / static_cast<double>(kCycleSamples);
        c.theta_hip_deg.push_back(a_hip * std::cos(two_pi * (phi + ph_hip)));
        const double s = std::max(0.0, std::sin(two_pi * (phi + ph_knee)));
        c.theta_knee_deg.push_back(a_knee * s * s);
        c.theta_shank_deg.push_back(a_shank * std::sin(two_pi * phi + std::numbers::pi / 3.0 + two_pi * ph_shank));
    }
    const auto dshank = first_difference(c.theta_shank_deg);
    Rng rng(seed);
    for (std::size_t i = 0; i < kCycleSamples; ++i) {
        double tau = oracle_torque(c.theta_hip_deg[i], c.theta_knee_deg[i], dshank[i], p);
        if (p.noise_sigma > 0.0) tau += p.noise_sigma * rng.normal();
        c.tau_ankle_Nm.push_back(tau * subject.meta.mass_kg);
    }
    return t;
}

struct SynthSpec {
    int n_able = 30;
    int n_amputee = 5;
    std::vector<double> speeds{0.9, 1.1, 1.3, 1.5, 1.7};
    int trials_per_speed = 1;
    std::uint64_t master_seed = 0;
    double fast_class_above = 1.45; // able trials above this nominal speed are labelled fast
    double amputee_normal_speed = 1.1;
    double amputee_fast_speed = 1.5;
    int amputee_normal_trials = 8;
    int amputee_fast_trials = 3;
    OracleParams params{};
};

struct SyntheticDataset {
    Dataset dataset;
    std::vector<SyntheticSubject> subjects;
};

inline SyntheticDataset gen_dataset(const SynthSpec& spec) {
    if (spec.n_able < 1) throw Error(ErrorKind::InvalidArgument, "at least one able-bodied subject is required");
    if (spec.n_amputee < 0 || spec.trials_per_speed < 1)
        throw Error(ErrorKind::InvalidArgument, "invalid subject or trial counts");
    SyntheticDataset out;
    out.dataset.provenance = Provenance::synthetic;
    const auto& p = spec.params;
    char buf[64];

    for (int w = 0; w < spec.n_able; ++w) {
        std::snprintf(buf, sizeof buf, "S%02d", w + 1);
        const std::uint64_t sseed = derive_seed(spec.master_seed, 0, w);
        auto subject = gen_subject(sseed, Cohort::able, buf);
        for (std::size_t v = 0; v < spec.speeds.size(); ++v) {
            for (int j = 0; j < spec.trials_per_speed; ++j) {
                const std::uint64_t tseed = derive_seed(sseed, v, j);
                Rng jitter(derive_seed(tseed, 1));
                const double speed = spec.speeds[v] + jitter.uniform(-p.speed_jitter, p.speed_jitter);
                std::snprintf(buf, sizeof buf, "%s_v%zu_%d", subject.meta.id.c_str(), v + 1, j + 1);
                const auto cls = spec.speeds[v] > spec.fast_class_above ? SpeedClass::fast : SpeedClass::normal;
                out.dataset.trials.push_back(gen_trial(subject, speed, tseed, p, buf, cls));
            }
        }
        out.dataset.subjects.push_back(subject.meta);
        out.subjects.push_back(std::move(subject));
    }

    for (int a = 0; a < spec.n_amputee; ++a) {
        std::snprintf(buf, sizeof buf, "A%d", a + 1);
        const std::uint64_t sseed = derive_seed(spec.master_seed, 1, a);
        auto subject = gen_subject(sseed, Cohort::amputee, buf);
        const auto add = [&](SpeedClass cls, double nominal, int count) {
            for (int j = 0; j < count; ++j) {
                const std::uint64_t tseed = derive_seed(sseed, cls == SpeedClass::normal ? 0 : 1, j);
                Rng jitter(derive_seed(tseed, 1));
                const double speed = nominal + jitter.uniform(-p.speed_jitter, p.speed_jitter);
                std::snprintf(buf, sizeof buf, "%s_%s_%d", subject.meta.id.c_str(),
                              std::string(to_string(cls)).c_str(), j + 1);
                out.dataset.trials.push_back(gen_trial(subject, speed, tseed, p, buf, cls));
            }
        };
        add(SpeedClass::normal, spec.amputee_normal_speed, spec.amputee_normal_trials);
        add(SpeedClass::fast, spec.amputee_fast_speed, spec.amputee_fast_trials);
        out.dataset.subjects.push_back(subject.meta);
        out.subjects.push_back(std::move(subject));
    }
    return out;
}

} // namespace gaittorque
