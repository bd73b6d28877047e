#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gaittorque/synth.hpp>

using namespace gaittorque;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double amplitude(const Series& s) {
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    return *hi - *lo;
}

} // namespace

TEST(SynthSubject, SameSeedSameSubject) {
    const auto a = gen_subject(42, Cohort::able, "S");
    const auto b = gen_subject(42, Cohort::able, "S");
    EXPECT_EQ(a.meta, b.meta);
    EXPECT_EQ(a.mod, b.mod);
}

TEST(SynthSubject, DifferentSeedsDiffer) {
    const auto a = gen_subject(1, Cohort::able, "S");
    const auto b = gen_subject(2, Cohort::able, "S");
    EXPECT_NE(a.mod, b.mod);
    EXPECT_NE(a.meta.mass_kg, b.meta.mass_kg);
}

TEST(SynthSubject, AnthropometryInRange) {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto m = gen_subject(s, Cohort::able, "S").meta;
        EXPECT_GE(m.mass_kg, 60.0);
        EXPECT_LT(m.mass_kg, 100.0);
        EXPECT_GT(m.l_thigh_m, 0.3);
        EXPECT_GT(m.l_shank_m, 0.3);
        EXPECT_GT(m.l_foot_m, 0.2);
    }
}

TEST(SynthTrial, NoiselessTrialsRegenerateBitIdentical) {
    OracleParams p;
    p.noise_sigma = 0.0;
    const auto s = gen_subject(3, Cohort::able, "S");
    EXPECT_EQ(gen_trial(s, 1.2, 9, p), gen_trial(s, 1.2, 9, p));
    EXPECT_EQ(gen_trial(s, 1.2, 9, p).channels, gen_trial(s, 1.2, 10, p).channels);
}

TEST(SynthTrial, NoiseIsSeeded) {
    const auto s = gen_subject(3, Cohort::able, "S");
    EXPECT_EQ(gen_trial(s, 1.2, 9), gen_trial(s, 1.2, 9));
    EXPECT_NE(gen_trial(s, 1.2, 9).channels.tau_ankle_Nm, gen_trial(s, 1.2, 10).channels.tau_ankle_Nm);
}

TEST(SynthTrial, HipAmplitudeGrowsWithSpeed) {
    const auto s = gen_subject(5, Cohort::able, "S");
    double prev = 0.0;
    for (double v : {0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9}) {
        const double a = amplitude(gen_trial(s, v, 1).channels.theta_hip_deg);
        EXPECT_GT(a, prev);
        prev = a;
    }
}

TEST(SynthTrial, ShapeAndUnits) {
    OracleParams p;
    p.noise_sigma = 0.0;
    const auto s = gen_subject(8, Cohort::able, "S");
    const auto t = gen_trial(s, 1.3, 2, p, "S_t", SpeedClass::fast);
    EXPECT_EQ(t.id, "S_t");
    EXPECT_EQ(t.speed_class, SpeedClass::fast);
    EXPECT_FALSE(t.raw);
    EXPECT_EQ(t.channels.tau_ankle_Nm.size(), kCycleSamples);
    EXPECT_DOUBLE_EQ(t.cycle_duration_s, synthetic_cycle_duration(1.3));
    const auto dshank = first_difference(t.channels.theta_shank_deg);
    for (std::size_t i = 0; i < kCycleSamples; ++i) {
        const double tau = oracle_torque(t.channels.theta_hip_deg[i], t.channels.theta_knee_deg[i], dshank[i], p);
        EXPECT_NEAR(t.channels.tau_ankle_Nm[i], tau * s.meta.mass_kg, 1e-9);
        EXPECT_GE(t.channels.theta_knee_deg[i], 0.0);
    }
    EXPECT_THROW(gen_trial(s, 0.0, 1), Error);
}

TEST(SynthTrial, AmputeeKinematicsAreDistorted) {
    auto able = gen_subject(8, Cohort::able, "S");
    auto amp = able;
    amp.meta.cohort = Cohort::amputee;
    const auto a = gen_trial(able, 1.1, 1);
    const auto b = gen_trial(amp, 1.1, 1);
    EXPECT_EQ(a.channels.theta_hip_deg, b.channels.theta_hip_deg);
    EXPECT_LT(amplitude(b.channels.theta_shank_deg), amplitude(a.channels.theta_shank_deg));
    EXPECT_NE(a.channels.theta_knee_deg, b.channels.theta_knee_deg);
}

TEST(SynthDataset, Counts) {
    SynthSpec spec;
    spec.n_amputee = 0;
    spec.master_seed = 1;
    const auto d = gen_dataset(spec).dataset;
    EXPECT_EQ(d.subjects.size(), 30u);
    EXPECT_EQ(d.trials.size(), 150u);
    EXPECT_TRUE(validate_dataset(d).empty());

    spec.n_amputee = 5;
    const auto full = gen_dataset(spec).dataset;
    EXPECT_EQ(full.trials.size(), 150u + 5u * 11u);
    std::set<std::string> ids;
    for (const auto& t : full.trials) ids.insert(t.id);
    EXPECT_EQ(ids.size(), full.trials.size());
    int normal = 0, fast = 0;
    for (const auto& t : full.trials) {
        if (t.subject_id != "A3") continue;
        (t.speed_class == SpeedClass::normal ? normal : fast) += 1;
        EXPECT_NEAR(t.speed_mps, t.speed_class == SpeedClass::normal ? 1.1 : 1.5, 0.05);
    }
    EXPECT_EQ(normal, 8);
    EXPECT_EQ(fast, 3);
}

TEST(SynthDataset, SameSeedSameManifestBytes) {
    SynthSpec spec;
    spec.n_able = 4;
    spec.n_amputee = 1;
    spec.master_seed = 12;
    const auto a = fs::temp_directory_path() / "gaittorque_synth_a";
    const auto b = fs::temp_directory_path() / "gaittorque_synth_b";
    fs::remove_all(a);
    fs::remove_all(b);
    write_dataset(gen_dataset(spec).dataset, a);
    write_dataset(gen_dataset(spec).dataset, b);
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    for (const auto& e : fs::directory_iterator(a / "trials"))
        EXPECT_EQ(slurp(e.path()), slurp(b / "trials" / e.path().filename()));
    spec.master_seed = 13;
    fs::remove_all(b);
    write_dataset(gen_dataset(spec).dataset, b);
    EXPECT_NE(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(SynthDataset, InvalidSpec) {
    SynthSpec spec;
    spec.n_able = 0;
    EXPECT_THROW(gen_dataset(spec), Error);
}
