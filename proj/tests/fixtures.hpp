// Shared test data builders.
#pragma once
#include <random>
#include <vector>

#include <gaittorque/evaluation.hpp>
#include <gaittorque/hybrid.hpp>
#include <gaittorque/signal.hpp>
#include <gaittorque/synth.hpp>

namespace fixtures {

using namespace gaittorque;

inline Matrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(gen);
    return m;
}

/// Hybrid model over the first three canonical features with `n_blocks`
/// blocks of random size and depth, each fitted to a different random target.
inline HybridModel random_hybrid(std::mt19937_64& gen, std::size_t n_blocks) {
    std::uniform_int_distribution<int> trees(1, 25), depth(1, 6), rows(20, 80);
    std::normal_distribution<double> noise(0.0, 0.3);
    HybridModel m;
    m.feature_set = {0, 1, 2};
    m.feature_names = feature_names_for(m.feature_set);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const auto n = static_cast<std::size_t>(rows(gen));
        const auto x = random_matrix(gen, n, 3);
        Series y(n);
        const double shift = noise(gen) * 3.0;
        for (std::size_t r = 0; r < n; ++r) y[r] = shift + x(r, 0) * x(r, 1) + std::sin(2.0 * x(r, 2)) + noise(gen);
        const ForestConfig cfg{trees(gen), depth(gen), 1, true, {}, gen()};
        m.blocks.push_back(fit_block(x, y, cfg, static_cast<int>(b), m.feature_names));
    }
    recompute_alphas(m);
    return m;
}

struct SyntheticCohort {
    SyntheticDataset synth;
    std::vector<ProcessedTrial> processed;
    std::vector<ProcessedTrial> able;
};

inline SyntheticCohort make_cohort(const SynthSpec& spec) {
    SyntheticCohort c;
    c.synth = gen_dataset(spec);
    c.processed = process_dataset(c.synth.dataset);
    for (const auto& t : c.processed)
        if (t.cohort == gaittorque::Cohort::able) c.able.push_back(t);
    return c;
}

struct SubjectCycles {
    std::vector<TargetedTrial> normal;
    std::vector<TargetedTrial> fast;
};

/// Normal and fast cycles of one amputee with normative targets from the able cohort.
inline SubjectCycles amputee_cycles(const SyntheticCohort& c, const std::string& subject) {
    SubjectCycles out;
    for (const auto& t : c.processed) {
        if (t.subject_id != subject) continue;
        (t.speed_class == SpeedClass::normal ? out.normal : out.fast)
            .push_back({&t, normative_target(c.able, t.speed_mps)});
    }
    return out;
}

inline std::vector<std::string> amputee_ids(const SyntheticCohort& c) {
    std::vector<std::string> ids;
    for (const auto& s : c.synth.dataset.subjects)
        if (s.cohort == gaittorque::Cohort::amputee) ids.push_back(s.id);
    return ids;
}

} // namespace fixtures
