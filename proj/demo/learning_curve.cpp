// End-to-end run on a synthetic cohort: fit the inter-individual base model on
// able-bodied subjects, then adapt it to each synthetic amputee with the
// rotation protocol and print the median learning curve.
#include <chrono>
#include <cstdio>
#include <vector>

#include <gaittorque/evaluation.hpp>
#include <gaittorque/hybrid.hpp>
#include <gaittorque/signal.hpp>
#include <gaittorque/synth.hpp>

using namespace gaittorque;

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
    const auto t0 = std::chrono::steady_clock::now();

    SynthSpec spec;
    spec.master_seed = seed;
    const auto synth = gen_dataset(spec);
    const auto processed = process_dataset(synth.dataset);

    std::vector<ProcessedTrial> able;
    for (const auto& t : processed)
        if (t.cohort == Cohort::able) able.push_back(t);

    // Feature selection on the base data, then the base model itself.
    const std::vector<std::size_t> all_features{0, 1, 2, 3, 4, 5, 6, 7, 8};
    auto [x_all, y_all] = stack_trials(able, all_features);
    const auto probe = fit_block(x_all, y_all, ForestConfig{100, 6, 1, true, {}, seed}, 0,
                                 feature_names_for(all_features));
    const auto importances = feature_importances(probe);
    const auto selected = select_features(importances, 0.98);
    std::printf("selected features:");
    for (auto i : selected) std::printf(" %s(%.3f)", std::string(kFeatureNames[i]).c_str(), importances[i]);
    std::printf("\n");

    const HybridConfig cfg; // zeta 0.99, H0 = (6, 100), Hk = (10, 100)
    const auto base = fit_base(able, selected, cfg, seed);

    std::vector<ProtocolRow> rows;
    for (const auto& subject : synth.dataset.subjects) {
        if (subject.cohort != Cohort::amputee) continue;
        std::vector<TargetedTrial> normal, fast;
        for (const auto& t : processed) {
            if (t.subject_id != subject.id) continue;
            auto& dst = t.speed_class == SpeedClass::normal ? normal : fast;
            dst.push_back({&t, normative_target(able, t.speed_mps)});
        }
        const auto report = run_protocol(base, normal, fast, {cfg.zeta, seed, 1});
        rows.insert(rows.end(), report.rows.begin(), report.rows.end());
    }

    std::printf(" k  median R2 normal  median R2 fast  median RMSE normal\n");
    for (int k = 0; k <= spec.amputee_normal_trials - 1; ++k)
        std::printf("%2d  %16.4f  %14.4f  %18.4f\n", k, median_metric(rows, k, Split::normal),
                    median_metric(rows, k, Split::fast), median_metric(rows, k, Split::normal, true));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("elapsed %.1f s\n", secs);
}
