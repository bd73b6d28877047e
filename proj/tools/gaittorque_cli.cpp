// gaittorque: command-line frontend for the hybrid ankle-torque model.
//
// Exit codes: 0 success, 1 usage, 2 data validation, 3 runtime failure.
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include <gaittorque/evaluation.hpp>
#include <gaittorque/forest.hpp>
#include <gaittorque/gait_data.hpp>
#include <gaittorque/hybrid.hpp>
#include <gaittorque/signal.hpp>
#include <gaittorque/synth.hpp>

namespace fs = std::filesystem;
using namespace gaittorque;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Loaded {
    Dataset dataset;
    std::vector<ProcessedTrial> processed;

    std::vector<ProcessedTrial> able() const {
        std::vector<ProcessedTrial> out;
        for (const auto& t : processed)
            if (t.cohort == Cohort::able) out.push_back(t);
        return out;
    }
};

Loaded load_data(const std::string& data) {
    fs::path p(data);
    if (fs::is_directory(p)) p /= "manifest.json";
    Loaded l;
    l.dataset = load_manifest(p);
    l.processed = process_dataset(l.dataset);
    return l;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    out << text;
}

std::string fmt(double v) { return format_double(v); }

std::vector<std::size_t> parse_feature_list(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto idx = feature_index(name);
        if (!idx) throw UsageError("unknown feature '" + name + "'");
        out.push_back(*idx);
    }
    if (out.empty()) throw UsageError("empty feature list");
    return out;
}

const std::vector<std::size_t> kAllFeatures{0, 1, 2, 3, 4, 5, 6, 7, 8};

struct ImportanceResult {
    Series importances;
    std::vector<std::size_t> selected;
};

ImportanceResult run_importance(const std::vector<ProcessedTrial>& able, const Hyperparams& h, std::uint64_t seed,
                                double threshold, unsigned threads) {
    auto [x, y] = stack_trials(able, kAllFeatures);
    const auto block =
        fit_block(x, y, ForestConfig{h.n_trees, h.d_max, 1, true, {}, seed}, 0, feature_names_for(kAllFeatures), threads);
    ImportanceResult r;
    r.importances = feature_importances(block);
    r.selected = select_features(r.importances, threshold);
    return r;
}

/// Targets for adaptation: the subject's own torque, or the normative
/// trajectory for amputees.
Series target_for(const ProcessedTrial& t, const std::vector<ProcessedTrial>& able, double tolerance) {
    return t.cohort == Cohort::amputee ? normative_target(able, t.speed_mps, tolerance) : t.target;
}

struct SubjectTrials {
    std::vector<TargetedTrial> normal;
    std::vector<TargetedTrial> fast;
};

SubjectTrials subject_trials(const Loaded& l, const std::vector<ProcessedTrial>& able, const std::string& subject,
                             double tolerance) {
    if (!l.dataset.find_subject(subject)) throw UsageError("unknown subject '" + subject + "'");
    SubjectTrials st;
    for (const auto& t : l.processed) {
        if (t.subject_id != subject) continue;
        (t.speed_class == SpeedClass::normal ? st.normal : st.fast).push_back({&t, target_for(t, able, tolerance)});
    }
    return st;
}

// ---------------------------------------------------------------------------

struct Common {
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;
    std::string model;

    std::uint64_t require_seed() const {
        if (!seed) throw UsageError("--seed is required for this command");
        return *seed;
    }
};

int cmd_synth(const Common& c, const SynthSpec& spec_in) {
    SynthSpec spec = spec_in;
    spec.master_seed = c.require_seed();
    const auto synth = gen_dataset(spec);
    write_dataset(synth.dataset, c.out);
    std::cout << "wrote " << synth.dataset.subjects.size() << " subjects, " << synth.dataset.trials.size()
              << " trials to " << (fs::path(c.out) / "manifest.json").string() << "\n";
    return 0;
}

int cmd_importance(const Common& c, const Hyperparams& h, double threshold) {
    const auto l = load_data(c.data);
    const auto r = run_importance(l.able(), h, c.require_seed(), threshold, c.threads);
    ordered_json j;
    j["threshold"] = threshold;
    j["d_max"] = h.d_max;
    j["n_trees"] = h.n_trees;
    j["seed"] = *c.seed;
    j["features"] = ordered_json::array();
    for (std::size_t i = 0; i < r.importances.size(); ++i)
        j["features"].push_back({{"name", kFeatureNames[i]}, {"importance", r.importances[i]}});
    j["selected"] = feature_names_for(r.selected);
    write_text(c.out, j.dump(2) + "\n");
    for (std::size_t i = 0; i < r.importances.size(); ++i)
        std::printf("%-14s %.6f\n", std::string(kFeatureNames[i]).c_str(), r.importances[i]);
    std::cout << "selected:";
    for (auto i : r.selected) std::cout << ' ' << kFeatureNames[i];
    std::cout << "\n";
    return 0;
}

std::vector<std::size_t> resolve_features(const std::string& features, const Loaded& l, const Hyperparams& h,
                                          std::uint64_t seed, double threshold, unsigned threads) {
    if (features == "all") return kAllFeatures;
    if (features == "kinematic") return {0, 1, 2, 3, 4, 5};
    if (features == "auto") return run_importance(l.able(), h, seed, threshold, threads).selected;
    return parse_feature_list(features);
}

int cmd_gridsearch(const Common& c, const std::vector<int>& depths, const std::vector<int>& trees, int folds,
                   const std::string& features, double threshold) {
    const auto l = load_data(c.data);
    const auto able = l.able();
    const std::uint64_t seed = c.require_seed();
    const auto fset = resolve_features(features, l, {6, 100}, seed, threshold, c.threads);
    const auto grid = make_grid(depths, trees);
    const auto res = grid_search_cv(able, fset, grid, folds, seed, {}, c.threads);

    std::ostringstream csv;
    csv << "d_max,n_trees,mean_r2,mean_rmse\n";
    for (const auto& cell : res.cells)
        csv << cell.params.d_max << ',' << cell.params.n_trees << ',' << fmt(cell.mean_r2) << ','
            << fmt(cell.mean_rmse) << '\n';
    write_text(fs::path(c.out) / "grid.csv", csv.str());

    ordered_json j;
    j["folds"] = folds;
    j["seed"] = seed;
    j["features"] = feature_names_for(fset);
    j["best"] = {{"d_max", res.best_cell().params.d_max},
                 {"n_trees", res.best_cell().params.n_trees},
                 {"mean_r2", res.best_cell().mean_r2},
                 {"mean_rmse", res.best_cell().mean_rmse}};
    write_text(fs::path(c.out) / "grid.json", j.dump(2) + "\n");

    for (const auto& cell : res.cells)
        std::printf("d_max=%-4d n_trees=%-5d mean_r2=%.4f mean_rmse=%.4f\n", cell.params.d_max, cell.params.n_trees,
                    cell.mean_r2, cell.mean_rmse);
    std::printf("best: d_max=%d n_trees=%d (mean_r2=%.4f)\n", res.best_cell().params.d_max,
                res.best_cell().params.n_trees, res.best_cell().mean_r2);
    return 0;
}

int cmd_train_base(const Common& c, const HybridConfig& cfg, const std::string& features, double threshold) {
    if (!(cfg.zeta > 0.0 && cfg.zeta <= 1.0)) throw UsageError("--zeta must be in (0, 1]");
    const auto l = load_data(c.data);
    const std::uint64_t seed = c.require_seed();
    const auto fset = resolve_features(features, l, cfg.base, seed, threshold, c.threads);
    const auto model = fit_base(l.able(), fset, cfg, seed, c.threads);
    save_model(model, c.out);
    std::cout << "base model: 1 block, " << model.total_trees() << " trees, d_max " << cfg.base.d_max
              << ", features:";
    for (const auto& n : model.feature_names) std::cout << ' ' << n;
    std::cout << "\nwrote " << c.out << "\n";
    return 0;
}

int cmd_adapt(const Common& c, const std::string& subject, std::optional<double> zeta, double tolerance,
              const std::string& log_path) {
    auto model = load_model(c.model);
    if (zeta) {
        if (!(*zeta > 0.0 && *zeta <= 1.0)) throw UsageError("--zeta must be in (0, 1]");
        model.config.zeta = *zeta;
    }
    const std::uint64_t seed = c.require_seed();
    const auto l = load_data(c.data);
    const auto able = l.able();
    const auto st = subject_trials(l, able, subject, tolerance);
    if (st.normal.empty()) throw Error(ErrorKind::InvalidDataset, "subject '" + subject + "' has no normal-speed trials");

    std::ostringstream log;
    log << "k,trial_id,r2_before,updated,alpha_k,trees_added,train_ms\n";
    int applied = 0;
    const int k0 = static_cast<int>(model.update_log.empty() ? 0 : model.update_log.back().k);
    for (std::size_t i = 0; i < st.normal.size(); ++i) {
        const auto& t = st.normal[i];
        const UpdateContext ctx{k0 + static_cast<int>(i) + 1, t.trial->id, derive_seed(seed, i + 1), c.threads};
        auto [next, rec] = maybe_update(model, model.select(*t.trial), t.target, ctx);
        model = std::move(next);
        applied += rec.updated;
        log << rec.k << ',' << rec.trial_id << ',' << fmt(rec.r2_before) << ',' << (rec.updated ? 1 : 0) << ','
            << fmt(rec.alpha_k) << ',' << rec.trees_added << ',' << fmt(rec.train_seconds * 1e3) << '\n';
        std::printf("k=%d %-16s R2=%.4f %s\n", rec.k, rec.trial_id.c_str(), rec.r2_before,
                    rec.updated ? "updated" : "kept");
    }
    save_model(model, c.out);
    const fs::path log_file = log_path.empty() ? fs::path(c.out).replace_extension(".updates.csv") : fs::path(log_path);
    write_text(log_file, log.str());
    std::cout << applied << " of " << st.normal.size() << " trials triggered an update; model has "
              << model.blocks.size() << " blocks\nwrote " << c.out << " and " << log_file.string() << "\n";
    return 0;
}

int cmd_predict(const Common& c, const std::string& trial_path, double cycle_duration, std::optional<double> l_thigh,
                std::optional<double> l_shank, std::optional<double> l_foot) {
    const auto model = load_model(c.model);
    for (auto f : model.feature_set) {
        if ((f == 6 && !l_thigh) || (f == 7 && !l_shank) || (f == 8 && !l_foot))
            throw UsageError("model uses " + std::string(kFeatureNames[f]) + "; pass the segment length flag");
    }
    auto csv = read_trial_csv(trial_path);
    TrialRecord t;
    t.id = fs::path(trial_path).stem().string();
    t.subject_id = "predict";
    t.speed_mps = 1.0;
    t.cycle_duration_s = cycle_duration;
    t.raw = csv.raw;
    t.time_s = std::move(csv.time_s);
    t.channels = std::move(csv.channels);
    SubjectMeta s{"predict", 1.0, l_thigh.value_or(1.0), l_shank.value_or(1.0), l_foot.value_or(1.0), Cohort::able, {}};
    const auto pt = build_feature_matrix(t, s);
    const auto pred = predict(model, model.select(pt));

    std::ostringstream out;
    out << "sample_index,tau_pred_Nmkg\n";
    for (std::size_t i = 0; i < pred.size(); ++i) out << i << ',' << fmt(pred[i]) << '\n';
    if (c.out.empty()) std::cout << out.str();
    else {
        write_text(c.out, out.str());
        std::cout << "wrote " << pred.size() << " predictions to " << c.out << "\n";
    }
    return 0;
}

ordered_json wilcoxon_json(const std::vector<std::pair<double, double>>& pairs) {
    ordered_json j;
    j["n_pairs"] = pairs.size();
    try {
        const auto w = wilcoxon_signed_rank(pairs);
        j["n_nonzero"] = w.n;
        j["w_plus"] = w.w_plus;
        j["p_two_sided"] = w.p_two_sided;
        j["exact"] = w.exact;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllZeroDifferences) throw;
        j["error"] = "AllZeroDifferences";
    }
    return j;
}

int cmd_eval(const Common& c, std::vector<std::string> subjects, std::optional<double> zeta, double tolerance) {
    const auto model = load_model(c.model);
    const double z = zeta.value_or(model.config.zeta);
    if (!(z > 0.0 && z <= 1.0)) throw UsageError("--zeta must be in (0, 1]");
    const std::uint64_t seed = c.require_seed();
    const auto l = load_data(c.data);
    const auto able = l.able();
    if (subjects.empty())
        for (const auto& s : l.dataset.subjects)
            if (s.cohort == Cohort::amputee) subjects.push_back(s.id);
    if (subjects.empty()) throw UsageError("no subjects to evaluate (pass --subject)");

    std::vector<ProtocolRow> all_rows;
    std::vector<std::vector<ProtocolRow>> per_subject;
    ordered_json summary;
    summary["zeta"] = z;
    summary["seed"] = seed;
    summary["subjects"] = ordered_json::array();
    int max_k = 0;
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const auto st = subject_trials(l, able, subjects[si], tolerance);
        const auto report = run_protocol(model, st.normal, st.fast, {z, derive_seed(seed, si), c.threads});
        std::ostringstream csv;
        write_protocol_csv(csv, report);
        write_text(fs::path(c.out) / ("report_" + subjects[si] + ".csv"), csv.str());

        std::ostringstream upd;
        upd << "rotation,k,trial_id,r2_before,updated,alpha_k\n";
        for (std::size_t r = 0; r < report.updates.size(); ++r)
            for (const auto& u : report.updates[r])
                upd << r << ',' << u.k << ',' << u.trial_id << ',' << fmt(u.r2_before) << ',' << (u.updated ? 1 : 0)
                    << ',' << fmt(u.alpha_k) << '\n';
        write_text(fs::path(c.out) / ("updates_" + subjects[si] + ".csv"), upd.str());

        const int last = static_cast<int>(st.normal.size()) - 1;
        max_k = std::max(max_k, last);
        ordered_json js;
        js["id"] = subjects[si];
        js["normal_cycles"] = st.normal.size();
        js["fast_cycles"] = st.fast.size();
        js["median_r2_normal"] = ordered_json::array();
        for (int k = 0; k <= last; ++k) js["median_r2_normal"].push_back(median_metric(report.rows, k, Split::normal));
        summary["subjects"].push_back(std::move(js));
        all_rows.insert(all_rows.end(), report.rows.begin(), report.rows.end());
        per_subject.push_back(report.rows);
    }

    ordered_json curve = ordered_json::array();
    for (int k = 0; k <= max_k; ++k) {
        ordered_json row;
        row["k"] = k;
        row["median_r2_normal"] = median_metric(all_rows, k, Split::normal);
        row["median_rmse_normal"] = median_metric(all_rows, k, Split::normal, true);
        const double fr2 = median_metric(all_rows, k, Split::fast);
        row["median_r2_fast"] = std::isnan(fr2) ? ordered_json(nullptr) : ordered_json(fr2);
        const double frm = median_metric(all_rows, k, Split::fast, true);
        row["median_rmse_fast"] = std::isnan(frm) ? ordered_json(nullptr) : ordered_json(frm);
        curve.push_back(std::move(row));
    }
    summary["learning_curve"] = std::move(curve);

    // Paired comparisons across (subject, rotation) of held-out normal R^2.
    const auto paired = [&](int ka, int kb) {
        std::vector<std::pair<double, double>> pairs;
        for (const auto& rows : per_subject) {
            std::map<int, double> a, b;
            for (const auto& r : rows) {
                if (r.split != Split::normal) continue;
                if (r.iteration == ka) a[r.rotation] = r.r2;
                if (r.iteration == kb) b[r.rotation] = r.r2;
            }
            for (const auto& [rot, va] : a)
                if (auto it = b.find(rot); it != b.end()) pairs.emplace_back(it->second, va);
        }
        return pairs;
    };
    ordered_json tests = ordered_json::array();
    for (int k = 1; k <= max_k; ++k) {
        ordered_json t = wilcoxon_json(paired(k - 1, k));
        t["comparison"] = "k" + std::to_string(k) + "_vs_k" + std::to_string(k - 1);
        tests.push_back(std::move(t));
    }
    if (max_k >= 1) {
        ordered_json t = wilcoxon_json(paired(0, max_k));
        t["comparison"] = "k" + std::to_string(max_k) + "_vs_k0";
        tests.push_back(std::move(t));
    }
    summary["wilcoxon"] = std::move(tests);
    write_text(fs::path(c.out) / "summary.json", summary.dump(2) + "\n");

    std::printf(" k  median_r2_normal  median_r2_fast  median_rmse_normal\n");
    for (const auto& row : summary["learning_curve"]) {
        const auto& f = row["median_r2_fast"];
        char fast[32] = "-";
        if (!f.is_null()) std::snprintf(fast, sizeof fast, "%.4f", f.get<double>());
        std::printf("%2d  %16.4f  %14s  %18.4f\n", row["k"].get<int>(), row["median_r2_normal"].get<double>(), fast,
                    row["median_rmse_normal"].get<double>());
    }
    std::cout << "wrote " << (fs::path(c.out) / "summary.json").string() << "\n";
    return 0;
}

int cmd_bench(const Common& c, const std::string& subject, const std::vector<double>& zetas, int reps,
              double tolerance) {
    const auto model = load_model(c.model);
    const auto l = load_data(c.data);
    const auto able = l.able();
    std::string sid = subject;
    if (sid.empty())
        for (const auto& s : l.dataset.subjects)
            if (s.cohort == Cohort::amputee) {
                sid = s.id;
                break;
            }
    if (sid.empty()) throw UsageError("no subject to benchmark (pass --subject)");
    const auto st = subject_trials(l, able, sid, tolerance);
    if (reps < 30) std::cerr << "note: fewer than 30 repetitions requested\n";
    const auto rows = timing_bench(model, st.normal, {zetas, reps, c.require_seed()});
    std::ostringstream csv;
    write_timing_csv(csv, rows);
    write_text(c.out, csv.str());
    std::printf("zeta   k blocks trees updated fit_ms  predict_ms\n");
    for (const auto& r : rows)
        std::printf("%.3f %2d %6zu %5zu %7d %7.2f %10.3f\n", r.zeta, r.iteration, r.n_blocks, r.n_trees,
                    r.updated ? 1 : 0, r.fit_ms_median, r.predict_ms_median);
    std::cout << "wrote " << c.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid inter-individual / individual-specific ankle torque prediction"};
    app.set_config("--config", "", "key=value config file; command-line flags take precedence");
    app.require_subcommand(1);

    Common c;
    const auto add_common = [&](CLI::App* sub, bool data, bool model) {
        sub->add_option("--threads", c.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
        sub->add_option("--seed", c.seed, "master seed");
        if (data) sub->add_option("--data", c.data, "dataset directory or manifest.json")->required();
        if (model) sub->add_option("--model", c.model, "model JSON")->required();
    };

    // synth
    SynthSpec synth_spec;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset (manifest + trial CSVs)");
    add_common(synth, false, false);
    synth->get_option("--seed")->required();
    synth->add_option("--able", synth_spec.n_able, "able-bodied subjects")->check(CLI::PositiveNumber);
    synth->add_option("--amputee", synth_spec.n_amputee, "amputee subjects")->check(CLI::NonNegativeNumber);
    synth->add_option("--speeds", synth_spec.speeds, "nominal able-bodied speeds (m/s)")->delimiter(',');
    synth->add_option("--trials-per-speed", synth_spec.trials_per_speed)->check(CLI::PositiveNumber);
    synth->add_option("--amputee-normal", synth_spec.amputee_normal_trials, "normal-speed cycles per amputee");
    synth->add_option("--amputee-fast", synth_spec.amputee_fast_trials, "fast-speed cycles per amputee");
    synth->add_option("--noise", synth_spec.params.noise_sigma, "torque noise sigma (N·m/kg)")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("-o,--out", c.out, "output directory")->required();

    // importance
    Hyperparams imp_h{6, 100};
    double threshold = 0.98;
    auto* importance = app.add_subcommand("importance", "impurity feature importance and cumulative selection");
    add_common(importance, true, false);
    importance->get_option("--seed")->required();
    importance->add_option("--dmax", imp_h.d_max)->check(CLI::PositiveNumber);
    importance->add_option("--ntrees", imp_h.n_trees)->check(CLI::PositiveNumber);
    importance->add_option("--threshold", threshold, "cumulative importance threshold")->check(CLI::Range(0.0, 1.0));
    importance->add_option("-o,--out", c.out, "output JSON")->required();

    // gridsearch
    std::vector<int> depths{4, 6, 10, 20, 50, 100};
    std::vector<int> trees{10, 20, 50, 100, 500, 1000};
    int folds = 5;
    std::string features = "auto";
    auto* grid = app.add_subcommand("gridsearch", "subject-wise k-fold grid search over (d_max, n_trees)");
    add_common(grid, true, false);
    grid->get_option("--seed")->required();
    grid->add_option("--dmax-grid", depths)->delimiter(',');
    grid->add_option("--ntrees-grid", trees)->delimiter(',');
    grid->add_option("--folds", folds)->check(CLI::Range(2, 1000));
    grid->add_option("--features", features, "auto | all | kinematic | comma list of feature names");
    grid->add_option("--feature-threshold", threshold);
    grid->add_option("-o,--out", c.out, "output directory")->required();

    // train-base
    HybridConfig cfg;
    auto* train = app.add_subcommand("train-base", "fit the inter-individual base model on able-bodied trials");
    add_common(train, true, false);
    train->get_option("--seed")->required();
    train->add_option("--dmax", cfg.base.d_max)->check(CLI::PositiveNumber);
    train->add_option("--ntrees", cfg.base.n_trees)->check(CLI::PositiveNumber);
    train->add_option("--dk", cfg.adapt.d_max, "depth of individual-specific trees")->check(CLI::PositiveNumber);
    train->add_option("--nk", cfg.adapt.n_trees, "trees per individual-specific block")->check(CLI::PositiveNumber);
    train->add_option("--zeta", cfg.zeta, "update threshold on trial R^2");
    train->add_option("--min-leaf", cfg.min_leaf)->check(CLI::PositiveNumber);
    train->add_option("--keep-last", cfg.keep_last, "keep only the last K individual blocks (0 = keep all)")
        ->check(CLI::NonNegativeNumber);
    train->add_option("--features", features, "auto | all | kinematic | comma list of feature names");
    train->add_option("--feature-threshold", threshold);
    train->add_option("-o,--out", c.out, "output model JSON")->required();

    // adapt
    std::string subject;
    std::optional<double> zeta;
    double tolerance = 0.1;
    std::string log_path;
    auto* adapt = app.add_subcommand("adapt", "selectively update a model on one subject's normal-speed trials");
    add_common(adapt, true, true);
    adapt->get_option("--seed")->required();
    adapt->add_option("--subject", subject)->required();
    adapt->add_option("--zeta", zeta, "override the model's update threshold");
    adapt->add_option("--speed-tolerance", tolerance, "normative speed window (m/s)");
    adapt->add_option("--log", log_path, "update log CSV (default: <out>.updates.csv)");
    adapt->add_option("-o,--out", c.out, "output model JSON")->required();

    // predict
    std::string trial_path;
    double cycle_duration = 1.0;
    std::optional<double> l_thigh, l_shank, l_foot;
    auto* pred = app.add_subcommand("predict", "predict the ankle torque trajectory of one trial CSV");
    add_common(pred, false, true);
    pred->add_option("--trial", trial_path)->required()->check(CLI::ExistingFile);
    pred->add_option("--cycle-duration", cycle_duration, "gait cycle duration (s)")->check(CLI::PositiveNumber);
    pred->add_option("--l-thigh", l_thigh);
    pred->add_option("--l-shank", l_shank);
    pred->add_option("--l-foot", l_foot);
    pred->add_option("-o,--out", c.out, "output CSV (stdout when omitted)");

    // eval
    std::vector<std::string> eval_subjects;
    auto* eval = app.add_subcommand("eval", "rotation protocol: incremental adaptation learning curves");
    add_common(eval, true, true);
    eval->get_option("--seed")->required();
    eval->add_option("--subject", eval_subjects, "subjects to evaluate (default: all amputees)")->delimiter(',');
    eval->add_option("--zeta", zeta, "override the model's update threshold");
    eval->add_option("--speed-tolerance", tolerance, "normative speed window (m/s)");
    eval->add_option("-o,--out", c.out, "output directory")->required();

    // bench
    std::vector<double> zetas{0.9, 0.95, 0.99, 1.0};
    int reps = 30;
    auto* bench = app.add_subcommand("bench", "fit and prediction latency as the model grows");
    add_common(bench, true, true);
    bench->get_option("--seed")->required();
    bench->add_option("--subject", subject);
    bench->add_option("--zetas", zetas)->delimiter(',');
    bench->add_option("--reps", reps)->check(CLI::PositiveNumber);
    bench->add_option("--speed-tolerance", tolerance, "normative speed window (m/s)");
    bench->add_option("-o,--out", c.out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) return cmd_synth(c, synth_spec);
        if (*importance) return cmd_importance(c, imp_h, threshold);
        if (*grid) return cmd_gridsearch(c, depths, trees, folds, features, threshold);
        if (*train) {
            if (cfg.keep_last > 0) cfg.drop = DropPolicy::keep_last_k_blocks;
            return cmd_train_base(c, cfg, features, threshold);
        }
        if (*adapt) return cmd_adapt(c, subject, zeta, tolerance, log_path);
        if (*pred) return cmd_predict(c, trial_path, cycle_duration, l_thigh, l_shank, l_foot);
        if (*eval) return cmd_eval(c, eval_subjects, zeta, tolerance);
        if (*bench) return cmd_bench(c, subject, zetas, reps, tolerance);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_data_error() ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
