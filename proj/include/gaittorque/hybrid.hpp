#pragma once
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "forest.hpp"
#include "gait_data.hpp"
#include "matrix.hpp"
#include "metrics.hpp"

namespace gaittorque {

/// (maximum tree depth, number of trees) of one training event.
struct Hyperparams {
    int d_max = 6;
    int n_trees = 100;

    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

enum class DropPolicy { none, keep_last_k_blocks };

struct HybridConfig {
    double zeta = 0.99;
    Hyperparams base{6, 100};
    Hyperparams adapt{10, 100};
    int min_leaf = 1;
    bool bootstrap = true;
    std::optional<int> mtry;
    DropPolicy drop = DropPolicy::none;
    int keep_last = 0; // individual-specific blocks retained under keep_last_k_blocks

    friend bool operator==(const HybridConfig&, const HybridConfig&) = default;
};

struct UpdateRecord {
    int k = 0;
    std::string trial_id;
    double r2_before = 0.0;
    bool updated = false;
    double alpha_k = 0.0; // 0 when no update happened
    int trees_added = 0;
    double train_seconds = 0.0; // not persisted in the model file

    friend bool operator==(const UpdateRecord&, const UpdateRecord&) = default;
};

/// Inter-individual base block plus individual-specific blocks. Prediction is
/// the uniform mean over the pooled trees, so block i carries weight
/// n_i / sum_j n_j.
struct HybridModel {
    std::vector<EnsembleBlock> blocks; // blocks[0] is the base
    HybridConfig config;
    std::vector<std::size_t> feature_set; // columns of the canonical 9-feature matrix
    std::vector<std::string> feature_names;
    std::vector<UpdateRecord> update_log; // applied updates only

    double zeta() const { return config.zeta; }

    std::size_t total_trees() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.trees.size();
        return n;
    }

    /// Restricts a processed trial's features to this model's columns.
    Matrix select(const ProcessedTrial& t) const { return select_columns(t.features, feature_set); }
};

inline std::vector<std::string> feature_names_for(std::span<const std::size_t> feature_set) {
    std::vector<std::string> names;
    for (auto i : feature_set) {
        if (i >= kFeatureNames.size()) throw Error(ErrorKind::InvalidArgument, "feature index out of range");
        names.emplace_back(kFeatureNames[i]);
    }
    return names;
}

/// Stacks all rows of all trials (restricted to `feature_set`) and their targets.
inline std::pair<Matrix, Series> stack_trials(std::span<const ProcessedTrial> trials,
                                              std::span<const std::size_t> feature_set) {
    Matrix x;
    Series y;
    for (const auto& t : trials) {
        x.append_rows(select_columns(t.features, feature_set));
        y.insert(y.end(), t.target.begin(), t.target.end());
    }
    return {std::move(x), std::move(y)};
}

inline HybridModel fit_base(std::span<const ProcessedTrial> trials, std::vector<std::size_t> feature_set,
                            const HybridConfig& config, std::uint64_t seed, unsigned threads = 1) {
    if (trials.empty()) throw Error(ErrorKind::EmptyDataset, "no trials to fit the base model");
    if (feature_set.empty()) throw Error(ErrorKind::InvalidArgument, "empty feature set");
    if (!(config.zeta > 0.0 && config.zeta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "zeta must be in (0, 1]");
    HybridModel m;
    m.config = config;
    m.feature_names = feature_names_for(feature_set);
    m.feature_set = std::move(feature_set);
    auto [x, y] = stack_trials(trials, m.feature_set);
    const ForestConfig fc{config.base.n_trees, config.base.d_max, config.min_leaf, config.bootstrap, config.mtry, seed};
    m.blocks.push_back(fit_block(x, y, fc, 0, m.feature_names, threads));
    m.blocks.back().alpha_k = 1.0;
    return m;
}

/// Uniform mean over every tree: per-block tree sums are added in block order
/// and divided by the pooled tree count.
inline Series predict(const HybridModel& m, const Matrix& x) {
    if (m.blocks.empty()) throw Error(ErrorKind::UnfittedModel, "hybrid model has no blocks");
    Series sum = block_tree_sum(m.blocks[0], x);
    for (std::size_t b = 1; b < m.blocks.size(); ++b) {
        const auto s = block_tree_sum(m.blocks[b], x);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s[i];
    }
    const auto n = static_cast<double>(m.total_trees());
    for (auto& v : sum) v /= n;
    return sum;
}

/// Literal right fold of the convex combination using stored alpha_k values.
/// Kept as an independent evaluator to cross-check `predict`.
inline Series recursive_predict(const HybridModel& m, const Matrix& x) {
    if (m.blocks.empty()) throw Error(ErrorKind::UnfittedModel, "hybrid model has no blocks");
    Series f = predict_block(m.blocks[0], x);
    for (std::size_t b = 1; b < m.blocks.size(); ++b) {
        const double a = m.blocks[b].alpha_k;
        const auto g = predict_block(m.blocks[b], x);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = a * g[i] + (1.0 - a) * f[i];
    }
    return f;
}

/// Sets alpha_k = n_k / sum_{i<=k} n_i for every block in order.
inline void recompute_alphas(HybridModel& m) {
    std::size_t cum = 0;
    for (auto& b : m.blocks) {
        cum += b.trees.size();
        b.alpha_k = static_cast<double>(b.trees.size()) / static_cast<double>(cum);
    }
}

/// Pointwise median torque trajectory over speed-matched able-bodied trials,
/// using at most one trial (closest in speed) per subject.
inline Series normative_target(std::span<const ProcessedTrial> able_trials, double speed_mps,
                               double tolerance_mps = 0.1) {
    std::map<std::string, const ProcessedTrial*> best; // ordered by subject id
    for (const auto& t : able_trials) {
        if (t.cohort != Cohort::able) continue;
        const double d = std::abs(t.speed_mps - speed_mps);
        if (d > tolerance_mps + 1e-12) continue;
        auto [it, inserted] = best.try_emplace(t.subject_id, &t);
        if (!inserted && d < std::abs(it->second->speed_mps - speed_mps)) it->second = &t;
    }
    if (best.empty()) {
        throw Error(ErrorKind::NoSpeedMatch, "no able-bodied trial within [" + std::to_string(speed_mps - tolerance_mps) +
                                                 ", " + std::to_string(speed_mps + tolerance_mps) + "] m/s");
    }
    const std::size_t n = best.begin()->second->target.size();
    Series out(n);
    std::vector<double> column;
    column.reserve(best.size());
    for (std::size_t i = 0; i < n; ++i) {
        column.clear();
        for (const auto& [id, t] : best) {
            if (t->target.size() != n) throw Error(ErrorKind::LengthMismatch, "target lengths differ");
            column.push_back(t->target[i]);
        }
        std::sort(column.begin(), column.end());
        const std::size_t h = column.size() / 2;
        out[i] = column.size() % 2 == 1 ? column[h] : 0.5 * (column[h - 1] + column[h]);
    }
    return out;
}

struct UpdateContext {
    int k = 1;
    std::string trial_id;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Evaluates the current model on the trial and, when R^2 < zeta, appends a
/// block fitted to (features, target). A skipped update returns the input model.
inline std::pair<HybridModel, UpdateRecord> maybe_update(const HybridModel& model, const Matrix& features,
                                                         std::span<const double> target, const UpdateContext& ctx) {
    if (target.size() != features.rows())
        throw Error(ErrorKind::LengthMismatch, "target length differs from feature rows");
    UpdateRecord rec;
    rec.k = ctx.k;
    rec.trial_id = ctx.trial_id;
    const auto y_hat = predict(model, features);
    rec.r2_before = r_squared(target, y_hat);
    if (!(rec.r2_before < model.config.zeta)) return {model, rec};

    const auto& cfg = model.config;
    const ForestConfig fc{cfg.adapt.n_trees, cfg.adapt.d_max, cfg.min_leaf, cfg.bootstrap, cfg.mtry, ctx.seed};
    const auto t0 = std::chrono::steady_clock::now();
    auto block = fit_block(features, target, fc, ctx.k, model.feature_names, ctx.threads);
    rec.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    HybridModel next = model;
    next.blocks.push_back(std::move(block));
    if (cfg.drop == DropPolicy::keep_last_k_blocks) {
        const auto keep = static_cast<std::size_t>(std::max(cfg.keep_last, 0));
        if (next.blocks.size() > keep + 1)
            next.blocks.erase(next.blocks.begin() + 1,
                              next.blocks.end() - static_cast<std::ptrdiff_t>(keep));
    }
    recompute_alphas(next);
    rec.updated = true;
    rec.trees_added = cfg.adapt.n_trees;
    rec.alpha_k = next.blocks.back().alpha_k;
    next.update_log.push_back(rec);
    return {std::move(next), rec};
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline std::string_view to_string(DropPolicy p) { return p == DropPolicy::none ? "none" : "keep-last-K-blocks"; }

inline nlohmann::ordered_json model_to_json(const HybridModel& m) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["format_version"] = 1;
    j["zeta"] = m.config.zeta;
    j["feature_names"] = m.feature_names;
    ordered_json cfg;
    cfg["base_d_max"] = m.config.base.d_max;
    cfg["base_n_trees"] = m.config.base.n_trees;
    cfg["adapt_d_max"] = m.config.adapt.d_max;
    cfg["adapt_n_trees"] = m.config.adapt.n_trees;
    cfg["min_leaf"] = m.config.min_leaf;
    cfg["bootstrap"] = m.config.bootstrap;
    cfg["mtry"] = m.config.mtry ? ordered_json(*m.config.mtry) : ordered_json(nullptr);
    cfg["drop_policy"] = std::string(to_string(m.config.drop));
    cfg["keep_last"] = m.config.keep_last;
    j["config"] = std::move(cfg);
    j["blocks"] = ordered_json::array();
    for (const auto& b : m.blocks) {
        ordered_json jb;
        jb["k"] = b.k;
        jb["n_trees"] = b.config.n_trees;
        jb["d_max"] = b.config.d_max;
        jb["seed"] = b.config.seed;
        jb["alpha_k"] = b.alpha_k;
        jb["min_leaf"] = b.config.min_leaf;
        jb["bootstrap"] = b.config.bootstrap;
        jb["mtry"] = b.config.mtry ? ordered_json(*b.config.mtry) : ordered_json(nullptr);
        jb["trees"] = ordered_json::array();
        for (const auto& t : b.trees) jb["trees"].push_back(tree_to_json(t));
        j["blocks"].push_back(std::move(jb));
    }
    j["update_log"] = ordered_json::array();
    for (const auto& r : m.update_log) {
        ordered_json jr;
        jr["k"] = r.k;
        jr["trial_id"] = r.trial_id;
        jr["r2_before"] = r.r2_before;
        jr["updated"] = r.updated;
        jr["alpha_k"] = r.alpha_k;
        jr["trees_added"] = r.trees_added;
        j["update_log"].push_back(std::move(jr));
    }
    return j;
}

inline HybridModel model_from_json(const nlohmann::json& j) {
    HybridModel m;
    try {
        if (j.at("format_version").get<int>() != 1)
            throw Error(ErrorKind::SchemaViolation, "model: unsupported format_version");
        m.config.zeta = j.at("zeta").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const auto& name : m.feature_names) {
            const auto idx = feature_index(name);
            if (!idx) throw Error(ErrorKind::SchemaViolation, "model: unknown feature '" + name + "'");
            m.feature_set.push_back(*idx);
        }
        if (j.contains("config")) {
            const auto& c = j["config"];
            m.config.base = {c.at("base_d_max").get<int>(), c.at("base_n_trees").get<int>()};
            m.config.adapt = {c.at("adapt_d_max").get<int>(), c.at("adapt_n_trees").get<int>()};
            m.config.min_leaf = c.at("min_leaf").get<int>();
            m.config.bootstrap = c.at("bootstrap").get<bool>();
            if (!c.at("mtry").is_null()) m.config.mtry = c["mtry"].get<int>();
            m.config.drop = c.at("drop_policy").get<std::string>() == "none" ? DropPolicy::none
                                                                            : DropPolicy::keep_last_k_blocks;
            m.config.keep_last = c.at("keep_last").get<int>();
        }
        for (const auto& jb : j.at("blocks")) {
            EnsembleBlock b;
            b.k = jb.at("k").get<int>();
            b.config.n_trees = jb.at("n_trees").get<int>();
            b.config.d_max = jb.at("d_max").get<int>();
            b.config.seed = jb.at("seed").get<std::uint64_t>();
            b.alpha_k = jb.at("alpha_k").get<double>();
            if (jb.contains("min_leaf")) b.config.min_leaf = jb["min_leaf"].get<int>();
            if (jb.contains("bootstrap")) b.config.bootstrap = jb["bootstrap"].get<bool>();
            if (jb.contains("mtry") && !jb["mtry"].is_null()) b.config.mtry = jb["mtry"].get<int>();
            b.feature_names = m.feature_names;
            for (const auto& jt : jb.at("trees")) {
                auto t = tree_from_json(jt);
                for (int f : t.feature_index)
                    if (f >= static_cast<int>(m.feature_names.size()))
                        throw Error(ErrorKind::SchemaViolation, "model: tree references an unknown feature");
                b.trees.push_back(std::move(t));
            }
            if (static_cast<int>(b.trees.size()) != b.config.n_trees)
                throw Error(ErrorKind::SchemaViolation, "model: n_trees does not match the tree list");
            m.blocks.push_back(std::move(b));
        }
        for (const auto& jr : j.at("update_log")) {
            UpdateRecord r;
            r.k = jr.at("k").get<int>();
            r.trial_id = jr.at("trial_id").get<std::string>();
            r.r2_before = jr.at("r2_before").get<double>();
            r.updated = jr.at("updated").get<bool>();
            r.alpha_k = jr.at("alpha_k").get<double>();
            r.trees_added = jr.at("trees_added").get<int>();
            m.update_log.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaViolation, std::string("model: ") + e.what());
    }
    if (m.blocks.empty()) throw Error(ErrorKind::SchemaViolation, "model: no blocks");
    return m;
}

inline std::string serialize_model(const HybridModel& m) { return model_to_json(m).dump() + "\n"; }

inline void save_model(const HybridModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write model " + path.string());
    out << serialize_model(m);
}

inline HybridModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open model " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaViolation, "model: invalid JSON (" + std::string(e.what()) + ")");
    }
    return model_from_json(j);
}

} // namespace gaittorque
