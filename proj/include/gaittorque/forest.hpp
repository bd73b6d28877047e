#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "matrix.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace gaittorque {

/// CART regression tree stored as parallel node arrays; node 0 is the root.
/// A node is a leaf iff feature_index == -1, in which case left == right == -1.
struct RegressionTree {
    std::vector<int> feature_index;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> leaf_value; // mean training target of the node
    std::vector<std::int64_t> n_samples;
    std::vector<double> impurity_decrease; // variance decrease of the split, 0 at leaves

    std::size_t node_count() const noexcept { return feature_index.size(); }

    /// Rows with x[feature] <= threshold go left.
    double predict(std::span<const double> x) const {
        int node = 0;
        while (feature_index[node] >= 0)
            node = x[feature_index[node]] <= threshold[node] ? left[node] : right[node];
        return leaf_value[node];
    }

    /// Depth of the deepest leaf; a single-leaf tree has depth 0.
    int depth() const {
        if (node_count() == 0) return 0;
        std::vector<int> d(node_count(), 0);
        int best = 0;
        for (std::size_t i = 0; i < node_count(); ++i) {
            if (feature_index[i] < 0) continue;
            d[left[i]] = d[right[i]] = d[i] + 1;
            best = std::max(best, d[i] + 1);
        }
        return best;
    }

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct TreeParams {
    int d_max = 6;
    int min_leaf = 1;
    std::optional<int> mtry; // features tried per split; all when unset
};

namespace detail {

inline void check_training_data(const Matrix& x, std::span<const double> y) {
    if (x.rows() == 0 || y.empty()) throw Error(ErrorKind::EmptyData, "no training rows");
    if (x.rows() != y.size())
        throw Error(ErrorKind::LengthMismatch, "feature rows and targets differ in length");
    if (x.cols() == 0) throw Error(ErrorKind::EmptyData, "no feature columns");
    for (double v : x.data())
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite feature value");
    for (double v : y)
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite target value");
}

/// Row indices sorted by each feature (ties by row index). Shared read-only by
/// all trees fitted on the same matrix.
struct SortedColumns {
    std::vector<std::vector<std::uint32_t>> order;

    explicit SortedColumns(const Matrix& x) : order(x.cols()) {
        for (std::size_t f = 0; f < x.cols(); ++f) {
            auto& o = order[f];
            o.resize(x.rows());
            std::iota(o.begin(), o.end(), 0u);
            std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
        }
    }
};

/// Grows one tree over integer-weighted rows (weights are bootstrap counts).
class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, const SortedColumns& sorted,
                std::vector<std::uint32_t> weights, const TreeParams& params, Rng& rng)
        : x_(x), y_(y), weights_(std::move(weights)), params_(params), rng_(rng), order_(x.cols()) {
        for (std::size_t f = 0; f < x.cols(); ++f) {
            auto& o = order_[f];
            o.reserve(x.rows());
            for (auto r : sorted.order[f])
                if (weights_[r] > 0) o.push_back(r);
        }
        buf_.resize(order_[0].size());
        goes_left_.assign(x.rows(), 0);
        features_.resize(x.cols());
    }

    RegressionTree build() {
        if (!order_[0].empty()) grow(0, order_[0].size(), 0);
        return std::move(tree_);
    }

private:
    int new_node() {
        tree_.feature_index.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.leaf_value.push_back(0.0);
        tree_.n_samples.push_back(0);
        tree_.impurity_decrease.push_back(0.0);
        return static_cast<int>(tree_.feature_index.size() - 1);
    }

    int grow(std::size_t b, std::size_t e, int depth) {
        const int node = new_node();
        const auto& seg = order_[0];
        double wsum = 0.0, ysum = 0.0;
        double ymin = y_[seg[b]], ymax = ymin;
        for (std::size_t i = b; i < e; ++i) {
            const auto r = seg[i];
            wsum += weights_[r];
            ysum += weights_[r] * y_[r];
            ymin = std::min(ymin, y_[r]);
            ymax = std::max(ymax, y_[r]);
        }
        const double mean = ysum / wsum;
        tree_.leaf_value[node] = mean;
        tree_.n_samples[node] = static_cast<std::int64_t>(wsum);

        const auto min_leaf = static_cast<double>(params_.min_leaf);
        if (depth >= params_.d_max || wsum < 2.0 * min_leaf || ymin == ymax) return node;

        double sse = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            const auto r = seg[i];
            const double d = y_[r] - mean;
            sse += weights_[r] * d * d;
        }

        // Candidate features in ascending index order; ties keep the first.
        std::size_t nfeat = x_.cols();
        std::iota(features_.begin(), features_.end(), std::size_t{0});
        if (params_.mtry && static_cast<std::size_t>(*params_.mtry) < nfeat) {
            const auto m = static_cast<std::size_t>(*params_.mtry);
            for (std::size_t i = 0; i < m; ++i) {
                const auto j = i + static_cast<std::size_t>(rng_.below(nfeat - i));
                std::swap(features_[i], features_[j]);
            }
            nfeat = m;
            std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(nfeat));
        }

        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        for (std::size_t fi = 0; fi < nfeat; ++fi) {
            const std::size_t f = features_[fi];
            const auto& o = order_[f];
            double wl = 0.0, cl = 0.0; // weight and centered target sum on the left
            for (std::size_t i = b; i + 1 < e; ++i) {
                const auto r = o[i];
                wl += weights_[r];
                cl += weights_[r] * (y_[r] - mean);
                const double wr = wsum - wl;
                if (wl < min_leaf) continue;
                if (wr < min_leaf) break;
                const double v = x_(r, f);
                const double vnext = x_(o[i + 1], f);
                if (v == vnext) continue;
                // SSE reduction of the split: cl^2/wl + cr^2/wr with cr = -cl.
                const double gain = cl * cl * (1.0 / wl + 1.0 / wr);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    double mid = v + 0.5 * (vnext - v);
                    if (!(mid < vnext)) mid = v;
                    best_threshold = mid;
                }
            }
        }
        if (best_feature < 0 || !(best_gain > 1e-12 * sse)) return node;

        const auto bf = static_cast<std::size_t>(best_feature);
        std::size_t nl = 0;
        for (std::size_t i = b; i < e; ++i) {
            const auto r = order_[bf][i];
            const bool l = x_(r, bf) <= best_threshold;
            goes_left_[r] = l;
            nl += l;
        }
        for (auto& o : order_) {
            std::size_t li = b, ri = 0;
            for (std::size_t i = b; i < e; ++i) {
                const auto r = o[i];
                if (goes_left_[r]) o[li++] = r;
                else buf_[ri++] = r;
            }
            std::copy(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(ri),
                      o.begin() + static_cast<std::ptrdiff_t>(li));
        }

        tree_.feature_index[node] = best_feature;
        tree_.threshold[node] = best_threshold;
        tree_.impurity_decrease[node] = best_gain / wsum;
        const int l = grow(b, b + nl, depth + 1);
        tree_.left[node] = l;
        const int r = grow(b + nl, e, depth + 1);
        tree_.right[node] = r;
        return node;
    }

    const Matrix& x_;
    std::span<const double> y_;
    std::vector<std::uint32_t> weights_;
    const TreeParams& params_;
    Rng& rng_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::uint32_t> buf_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::size_t> features_;
    RegressionTree tree_;
};

inline void check_params(const TreeParams& p, std::size_t n_features) {
    if (p.d_max < 1) throw Error(ErrorKind::InvalidArgument, "d_max must be >= 1");
    if (p.min_leaf < 1) throw Error(ErrorKind::InvalidArgument, "min_leaf must be >= 1");
    if (p.mtry && (*p.mtry < 1 || static_cast<std::size_t>(*p.mtry) > n_features))
        throw Error(ErrorKind::InvalidArgument, "mtry must be in [1, number of features]");
}

} // namespace detail

/// Greedy variance-reduction CART on all rows with unit weight. `rng` is only
/// consumed when mtry subsamples features.
inline RegressionTree fit_tree(const Matrix& x, std::span<const double> y, const TreeParams& params, Rng& rng) {
    detail::check_training_data(x, y);
    detail::check_params(params, x.cols());
    const detail::SortedColumns sorted(x);
    return detail::TreeBuilder(x, y, sorted, std::vector<std::uint32_t>(x.rows(), 1u), params, rng).build();
}

struct ForestConfig {
    int n_trees = 100;
    int d_max = 6;
    int min_leaf = 1;
    bool bootstrap = true;
    std::optional<int> mtry;
    std::uint64_t seed = 0;

    TreeParams tree_params() const { return {d_max, min_leaf, mtry}; }

    friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

/// Trees fitted in one training event. `alpha_k` is the mixing weight the
/// block received when it joined a hybrid model (1 for a standalone block).
struct EnsembleBlock {
    std::vector<RegressionTree> trees;
    ForestConfig config;
    int k = 0;
    double alpha_k = 1.0;
    std::vector<std::string> feature_names;

    friend bool operator==(const EnsembleBlock&, const EnsembleBlock&) = default;
};

/// Bagged block of trees. Tree t draws from a stream keyed by (seed, k, t), so
/// the result does not depend on `threads`.
inline EnsembleBlock fit_block(const Matrix& x, std::span<const double> y, const ForestConfig& config, int k,
                               std::vector<std::string> feature_names = {}, unsigned threads = 1) {
    detail::check_training_data(x, y);
    if (config.n_trees < 1) throw Error(ErrorKind::InvalidArgument, "n_trees must be >= 1");
    const TreeParams params = config.tree_params();
    detail::check_params(params, x.cols());
    if (feature_names.empty())
        for (std::size_t f = 0; f < x.cols(); ++f) feature_names.push_back("x" + std::to_string(f));
    if (feature_names.size() != x.cols())
        throw Error(ErrorKind::FeatureCountMismatch, "feature_names does not match column count");

    const detail::SortedColumns sorted(x);
    EnsembleBlock block;
    block.config = config;
    block.k = k;
    block.feature_names = std::move(feature_names);
    block.trees.resize(static_cast<std::size_t>(config.n_trees));
    const std::size_t n = x.rows();
    parallel_for(block.trees.size(), threads, [&](std::size_t t) {
        Rng rng(derive_seed(config.seed, k, t));
        std::vector<std::uint32_t> w(n, config.bootstrap ? 0u : 1u);
        if (config.bootstrap)
            for (std::size_t i = 0; i < n; ++i) ++w[rng.below(n)];
        block.trees[t] = detail::TreeBuilder(x, y, sorted, std::move(w), params, rng).build();
    });
    return block;
}

/// Per-row sum of tree outputs, accumulated in tree order.
inline Series block_tree_sum(const EnsembleBlock& block, const Matrix& x) {
    if (x.cols() != block.feature_names.size())
        throw Error(ErrorKind::FeatureCountMismatch, "expected " + std::to_string(block.feature_names.size()) +
                                                         " features, got " + std::to_string(x.cols()));
    Series sum(x.rows(), 0.0);
    for (const auto& tree : block.trees)
        for (std::size_t r = 0; r < x.rows(); ++r) sum[r] += tree.predict(x.row(r));
    return sum;
}

inline Series predict_block(const EnsembleBlock& block, const Matrix& x) {
    if (block.trees.empty()) throw Error(ErrorKind::UnfittedModel, "block has no trees");
    auto out = block_tree_sum(block, x);
    const auto n = static_cast<double>(block.trees.size());
    for (auto& v : out) v /= n;
    return out;
}

/// Mean decrease in impurity over every tree of the given blocks, normalized
/// to sum to 1. All zeros when no tree has a split.
inline Series feature_importances(std::span<const EnsembleBlock> blocks) {
    std::size_t n_trees = 0;
    std::size_t n_features = 0;
    for (const auto& b : blocks) {
        n_trees += b.trees.size();
        n_features = std::max(n_features, b.feature_names.size());
    }
    if (n_trees == 0) throw Error(ErrorKind::UnfittedModel, "no fitted trees");
    Series imp(n_features, 0.0);
    for (const auto& b : blocks) {
        for (const auto& tree : b.trees) {
            const double root = static_cast<double>(tree.n_samples[0]);
            for (std::size_t i = 0; i < tree.node_count(); ++i)
                if (tree.feature_index[i] >= 0)
                    imp[tree.feature_index[i]] +=
                        tree.impurity_decrease[i] * static_cast<double>(tree.n_samples[i]) / root;
        }
    }
    for (auto& v : imp) v /= static_cast<double>(n_trees);
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0)
        for (auto& v : imp) v /= total;
    return imp;
}

inline Series feature_importances(const EnsembleBlock& block) {
    return feature_importances(std::span<const EnsembleBlock>(&block, 1));
}

/// Indices of the smallest importance-ranked prefix reaching `cumulative_threshold`.
/// Ranked by descending importance, ties by lower index; zero-importance
/// features are never selected.
inline std::vector<std::size_t> select_features(std::span<const double> importances, double cumulative_threshold) {
    if (!(cumulative_threshold > 0.0 && cumulative_threshold <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "cumulative threshold must be in (0, 1]");
    std::vector<std::size_t> idx(importances.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
    std::vector<std::size_t> out;
    double cum = 0.0;
    for (auto i : idx) {
        if (!(importances[i] > 0.0)) break;
        out.push_back(i);
        cum += importances[i];
        if (cum >= cumulative_threshold - 1e-12) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json tree_to_json(const RegressionTree& t) {
    nlohmann::ordered_json j;
    j["feature_index"] = t.feature_index;
    j["threshold"] = t.threshold;
    j["left"] = t.left;
    j["right"] = t.right;
    j["leaf_value"] = t.leaf_value;
    j["n_samples"] = t.n_samples;
    j["impurity_decrease"] = t.impurity_decrease;
    return j;
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
    RegressionTree t;
    try {
        t.feature_index = j.at("feature_index").get<std::vector<int>>();
        t.threshold = j.at("threshold").get<std::vector<double>>();
        t.left = j.at("left").get<std::vector<int>>();
        t.right = j.at("right").get<std::vector<int>>();
        t.leaf_value = j.at("leaf_value").get<std::vector<double>>();
        t.n_samples = j.at("n_samples").get<std::vector<std::int64_t>>();
        t.impurity_decrease = j.at("impurity_decrease").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaViolation, std::string("tree: ") + e.what());
    }
    const std::size_t n = t.feature_index.size();
    if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.leaf_value.size() != n ||
        t.n_samples.size() != n || t.impurity_decrease.size() != n)
        throw Error(ErrorKind::SchemaViolation, "tree: node arrays must be non-empty and of equal length");
    for (std::size_t i = 0; i < n; ++i) {
        const bool leaf = t.feature_index[i] == -1;
        const bool children_ok = leaf ? (t.left[i] == -1 && t.right[i] == -1)
                                      : (t.left[i] > static_cast<int>(i) && t.right[i] > static_cast<int>(i) &&
                                         t.left[i] < static_cast<int>(n) && t.right[i] < static_cast<int>(n));
        if (!children_ok || t.feature_index[i] < -1)
            throw Error(ErrorKind::SchemaViolation, "tree: malformed node " + std::to_string(i));
    }
    return t;
}

} // namespace gaittorque
