#include <gtest/gtest.h>

#include <random>

#include <gaittorque/forest.hpp>

#include "oracles.hpp"

using namespace gaittorque;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

double training_sse(const RegressionTree& t, const Matrix& x, const Series& y) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double e = t.predict(x.row(r)) - y[r];
        s += e * e;
    }
    return s;
}

struct RandomData {
    Matrix x;
    Series y;
};

RandomData make_data(std::mt19937_64& gen, std::size_t n, std::size_t f, bool discrete) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> d(0, 4);
    RandomData r{Matrix(n, f), Series(n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) r.x(i, j) = discrete ? d(gen) : u(gen);
        r.y[i] = std::sin(3.0 * r.x(i, 0)) + 0.3 * u(gen);
    }
    return r;
}

void expect_structure(const RegressionTree& t, int d_max) {
    ASSERT_GT(t.node_count(), 0u);
    for (std::size_t i = 0; i < t.node_count(); ++i) {
        if (t.feature_index[i] == -1) {
            EXPECT_EQ(t.left[i], -1);
            EXPECT_EQ(t.right[i], -1);
            EXPECT_EQ(t.impurity_decrease[i], 0.0);
        } else {
            EXPECT_GT(t.left[i], static_cast<int>(i));
            EXPECT_GT(t.right[i], t.left[i]);
            EXPECT_GE(t.impurity_decrease[i], 0.0);
            EXPECT_EQ(t.n_samples[i], t.n_samples[t.left[i]] + t.n_samples[t.right[i]]);
        }
    }
    EXPECT_LE(t.depth(), d_max);
}

} // namespace

TEST(Tree, SplitsStepAtMidpoint) {
    const auto x = from_rows({{0}, {1}, {2}, {3}});
    const Series y{0, 0, 1, 1};
    Rng rng(1);
    const auto t = fit_tree(x, y, {1, 1, {}}, rng);
    ASSERT_EQ(t.node_count(), 3u);
    EXPECT_EQ(t.feature_index[0], 0);
    EXPECT_EQ(t.threshold[0], 1.5);
    EXPECT_EQ(t.leaf_value[t.left[0]], 0.0);
    EXPECT_EQ(t.leaf_value[t.right[0]], 1.0);
}

TEST(Tree, ConstantTargetIsSingleLeaf) {
    std::mt19937_64 gen(3);
    auto d = make_data(gen, 50, 3, false);
    d.y.assign(50, 2.5);
    Rng rng(1);
    const auto t = fit_tree(d.x, d.y, {20, 1, {}}, rng);
    EXPECT_EQ(t.node_count(), 1u);
    EXPECT_EQ(t.leaf_value[0], 2.5);
}

TEST(Tree, DepthOneHasAtMostThreeNodes) {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 30; ++i) {
        const auto d = make_data(gen, 40, 3, i % 2 == 0);
        Rng rng(1);
        EXPECT_LE(fit_tree(d.x, d.y, {1, 1, {}}, rng).node_count(), 3u);
    }
}

TEST(Tree, DeepTreeMemorizesDistinctRows) {
    std::mt19937_64 gen(7);
    const auto d = make_data(gen, 120, 2, false);
    Rng rng(1);
    const auto t = fit_tree(d.x, d.y, {64, 1, {}}, rng);
    for (std::size_t r = 0; r < d.x.rows(); ++r) EXPECT_DOUBLE_EQ(t.predict(d.x.row(r)), d.y[r]);
}

TEST(Tree, LeafValueIsNodeMean) {
    const auto x = from_rows({{0}, {0}, {1}, {1}, {1}});
    const Series y{1, 3, 10, 11, 12};
    Rng rng(1);
    const auto t = fit_tree(x, y, {1, 1, {}}, rng);
    EXPECT_DOUBLE_EQ(t.predict(std::vector<double>{0.0}), 2.0);
    EXPECT_DOUBLE_EQ(t.predict(std::vector<double>{1.0}), 11.0);
    EXPECT_DOUBLE_EQ(t.leaf_value[0], 37.0 / 5.0);
}

TEST(Tree, TiesPreferLowestFeature) {
    // both columns separate y identically
    const auto x = from_rows({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    const Series y{0, 0, 1, 1};
    Rng rng(1);
    EXPECT_EQ(fit_tree(x, y, {1, 1, {}}, rng).feature_index[0], 0);
}

TEST(Tree, MinLeafRespected) {
    std::mt19937_64 gen(13);
    const auto d = make_data(gen, 100, 3, false);
    Rng rng(1);
    const auto t = fit_tree(d.x, d.y, {30, 7, {}}, rng);
    for (std::size_t i = 0; i < t.node_count(); ++i) EXPECT_GE(t.n_samples[i], 7);
}

TEST(Tree, InvalidInputs) {
    Rng rng(1);
    const auto x = from_rows({{0}, {1}});
    EXPECT_THROW(fit_tree(x, Series{1.0}, {1, 1, {}}, rng), Error);
    EXPECT_THROW(fit_tree(x, Series{1.0, 2.0}, {0, 1, {}}, rng), Error);
    EXPECT_THROW(fit_tree(x, Series{1.0, 2.0}, {1, 1, 2}, rng), Error);
    EXPECT_THROW(fit_tree(x, Series{1.0, std::nan("")}, {1, 1, {}}, rng), Error);
}

TEST(TreeProperty, DepthBoundAndStructure) {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<int> depth(1, 12), rows(2, 150), cols(1, 4), leaf(1, 5);
    for (int i = 0; i < 150; ++i) {
        const auto d = make_data(gen, static_cast<std::size_t>(rows(gen)), static_cast<std::size_t>(cols(gen)), i % 3 == 0);
        const int dm = depth(gen);
        Rng rng(static_cast<std::uint64_t>(i));
        expect_structure(fit_tree(d.x, d.y, {dm, leaf(gen), {}}, rng), dm);
    }
}

TEST(TreeProperty, TrainingSseNonIncreasingInDepth) {
    std::mt19937_64 gen(19);
    std::uniform_int_distribution<int> rows(2, 120), cols(1, 3);
    for (int i = 0; i < 100; ++i) {
        const auto d = make_data(gen, static_cast<std::size_t>(rows(gen)), static_cast<std::size_t>(cols(gen)), i % 2 == 0);
        double prev = std::numeric_limits<double>::infinity();
        for (int dm = 1; dm <= 10; ++dm) {
            Rng rng(1);
            const double sse = training_sse(fit_tree(d.x, d.y, {dm, 1, {}}, rng), d.x, d.y);
            EXPECT_LE(sse, prev + 1e-9);
            prev = sse;
        }
    }
}

TEST(TreeProperty, StumpMatchesExhaustiveSearch) {
    std::mt19937_64 gen(23);
    std::uniform_int_distribution<int> rows(1, 30), cols(1, 4);
    for (int i = 0; i < 300; ++i) {
        const auto d = make_data(gen, static_cast<std::size_t>(rows(gen)), static_cast<std::size_t>(cols(gen)), i % 2 == 0);
        std::vector<std::vector<double>> xr;
        for (std::size_t r = 0; r < d.x.rows(); ++r) xr.emplace_back(d.x.row(r).begin(), d.x.row(r).end());
        Rng rng(1);
        const double got = training_sse(fit_tree(d.x, d.y, {1, 1, {}}, rng), d.x, d.y);
        EXPECT_NEAR(got, oracle::best_stump_sse(xr, d.y), 1e-9);
    }
}

TEST(TreeProperty, RowOrderDoesNotChangeFit) {
    std::mt19937_64 gen(29);
    for (int i = 0; i < 50; ++i) {
        const auto d = make_data(gen, 40, 2, false);
        std::vector<std::size_t> perm(40);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), gen);
        Matrix xp(40, 2);
        Series yp(40);
        for (std::size_t r = 0; r < 40; ++r) {
            xp(r, 0) = d.x(perm[r], 0);
            xp(r, 1) = d.x(perm[r], 1);
            yp[r] = d.y[perm[r]];
        }
        Rng a(1), b(1);
        const auto ta = fit_tree(d.x, d.y, {4, 1, {}}, a);
        const auto tb = fit_tree(xp, yp, {4, 1, {}}, b);
        EXPECT_NEAR(training_sse(ta, d.x, d.y), training_sse(tb, xp, yp), 1e-9);
        EXPECT_EQ(ta.feature_index, tb.feature_index);
        EXPECT_EQ(ta.threshold, tb.threshold);
    }
}

TEST(Block, NoBootstrapGivesIdenticalTrees) {
    std::mt19937_64 gen(31);
    const auto d = make_data(gen, 80, 3, false);
    const auto b = fit_block(d.x, d.y, {3, 5, 1, false, {}, 42}, 0);
    ASSERT_EQ(b.trees.size(), 3u);
    EXPECT_EQ(b.trees[0], b.trees[1]);
    EXPECT_EQ(b.trees[1], b.trees[2]);
    Rng rng(0);
    const auto single = fit_tree(d.x, d.y, {5, 1, {}}, rng);
    const auto p = predict_block(b, d.x);
    for (std::size_t r = 0; r < d.x.rows(); ++r) EXPECT_DOUBLE_EQ(p[r], single.predict(d.x.row(r)));
}

TEST(Block, ConstantTargetPredictsConstant) {
    std::mt19937_64 gen(37);
    auto d = make_data(gen, 60, 2, false);
    d.y.assign(60, -1.25);
    const auto b = fit_block(d.x, d.y, {10, 6, 1, true, {}, 1}, 0);
    for (double v : predict_block(b, d.x)) EXPECT_EQ(v, -1.25);
}

TEST(Block, MeanOfTreePredictions) {
    EnsembleBlock b;
    b.feature_names = {"x0"};
    for (double v : {1.0, 3.0}) {
        RegressionTree t;
        t.feature_index = {-1};
        t.threshold = {0.0};
        t.left = t.right = {-1};
        t.leaf_value = {v};
        t.n_samples = {1};
        t.impurity_decrease = {0.0};
        b.trees.push_back(t);
    }
    EXPECT_EQ(predict_block(b, Matrix(1, 1))[0], 2.0);
}

TEST(Block, PredictionIsExactMeanOfTrees) {
    std::mt19937_64 gen(41);
    const auto d = make_data(gen, 100, 3, false);
    const auto b = fit_block(d.x, d.y, {17, 4, 1, true, {}, 9}, 2);
    const auto p = predict_block(b, d.x);
    for (std::size_t r = 0; r < d.x.rows(); ++r) {
        double s = 0.0;
        for (const auto& t : b.trees) s += t.predict(d.x.row(r));
        EXPECT_EQ(p[r], s / 17.0);
    }
}

TEST(Block, DeterministicAndThreadInvariant) {
    std::mt19937_64 gen(43);
    const auto d = make_data(gen, 150, 4, false);
    const ForestConfig cfg{24, 6, 1, true, 2, 1234};
    const auto a = fit_block(d.x, d.y, cfg, 3, {}, 1);
    const auto b = fit_block(d.x, d.y, cfg, 3, {}, 1);
    const auto c = fit_block(d.x, d.y, cfg, 3, {}, 4);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    for (std::size_t t = 0; t < a.trees.size(); ++t)
        EXPECT_EQ(tree_to_json(a.trees[t]).dump(), tree_to_json(c.trees[t]).dump());
    EXPECT_NE(a, fit_block(d.x, d.y, cfg, 4, {}, 1)); // k is part of the stream key
}

TEST(Block, FeatureCountChecked) {
    std::mt19937_64 gen(47);
    const auto d = make_data(gen, 30, 2, false);
    const auto b = fit_block(d.x, d.y, {2, 3, 1, true, {}, 1}, 0);
    EXPECT_THROW(predict_block(b, Matrix(3, 5)), Error);
    EXPECT_THROW(fit_block(d.x, d.y, {2, 3, 1, true, {}, 1}, 0, {"only_one"}), Error);
}

TEST(Importance, SingleInformativeFeatureDominates) {
    std::mt19937_64 gen(53);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix x(500, 4);
    Series y(500);
    for (std::size_t r = 0; r < 500; ++r) {
        for (std::size_t c = 0; c < 4; ++c) x(r, c) = u(gen);
        y[r] = x(r, 0);
    }
    const auto imp = feature_importances(fit_block(x, y, {50, 12, 1, true, {}, 5}, 0));
    EXPECT_GT(imp[0], 0.9);
    double sum = 0.0;
    for (double v : imp) {
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Importance, ConstantColumnGetsZero) {
    std::mt19937_64 gen(59);
    auto d = make_data(gen, 200, 3, false);
    for (std::size_t r = 0; r < 200; ++r) d.x(r, 2) = 0.44;
    const auto imp = feature_importances(fit_block(d.x, d.y, {20, 8, 1, true, {}, 5}, 0));
    EXPECT_EQ(imp[2], 0.0);
}

TEST(SelectFeatures, Examples) {
    EXPECT_EQ(select_features(Series{0.5, 0.3, 0.15, 0.05}, 0.98), (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(select_features(Series{0.6, 0.4, 0.0, 0.0}, 0.98), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(select_features(Series{0.1, 0.0, 0.6, 0.3}, 1.0), (std::vector<std::size_t>{2, 3, 0}));
    EXPECT_EQ(select_features(Series{0.2, 0.7, 0.1}, 0.5), (std::vector<std::size_t>{1}));
    EXPECT_THROW(select_features(Series{1.0}, 0.0), Error);
}

TEST(SelectFeatures, PrefixProperty) {
    std::mt19937_64 gen(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Series imp(9);
        double s = 0.0;
        for (auto& v : imp) s += v = u(gen) < 0.2 ? 0.0 : u(gen);
        if (s == 0.0) continue;
        for (auto& v : imp) v /= s;
        const double thr = 0.05 + 0.95 * u(gen);
        const auto sel = select_features(imp, thr);
        double cum = 0.0;
        for (std::size_t j = 0; j < sel.size(); ++j) {
            if (j > 0) EXPECT_GE(imp[sel[j - 1]], imp[sel[j]]);
            EXPECT_GT(imp[sel[j]], 0.0);
            if (j + 1 < sel.size()) EXPECT_LT(cum + imp[sel[j]], thr);
            cum += imp[sel[j]];
        }
        EXPECT_GE(cum, thr - 1e-9);
    }
}

TEST(TreeJson, RoundTripAndValidation) {
    std::mt19937_64 gen(67);
    const auto d = make_data(gen, 60, 2, false);
    Rng rng(1);
    const auto t = fit_tree(d.x, d.y, {5, 1, {}}, rng);
    auto j = nlohmann::json::parse(tree_to_json(t).dump());
    EXPECT_EQ(tree_from_json(j), t);
    j["left"][0] = 999;
    EXPECT_THROW(tree_from_json(j), Error);
}
