#pragma once
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "forest.hpp"
#include "gait_data.hpp"
#include "hybrid.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace gaittorque {

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

inline double mean_of(std::span<const double> v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Linear-interpolated quantile (q in [0,1]); NaN for empty input.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::LengthMismatch, "pearson needs >= 2 pairs");
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Cross-validation and grid search
// ---------------------------------------------------------------------------

struct Fold {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

/// Seeded shuffle, then k contiguous validation folds of size floor(n/k) or ceil(n/k).
inline std::vector<Fold> subject_kfold(std::vector<std::string> subject_ids, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorKind::InvalidArgument, "k must be >= 2");
    const std::size_t n = subject_ids.size();
    if (n < static_cast<std::size_t>(k))
        throw Error(ErrorKind::FewerSubjectsThanFolds,
                    std::to_string(n) + " subjects cannot fill " + std::to_string(k) + " folds");
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(subject_ids[i], subject_ids[rng.below(i + 1)]);
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    const std::size_t base = n / static_cast<std::size_t>(k), extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (i >= pos && i < pos + size) folds[f].val_ids.push_back(subject_ids[i]);
            else folds[f].train_ids.push_back(subject_ids[i]);
        }
        pos += size;
    }
    return folds;
}

struct GridCell {
    Hyperparams params;
    double mean_r2 = 0.0;
    double mean_rmse = 0.0;
    std::vector<double> fold_r2;
};

struct GridSearchResult {
    std::vector<GridCell> cells;
    std::size_t best = 0;

    const GridCell& best_cell() const { return cells.at(best); }
};

/// Eq.-3 style grid: every combination of depth and tree count.
inline std::vector<Hyperparams> make_grid(std::span<const int> depths, std::span<const int> n_trees) {
    std::vector<Hyperparams> grid;
    for (int d : depths)
        for (int n : n_trees) grid.push_back({d, n});
    return grid;
}

struct ForestOptions {
    int min_leaf = 1;
    bool bootstrap = true;
    std::optional<int> mtry;
};

/// Subject-wise k-fold CV: each cell is fitted on the training subjects'
/// trials and scored by the mean per-trial R^2 on the validation subjects.
/// The best cell maximizes mean R^2; ties go to fewer trees, then shallower.
inline GridSearchResult grid_search_cv(std::span<const ProcessedTrial> trials,
                                       std::span<const std::size_t> feature_set, std::span<const Hyperparams> grid,
                                       int k, std::uint64_t seed, const ForestOptions& opts = {},
                                       unsigned threads = 1) {
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty grid");
    std::vector<std::string> ids;
    {
        std::set<std::string> seen;
        for (const auto& t : trials)
            if (seen.insert(t.subject_id).second) ids.push_back(t.subject_id);
    }
    const auto folds = subject_kfold(ids, k, seed);
    const auto names = feature_names_for(feature_set);

    GridSearchResult result;
    result.cells.resize(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        auto& cell = result.cells[c];
        cell.params = grid[c];
        std::vector<double> fold_rmse;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const std::set<std::string> train(folds[f].train_ids.begin(), folds[f].train_ids.end());
            std::vector<ProcessedTrial> train_trials;
            std::vector<const ProcessedTrial*> val_trials;
            for (const auto& t : trials) {
                if (train.contains(t.subject_id)) train_trials.push_back(t);
                else val_trials.push_back(&t);
            }
            auto [x, y] = stack_trials(train_trials, feature_set);
            const ForestConfig fc{grid[c].n_trees, grid[c].d_max, opts.min_leaf, opts.bootstrap, opts.mtry,
                                  derive_seed(seed, f)};
            const auto block = fit_block(x, y, fc, 0, names, threads);
            std::vector<double> r2s, rmses;
            for (const auto* t : val_trials) {
                const auto pred = predict_block(block, select_columns(t->features, feature_set));
                r2s.push_back(r_squared(t->target, pred));
                rmses.push_back(rmse(t->target, pred));
            }
            cell.fold_r2.push_back(mean_of(r2s));
            fold_rmse.push_back(mean_of(rmses));
        }
        cell.mean_r2 = mean_of(cell.fold_r2);
        cell.mean_rmse = mean_of(fold_rmse);
    }
    for (std::size_t c = 1; c < result.cells.size(); ++c) {
        const auto& a = result.cells[c];
        const auto& b = result.cells[result.best];
        const bool better = a.mean_r2 > b.mean_r2 ||
                            (a.mean_r2 == b.mean_r2 &&
                             (a.params.n_trees < b.params.n_trees ||
                              (a.params.n_trees == b.params.n_trees && a.params.d_max < b.params.d_max)));
        if (better) result.best = c;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Incremental training / validation protocol
// ---------------------------------------------------------------------------

/// The L cyclic rotations of `items`: each step moves the last element to the front.
template <class T>
std::vector<std::vector<T>> rotations(const std::vector<T>& items) {
    std::vector<std::vector<T>> out;
    std::vector<T> cur = items;
    for (std::size_t r = 0; r < items.size(); ++r) {
        out.push_back(cur);
        std::rotate(cur.rbegin(), cur.rbegin() + 1, cur.rend());
    }
    return out;
}

/// A trial paired with the trajectory the model should reproduce for it
/// (the subject's own torque, or the normative target for amputees).
struct TargetedTrial {
    const ProcessedTrial* trial = nullptr;
    Series target;
};

enum class Split { normal, fast };
inline std::string_view to_string(Split s) { return s == Split::normal ? "normal" : "fast"; }

struct ProtocolRow {
    int iteration = 0;
    int rotation = 0;
    Split split = Split::normal;
    double r2 = 0.0;   // mean over the evaluated trials
    double rmse = 0.0; // mean over the evaluated trials
    bool updated = false;
    double train_ms = 0.0;
    double predict_ms = 0.0;
    std::size_t n_eval = 0;
};

struct ProtocolReport {
    std::string subject_id;
    std::vector<ProtocolRow> rows;                  // rotation-major, then iteration, normal before fast
    std::vector<std::vector<UpdateRecord>> updates; // per rotation, every iteration's decision
};

struct ProtocolOptions {
    double zeta = 0.99;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

namespace detail {

// Per-trial tree sums for each block of a model, aligned with model.blocks so
// pooled predictions can be formed without re-traversing older blocks.
struct PoolCache {
    std::vector<std::vector<Series>> sums; // [block][trial]

    Series prediction(std::size_t trial, std::size_t total_trees) const {
        Series p = sums[0][trial];
        for (std::size_t b = 1; b < sums.size(); ++b)
            for (std::size_t i = 0; i < p.size(); ++i) p[i] += sums[b][trial][i];
        for (auto& v : p) v /= static_cast<double>(total_trees);
        return p;
    }
};

inline std::vector<Series> block_sums(const EnsembleBlock& b, std::span<const Matrix> xs) {
    std::vector<Series> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(block_tree_sum(b, x));
    return out;
}

} // namespace detail

/// Runs the rotation protocol for one subject: for every cyclic rotation of the
/// normal-speed cycles the model is reset to `base`, then for k = 1..L-1 cycle
/// k is evaluated and possibly trained on; after each iteration the remaining
/// L-k normal cycles and all fast cycles are scored. Fast cycles never train.
inline ProtocolReport run_protocol(const HybridModel& base, std::span<const TargetedTrial> normal,
                                   std::span<const TargetedTrial> fast, const ProtocolOptions& opts) {
    const std::size_t L = normal.size();
    if (L < 2) throw Error(ErrorKind::InvalidArgument, "the protocol needs at least 2 normal-speed cycles");
    if (!(opts.zeta > 0.0 && opts.zeta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "zeta must be in (0, 1]");

    HybridModel start = base;
    start.config.zeta = opts.zeta;

    // Evaluation trials: normal cycles [0, L), fast cycles [L, L+M).
    std::vector<Matrix> xs;
    std::vector<const Series*> ys;
    for (const auto& t : normal) {
        xs.push_back(start.select(*t.trial));
        ys.push_back(&t.target);
    }
    for (const auto& t : fast) {
        xs.push_back(start.select(*t.trial));
        ys.push_back(&t.target);
    }
    std::vector<std::vector<Series>> base_sums(start.blocks.size());
    parallel_for(start.blocks.size(), opts.threads,
                 [&](std::size_t b) { base_sums[b] = detail::block_sums(start.blocks[b], xs); });

    std::vector<std::size_t> idx(L);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto orders = rotations(idx);

    ProtocolReport report;
    report.subject_id = normal.front().trial->subject_id;
    std::vector<std::vector<ProtocolRow>> rows(L);
    report.updates.resize(L);

    parallel_for(L, opts.threads, [&](std::size_t r) {
        const auto& order = orders[r];
        HybridModel model = start;
        detail::PoolCache cache{base_sums};

        const auto score = [&](int k, bool updated, double train_ms, double predict_ms) {
            const auto eval = [&](Split split, std::span<const std::size_t> which) {
                if (which.empty()) return;
                std::vector<double> r2s, rmses;
                for (auto i : which) {
                    const auto p = cache.prediction(i, model.total_trees());
                    r2s.push_back(r_squared(*ys[i], p));
                    rmses.push_back(rmse(*ys[i], p));
                }
                rows[r].push_back({k, static_cast<int>(r), split, mean_of(r2s), mean_of(rmses), updated, train_ms,
                                   predict_ms, which.size()});
            };
            const std::vector<std::size_t> held(order.begin() + k, order.end());
            std::vector<std::size_t> fast_idx(fast.size());
            std::iota(fast_idx.begin(), fast_idx.end(), L);
            eval(Split::normal, held);
            eval(Split::fast, fast_idx);
        };

        const auto timed_predict_ms = [&](std::size_t i) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto p = predict(model, xs[i]);
            const auto t1 = std::chrono::steady_clock::now();
            (void)p;
            return std::chrono::duration<double, std::milli>(t1 - t0).count();
        };

        score(0, false, 0.0, timed_predict_ms(order[0]));
        for (std::size_t k = 1; k < L; ++k) {
            const std::size_t i = order[k - 1];
            const double predict_ms = timed_predict_ms(i);
            const UpdateContext ctx{static_cast<int>(k), normal[i].trial->id, derive_seed(opts.seed, r, k), 1};
            auto [next, rec] = maybe_update(model, xs[i], *ys[i], ctx);
            if (rec.updated) {
                // Mirror `next`: the new block is appended, then any dropped
                // blocks form a contiguous run right after the base.
                cache.sums.push_back(detail::block_sums(next.blocks.back(), xs));
                const std::size_t dropped = cache.sums.size() - next.blocks.size();
                cache.sums.erase(cache.sums.begin() + 1, cache.sums.begin() + 1 + static_cast<std::ptrdiff_t>(dropped));
                model = std::move(next);
            }
            report.updates[r].push_back(rec);
            score(static_cast<int>(k), rec.updated, rec.train_seconds * 1e3, predict_ms);
        }
    });
    for (auto& rr : rows) report.rows.insert(report.rows.end(), rr.begin(), rr.end());
    return report;
}

inline constexpr std::string_view kProtocolCsvHeader = "iteration,rotation,split,r2,rmse,updated,train_ms,predict_ms";

inline void write_protocol_csv(std::ostream& out, const ProtocolReport& report) {
    out << kProtocolCsvHeader << '\n';
    for (const auto& r : report.rows) {
        out << r.iteration << ',' << r.rotation << ',' << to_string(r.split) << ',' << format_double(r.r2) << ','
            << format_double(r.rmse) << ',' << (r.updated ? 1 : 0) << ',' << format_double(r.train_ms) << ','
            << format_double(r.predict_ms) << '\n';
    }
}

/// Median over rows of (iteration, split), e.g. across rotations and subjects.
inline double median_metric(std::span<const ProtocolRow> rows, int iteration, Split split, bool use_rmse = false) {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.iteration == iteration && r.split == split) v.push_back(use_rmse ? r.rmse : r.r2);
    return median_of(std::move(v));
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

struct WilcoxonResult {
    std::size_t n = 0; // non-zero differences
    double w_plus = 0.0;
    double w_minus = 0.0;
    double p_greater = 1.0; // P(W+ >= observed): differences a-b tend to be positive
    double p_less = 1.0;    // P(W+ <= observed)
    double p_two_sided = 1.0;
    bool exact = true;
};

/// Average ranks (1-based) of |d|, with ties sharing the mean rank.
inline std::vector<double> signed_rank_ranks(std::span<const double> abs_diffs) {
    const std::size_t n = abs_diffs.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && abs_diffs[idx[j + 1]] == abs_diffs[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Tests the paired differences a_i - b_i. Zero differences are dropped. The
/// null distribution is exact for n <= 25 (all 2^n sign patterns, counted by
/// dynamic programming over doubled ranks) and a tie-corrected normal
/// approximation above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
    std::vector<double> d;
    for (const auto& [a, b] : pairs)
        if (a - b != 0.0) d.push_back(a - b);
    if (d.empty()) throw Error(ErrorKind::AllZeroDifferences, "every paired difference is zero");
    const std::size_t n = d.size();
    std::vector<double> absd(n);
    for (std::size_t i = 0; i < n; ++i) absd[i] = std::abs(d[i]);
    const auto ranks = signed_rank_ranks(absd);

    WilcoxonResult res;
    res.n = n;
    for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? res.w_plus : res.w_minus) += ranks[i];
    const double total = static_cast<double>(n * (n + 1)) / 2.0;

    if (n <= 25) {
        std::vector<int> r2(n);
        int max_sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
            max_sum += r2[i];
        }
        std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
        counts[0] = 1.0;
        int reach = 0;
        for (int r : r2) {
            for (int s = reach; s >= 0; --s)
                if (counts[s] != 0.0) counts[s + r] += counts[s];
            reach += r;
        }
        const int obs = static_cast<int>(std::lround(2.0 * res.w_plus));
        const double all = std::ldexp(1.0, static_cast<int>(n));
        double ge = 0.0, le = 0.0;
        for (int s = 0; s <= max_sum; ++s) {
            if (s >= obs) ge += counts[s];
            if (s <= obs) le += counts[s];
        }
        res.p_greater = ge / all;
        res.p_less = le / all;
        res.p_two_sided = std::min(1.0, 2.0 * std::min(res.p_greater, res.p_less));
        res.exact = true;
        return res;
    }

    double tie_term = 0.0;
    {
        std::vector<double> sorted = absd;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double nn = static_cast<double>(n);
    const double mean = total / 2.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (res.w_plus - mean) / std::sqrt(var);
    res.p_greater = 0.5 * std::erfc(z / std::sqrt(2.0));
    res.p_less = 0.5 * std::erfc(-z / std::sqrt(2.0));
    res.p_two_sided = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    res.exact = false;
    return res;
}

// ---------------------------------------------------------------------------
// Timing study
// ---------------------------------------------------------------------------

struct TimingRow {
    double zeta = 0.0;
    int iteration = 0;
    std::size_t n_blocks = 0;
    std::size_t n_trees = 0;
    bool updated = false;
    double r2_before = 0.0; // NaN at iteration 0
    double fit_ms_median = 0.0;
    double fit_ms_iqr = 0.0;
    double predict_ms_median = 0.0;
    double predict_ms_iqr = 0.0;
};

struct TimingOptions {
    std::vector<double> zetas{0.9, 0.95, 0.99, 1.0};
    int repetitions = 30;
    std::uint64_t seed = 0;
};

/// Replays the update sequence over the normal cycles for each zeta. Each
/// update's block fit and each iteration's 200-sample prediction are timed
/// `repetitions` times on a monotonic clock; medians and IQRs are reported.
inline std::vector<TimingRow> timing_bench(const HybridModel& base, std::span<const TargetedTrial> normal,
                                           const TimingOptions& opts) {
    if (normal.empty()) throw Error(ErrorKind::InvalidArgument, "timing needs at least one trial");
    const int reps = std::max(1, opts.repetitions);
    using clock = std::chrono::steady_clock;
    std::vector<TimingRow> rows;
    for (double zeta : opts.zetas) {
        HybridModel model = base;
        model.config.zeta = zeta;
        for (std::size_t k = 0; k <= normal.size() - 1; ++k) {
            TimingRow row;
            row.zeta = zeta;
            row.iteration = static_cast<int>(k);
            row.r2_before = std::nan("");
            if (k >= 1) {
                const auto& t = normal[k - 1];
                const auto x = model.select(*t.trial);
                const UpdateContext ctx{static_cast<int>(k), t.trial->id, derive_seed(opts.seed, k), 1};
                auto [next, rec] = maybe_update(model, x, t.target, ctx);
                row.updated = rec.updated;
                row.r2_before = rec.r2_before;
                if (rec.updated) {
                    const auto& cfg = model.config;
                    const ForestConfig fc{cfg.adapt.n_trees, cfg.adapt.d_max, cfg.min_leaf, cfg.bootstrap, cfg.mtry,
                                          ctx.seed};
                    std::vector<double> fit_ms;
                    for (int rep = 0; rep < reps; ++rep) {
                        const auto t0 = clock::now();
                        const auto b = fit_block(x, t.target, fc, ctx.k, model.feature_names, 1);
                        fit_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
                        (void)b;
                    }
                    row.fit_ms_median = median_of(fit_ms);
                    row.fit_ms_iqr = quantile(fit_ms, 0.75) - quantile(fit_ms, 0.25);
                }
                model = std::move(next);
            }
            const auto x = model.select(*normal[k % normal.size()].trial);
            std::vector<double> pred_ms;
            for (int rep = 0; rep < reps; ++rep) {
                const auto t0 = clock::now();
                const auto p = predict(model, x);
                pred_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
                (void)p;
            }
            row.predict_ms_median = median_of(pred_ms);
            row.predict_ms_iqr = quantile(pred_ms, 0.75) - quantile(pred_ms, 0.25);
            row.n_blocks = model.blocks.size();
            row.n_trees = model.total_trees();
            rows.push_back(row);
        }
    }
    return rows;
}

inline constexpr std::string_view kTimingCsvHeader =
    "zeta,iteration,n_blocks,n_trees,updated,r2_before,fit_ms_median,fit_ms_iqr,predict_ms_median,predict_ms_iqr";

inline void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows) {
    out << kTimingCsvHeader << '\n';
    for (const auto& r : rows) {
        out << format_double(r.zeta) << ',' << r.iteration << ',' << r.n_blocks << ',' << r.n_trees << ','
            << (r.updated ? 1 : 0) << ',' << (std::isnan(r.r2_before) ? std::string() : format_double(r.r2_before))
            << ',' << format_double(r.fit_ms_median) << ',' << format_double(r.fit_ms_iqr) << ','
            << format_double(r.predict_ms_median) << ',' << format_double(r.predict_ms_iqr) << '\n';
    }
}

} // namespace gaittorque
