#pragma once

// Histogram-based gradient boosting for binary classification with leaf-wise
// (best-first) tree growth.
//
// Pipeline per tree: quantile-bin features once up front, compute per-sample
// gradient/hessian of the logistic loss at the current scores, optionally
// subsample rows and features, then repeatedly split the leaf with the
// largest second-order gain
//
//     gain = G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)
//
// until num_leaves is reached or no split has positive gain. Split search
// scans per-bin (sum g, sum h, count) histograms; a sibling histogram is
// derived by subtracting the smaller child's histogram from the parent's.
// Leaf values are -sum_g/(sum_h+lambda), scaled by learning_rate when the
// tree is installed into the model.
//
// Everything is deterministic given the config seed, independent of worker
// count: histograms are built feature-parallel with a fixed per-feature
// accumulation order (rows ascending), and all row/feature subsets come from
// the seeded Rng in a fixed call order.
//
// Bin thresholds sit at actual data values (the largest value of each bin),
// and routing is `x <= threshold`, so any strictly increasing per-feature
// transform applied consistently to train and test data leaves predictions
// bit-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clsboost/common.hpp"
#include "clsboost/embedding.hpp"

namespace clsboost {

struct GBDTConfig {
    size_t n_trees = 200;
    size_t num_leaves = 31;
    size_t min_data_in_leaf = 20;
    size_t max_bins = 255;
    double learning_rate = 0.1;
    double lambda_l2 = 1.0;
    double feature_fraction = 1.0;
    double bagging_fraction = 1.0;
    double scale_pos_weight = 1.0;
    uint64_t seed = 42;
    size_t early_stopping_rounds = 0;  // 0 disables early stopping

    void validate() const {
        if (num_leaves < 2) throw config_error("bad_config", "num_leaves must be >= 2");
        if (min_data_in_leaf < 1) throw config_error("bad_config", "min_data_in_leaf must be >= 1");
        if (max_bins < 2 || max_bins > 65535)
            throw config_error("bad_config", "max_bins must be in [2, 65535]");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw config_error("bad_config", "learning_rate must be finite and >= 0");
        if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2))
            throw config_error("bad_config", "lambda_l2 must be finite and >= 0");
        if (!(feature_fraction > 0.0 && feature_fraction <= 1.0))
            throw config_error("bad_config", "feature_fraction must be in (0,1]");
        if (!(bagging_fraction > 0.0 && bagging_fraction <= 1.0))
            throw config_error("bad_config", "bagging_fraction must be in (0,1]");
        if (!(scale_pos_weight > 0.0) || !std::isfinite(scale_pos_weight))
            throw config_error("bad_config", "scale_pos_weight must be finite and > 0");
    }

    bool operator==(const GBDTConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

// Per-feature strictly increasing upper-edge thresholds. A value v maps to
// the first bin whose threshold is >= v; values above every threshold map to
// the last bin. With t = thresholds[f], bin_of(f,v) <= b exactly when
// v <= t[b], which is the routing equivalence the trees rely on.
struct BinMapper {
    std::vector<std::vector<double>> thresholds;

    size_t n_features() const { return thresholds.size(); }
    size_t n_bins(size_t f) const { return thresholds[f].size() + 1; }

    uint32_t bin_of(size_t f, double v) const {
        const auto& t = thresholds[f];
        return static_cast<uint32_t>(std::lower_bound(t.begin(), t.end(), v) - t.begin());
    }

    bool operator==(const BinMapper&) const = default;
};

// Quantile binning: sort each feature's values; if there are at most
// max_bins distinct values every distinct value gets its own bin, otherwise
// emit a threshold each time the cumulative count crosses the next
// n*(k/max_bins) boundary. Thresholds are always actual data values.
inline BinMapper fit_bins(const EmbeddingMatrix& X, size_t max_bins) {
    if (X.n_rows == 0) throw data_error("empty_data", "fit_bins: empty matrix");
    if (max_bins < 2) throw config_error("bad_config", "fit_bins: max_bins must be >= 2");
    BinMapper mapper;
    mapper.thresholds.assign(X.dim, {});
    parallel_chunks(X.dim, [&](size_t f_begin, size_t f_end) {
        std::vector<double> col(X.n_rows);
        for (size_t f = f_begin; f < f_end; ++f) {
            for (size_t r = 0; r < X.n_rows; ++r) {
                const double v = static_cast<double>(X.values[r * X.dim + f]);
                if (!std::isfinite(v))
                    throw data_error("non_finite", "fit_bins: non-finite value in feature " +
                                     std::to_string(f));
                col[r] = v;
            }
            std::sort(col.begin(), col.end());
            // run-length encode into (value, count)
            std::vector<std::pair<double, uint64_t>> runs;
            for (size_t i = 0; i < col.size();) {
                size_t j = i;
                while (j < col.size() && col[j] == col[i]) ++j;
                runs.emplace_back(col[i], j - i);
                i = j;
            }
            auto& out = mapper.thresholds[f];
            if (runs.size() <= max_bins) {
                for (size_t i = 0; i + 1 < runs.size(); ++i) out.push_back(runs[i].first);
                continue;
            }
            const uint64_t n = X.n_rows;
            uint64_t cum = 0;
            uint64_t emitted = 0;
            for (size_t i = 0; i + 1 < runs.size() && emitted + 1 < max_bins; ++i) {
                cum += runs[i].second;
                if (cum * max_bins >= n * (emitted + 1)) {
                    out.push_back(runs[i].first);
                    emitted = std::min<uint64_t>(cum * max_bins / n, max_bins - 1);
                }
            }
        }
    });
    return mapper;
}

// Feature-major u16 bin codes: bins[f * n_rows + r].
struct BinnedMatrix {
    size_t n_rows = 0;
    size_t n_features = 0;
    std::vector<uint16_t> bins;

    const uint16_t* feature(size_t f) const { return bins.data() + f * n_rows; }
};

inline BinnedMatrix bin_matrix(const EmbeddingMatrix& X, const BinMapper& mapper) {
    if (X.dim != mapper.n_features())
        throw data_error("dim_mismatch", "bin_matrix: matrix dim " + std::to_string(X.dim) +
                         " vs mapper features " + std::to_string(mapper.n_features()));
    BinnedMatrix out;
    out.n_rows = X.n_rows;
    out.n_features = X.dim;
    out.bins.resize(X.n_rows * X.dim);
    parallel_chunks(X.dim, [&](size_t f_begin, size_t f_end) {
        for (size_t f = f_begin; f < f_end; ++f) {
            uint16_t* dst = out.bins.data() + f * X.n_rows;
            for (size_t r = 0; r < X.n_rows; ++r)
                dst[r] = static_cast<uint16_t>(
                    mapper.bin_of(f, static_cast<double>(X.values[r * X.dim + f])));
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Loss derivatives
// ---------------------------------------------------------------------------

// Second-order expansion of the logistic loss at the given log-odds score:
// p = sigmoid(score), g = w*(p - y), h = w*p*(1-p).
inline std::pair<double, double> logistic_grad_hess(int y, double score, double w) {
    const double p = sigmoid(score);
    return {w * (p - static_cast<double>(y)), w * p * (1.0 - p)};
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

struct TreeNode {
    int32_t left = -1;  // -1 marks a leaf
    int32_t right = -1;
    uint32_t feature = 0;
    uint32_t split_bin = 0;
    double threshold = 0.0;
    // Routing side for a value that matches no bin rule; inputs are required
    // finite so this is always taken as written (kept for format stability).
    uint8_t default_left = 1;
    double leaf_value = 0.0;

    bool is_leaf() const { return left < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    size_t n_leaves() const {
        size_t n = 0;
        for (const auto& nd : nodes) n += nd.is_leaf();
        return n;
    }

    template <typename GoesLeft>
    double route(GoesLeft&& goes_left) const {
        int32_t id = 0;
        while (!nodes[id].is_leaf()) {
            const TreeNode& nd = nodes[id];
            id = goes_left(nd) ? nd.left : nd.right;
        }
        return nodes[id].leaf_value;
    }

    double value_for(std::span<const float> x) const {
        return route([&](const TreeNode& nd) {
            return static_cast<double>(x[nd.feature]) <= nd.threshold;
        });
    }

    double value_for_binned(const BinnedMatrix& B, size_t row) const {
        return route([&](const TreeNode& nd) {
            return B.feature(nd.feature)[row] <= nd.split_bin;
        });
    }

    bool operator==(const Tree&) const = default;
};

namespace detail {

// Per-leaf split-search statistics over the tree's candidate features,
// flattened with per-feature offsets.
struct Histogram {
    std::vector<double> g;
    std::vector<double> h;
    std::vector<uint32_t> c;

    void reset(size_t total_bins) {
        g.assign(total_bins, 0.0);
        h.assign(total_bins, 0.0);
        c.assign(total_bins, 0);
    }
    bool empty() const { return g.empty(); }
    void release() {
        g = {};
        h = {};
        c = {};
    }
};

struct SplitChoice {
    bool found = false;
    size_t slot = 0;  // index into the candidate feature list
    uint32_t bin = 0;
    double gain = 0.0;
};

struct LeafBuild {
    int32_t node = -1;
    size_t begin = 0, end = 0;  // range in the row-index array
    double sum_g = 0.0, sum_h = 0.0;
    Histogram hist;
    bool active = true;
    SplitChoice best;
};

inline void build_histogram(Histogram& hist, const BinnedMatrix& B,
                            std::span<const size_t> cand, std::span<const size_t> offs,
                            std::span<const double> g, std::span<const double> h,
                            const size_t* rows, size_t begin, size_t end) {
    hist.reset(offs[cand.size()]);
    parallel_chunks(cand.size(), [&](size_t s_begin, size_t s_end) {
        for (size_t s = s_begin; s < s_end; ++s) {
            const uint16_t* code = B.feature(cand[s]);
            double* hg = hist.g.data() + offs[s];
            double* hh = hist.h.data() + offs[s];
            uint32_t* hc = hist.c.data() + offs[s];
            for (size_t i = begin; i < end; ++i) {
                const size_t r = rows[i];
                const uint16_t b = code[r];
                hg[b] += g[r];
                hh[b] += h[r];
                hc[b] += 1;
            }
        }
    });
}

// sibling := parent - child, reusing the parent's storage.
inline Histogram subtract_histogram(Histogram&& parent, const Histogram& child) {
    Histogram out = std::move(parent);
    for (size_t i = 0; i < out.g.size(); ++i) {
        out.g[i] -= child.g[i];
        out.h[i] -= child.h[i];
        out.c[i] -= child.c[i];
    }
    return out;
}

inline double split_gain(double gl, double hl, double gr, double hr, double g, double h,
                         double lambda) {
    return gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda);
}

// Scan features in ascending index order and bins in ascending order with a
// strictly-greater comparison, so ties resolve to (lower feature, lower bin).
inline SplitChoice find_best_split(const LeafBuild& leaf, const BinMapper& mapper,
                                   std::span<const size_t> cand, std::span<const size_t> offs,
                                   const GBDTConfig& cfg) {
    SplitChoice best;
    const size_t n_total = leaf.end - leaf.begin;
    if (n_total < 2 * cfg.min_data_in_leaf) return best;
    for (size_t s = 0; s < cand.size(); ++s) {
        const size_t nb = mapper.n_bins(cand[s]);
        if (nb < 2) continue;
        const double* hg = leaf.hist.g.data() + offs[s];
        const double* hh = leaf.hist.h.data() + offs[s];
        const uint32_t* hc = leaf.hist.c.data() + offs[s];
        double cg = 0.0, ch = 0.0;
        uint64_t cc = 0;
        for (size_t b = 0; b + 1 < nb; ++b) {
            cg += hg[b];
            ch += hh[b];
            cc += hc[b];
            if (cc < cfg.min_data_in_leaf) continue;
            if (n_total - cc < cfg.min_data_in_leaf) break;  // right side only shrinks
            const double gain = split_gain(cg, ch, leaf.sum_g - cg, leaf.sum_h - ch,
                                           leaf.sum_g, leaf.sum_h, cfg.lambda_l2);
            if (gain > 0.0 && (!best.found || gain > best.gain)) {
                best.found = true;
                best.slot = s;
                best.bin = static_cast<uint32_t>(b);
                best.gain = gain;
            }
        }
    }
    return best;
}

inline double leaf_output(double sum_g, double sum_h, double lambda) {
    const double denom = sum_h + lambda;
    if (!(denom > 0.0)) return 0.0;
    const double v = -sum_g / denom;
    return std::isfinite(v) ? v : 0.0;
}

#ifdef CLSBOOST_DEBUG_CHECKS
// Debug-build invariant: a histogram obtained by subtraction must agree with
// one built directly from the rows (counts exactly, sums to fp tolerance).
inline void check_histogram_consistency(const Histogram& derived, const BinnedMatrix& B,
                                        std::span<const size_t> cand, std::span<const size_t> offs,
                                        std::span<const double> g, std::span<const double> h,
                                        const size_t* rows, size_t begin, size_t end) {
    Histogram direct;
    build_histogram(direct, B, cand, offs, g, h, rows, begin, end);
    for (size_t i = 0; i < direct.c.size(); ++i) {
        if (derived.c[i] != direct.c[i])
            throw numeric_error("histogram_mismatch", "subtracted histogram count diverges");
        const double tol_g = 1e-9 * std::max(1.0, std::abs(direct.g[i]));
        const double tol_h = 1e-9 * std::max(1.0, std::abs(direct.h[i]));
        if (std::abs(derived.g[i] - direct.g[i]) > tol_g ||
            std::abs(derived.h[i] - direct.h[i]) > tol_h)
            throw numeric_error("histogram_mismatch", "subtracted histogram sums diverge");
    }
}
#endif

}  // namespace detail

// Grows one regression tree over the given rows (indices into g/h, ascending).
// Leaf values are the raw -sum_g/(sum_h+lambda) outputs; the caller applies
// learning_rate. The rng is consumed only when feature_fraction < 1 selects a
// proper subset.
inline Tree grow_tree(const BinnedMatrix& B, const BinMapper& mapper, std::span<const double> g,
                      std::span<const double> h, std::span<const size_t> rows,
                      const GBDTConfig& cfg, Rng& rng) {
    if (rows.empty()) throw data_error("empty_data", "grow_tree: no rows");
    if (g.size() != h.size()) throw data_error("length_mismatch", "grow_tree: |g| != |h|");

    // Candidate features, ascending. sample_indices returns a sorted subset.
    std::vector<size_t> cand;
    const size_t k = std::max<size_t>(
        1, static_cast<size_t>(std::llround(cfg.feature_fraction *
                                            static_cast<double>(B.n_features))));
    if (k >= B.n_features) {
        cand.resize(B.n_features);
        for (size_t f = 0; f < cand.size(); ++f) cand[f] = f;
    } else {
        cand = rng.sample_indices(B.n_features, k);
    }
    std::vector<size_t> offs(cand.size() + 1, 0);
    for (size_t s = 0; s < cand.size(); ++s) offs[s + 1] = offs[s] + mapper.n_bins(cand[s]);

    std::vector<size_t> row_order(rows.begin(), rows.end());

    Tree tree;
    tree.nodes.emplace_back();  // root starts as a leaf
    std::vector<detail::LeafBuild> leaves;
    {
        detail::LeafBuild root;
        root.node = 0;
        root.begin = 0;
        root.end = row_order.size();
        for (size_t r : row_order) {
            root.sum_g += g[r];
            root.sum_h += h[r];
        }
        detail::build_histogram(root.hist, B, cand, offs, g, h, row_order.data(), root.begin,
                                root.end);
        root.best = detail::find_best_split(root, mapper, cand, offs, cfg);
        if (!root.best.found) root.hist.release();
        leaves.push_back(std::move(root));
    }

    size_t n_leaves = 1;
    while (n_leaves < cfg.num_leaves) {
        // Split the leaf with the globally largest gain; earliest leaf wins ties.
        size_t pick = leaves.size();
        double pick_gain = 0.0;
        for (size_t i = 0; i < leaves.size(); ++i) {
            if (!leaves[i].active || !leaves[i].best.found) continue;
            if (pick == leaves.size() || leaves[i].best.gain > pick_gain) {
                pick = i;
                pick_gain = leaves[i].best.gain;
            }
        }
        if (pick == leaves.size()) break;

        detail::LeafBuild& parent = leaves[pick];
        const size_t f_global = cand[parent.best.slot];
        const uint32_t split_bin = parent.best.bin;
        const uint16_t* code = B.feature(f_global);
        const auto mid_it = std::stable_partition(
            row_order.begin() + static_cast<std::ptrdiff_t>(parent.begin),
            row_order.begin() + static_cast<std::ptrdiff_t>(parent.end),
            [&](size_t r) { return code[r] <= split_bin; });
        const size_t mid = static_cast<size_t>(mid_it - row_order.begin());

        detail::LeafBuild lchild, rchild;
        lchild.begin = parent.begin;
        lchild.end = mid;
        rchild.begin = mid;
        rchild.end = parent.end;
        // Sums are accumulated directly on both sides (ascending row order)
        // so leaf values do not depend on which sibling got the histogram
        // subtraction shortcut.
        for (size_t i = lchild.begin; i < lchild.end; ++i) {
            lchild.sum_g += g[row_order[i]];
            lchild.sum_h += h[row_order[i]];
        }
        for (size_t i = rchild.begin; i < rchild.end; ++i) {
            rchild.sum_g += g[row_order[i]];
            rchild.sum_h += h[row_order[i]];
        }

        detail::LeafBuild& small = (lchild.end - lchild.begin <= rchild.end - rchild.begin)
                                       ? lchild
                                       : rchild;
        detail::LeafBuild& large = (&small == &lchild) ? rchild : lchild;
        detail::build_histogram(small.hist, B, cand, offs, g, h, row_order.data(), small.begin,
                                small.end);
        large.hist = detail::subtract_histogram(std::move(parent.hist), small.hist);
#ifdef CLSBOOST_DEBUG_CHECKS
        detail::check_histogram_consistency(large.hist, B, cand, offs, g, h, row_order.data(),
                                            large.begin, large.end);
#endif

        // Rewrite the parent node as internal and append the two children.
        const int32_t left_id = static_cast<int32_t>(tree.nodes.size());
        const int32_t right_id = left_id + 1;
        TreeNode& pnode = tree.nodes[parent.node];
        pnode.left = left_id;
        pnode.right = right_id;
        pnode.feature = static_cast<uint32_t>(f_global);
        pnode.split_bin = split_bin;
        pnode.threshold = mapper.thresholds[f_global][split_bin];
        pnode.default_left = 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        lchild.node = left_id;
        rchild.node = right_id;
        parent.active = false;
        ++n_leaves;

        lchild.best = detail::find_best_split(lchild, mapper, cand, offs, cfg);
        if (!lchild.best.found) lchild.hist.release();
        rchild.best = detail::find_best_split(rchild, mapper, cand, offs, cfg);
        if (!rchild.best.found) rchild.hist.release();
        // note: push_back may reallocate `leaves`; `parent` is not used past here
        leaves.push_back(std::move(lchild));
        leaves.push_back(std::move(rchild));
    }

    for (const auto& leaf : leaves) {
        if (!leaf.active) continue;
        tree.nodes[leaf.node].leaf_value =
            detail::leaf_output(leaf.sum_g, leaf.sum_h, cfg.lambda_l2);
    }
    return tree;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct GBDTModel {
    GBDTConfig config;  // echo of the training configuration
    size_t n_features = 0;
    double base_score = 0.0;
    BinMapper mapper;
    std::vector<Tree> trees;  // leaf values include the learning_rate factor

    double predict_raw(std::span<const float> x) const {
        if (x.size() != n_features)
            throw data_error("dim_mismatch", "predict: input has dim " + std::to_string(x.size()) +
                             ", model expects " + std::to_string(n_features));
        double s = base_score;
        for (const auto& t : trees) s += t.value_for(x);
        return s;
    }

    double predict_proba(std::span<const float> x) const { return sigmoid(predict_raw(x)); }

    bool operator==(const GBDTModel&) const = default;
};

inline std::vector<double> predict_gbdt(const GBDTModel& model, const EmbeddingMatrix& X) {
    if (X.dim != model.n_features)
        throw data_error("dim_mismatch", "predict: data dim " + std::to_string(X.dim) +
                         " vs model features " + std::to_string(model.n_features));
    std::vector<double> out(X.n_rows);
    for (size_t r = 0; r < X.n_rows; ++r) out[r] = model.predict_proba(X.row(r));
    return out;
}

struct GBDTTrainResult {
    GBDTModel model;
    std::vector<double> train_loss;  // weighted mean BCE per iteration
    std::vector<double> val_loss;    // unweighted mean BCE per iteration (empty without val set)
    size_t best_iteration = 0;       // trees kept = best_iteration (early stopping) or all
};

namespace detail {

inline double boosting_bce(std::span<const double> scores, std::span<const int> y,
                           std::span<const double> w, double weight_sum) {
    double acc = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const double p = sigmoid(scores[i]);
        constexpr double eps_p = 1e-7;
        const double q = std::clamp(p, eps_p, 1.0 - eps_p);
        const double yi = static_cast<double>(y[i]);
        acc += w[i] * -(yi * std::log(q) + (1.0 - yi) * std::log(1.0 - q));
    }
    return acc / weight_sum;
}

}  // namespace detail

// Boosting loop. `val_callback`, when set, is invoked after every iteration
// with (iteration index, validation loss) — the hpo module uses it to report
// checkpoints (and aborts by throwing through it when a trial is pruned).
inline GBDTTrainResult train_gbdt(const EmbeddingMatrix& X, std::span<const int> y,
                                  const GBDTConfig& cfg, const EmbeddingMatrix* Xval = nullptr,
                                  std::span<const int> yval = {},
                                  const std::function<void(size_t, double)>& val_callback = {}) {
    cfg.validate();
    if (X.n_rows == 0) throw data_error("empty_data", "train: empty training set");
    if (X.n_rows != y.size()) throw data_error("length_mismatch", "train: rows vs labels mismatch");
    for (size_t i = 0; i < y.size(); ++i)
        if (y[i] != 0 && y[i] != 1) throw data_error("bad_label", "train: labels must be 0/1");
    const bool has_val = Xval != nullptr && Xval->n_rows > 0;
    if (has_val) {
        if (Xval->n_rows != yval.size())
            throw data_error("length_mismatch", "train: val rows vs labels mismatch");
        if (Xval->dim != X.dim)
            throw data_error("dim_mismatch", "train: train dim " + std::to_string(X.dim) +
                             " vs val dim " + std::to_string(Xval->dim));
        for (size_t i = 0; i < yval.size(); ++i)
            if (yval[i] != 0 && yval[i] != 1)
                throw data_error("bad_label", "train: labels must be 0/1");
    }

    const size_t n = X.n_rows;
    std::vector<double> w(n);
    double wsum = 0.0, wpos = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w[i] = y[i] == 1 ? cfg.scale_pos_weight : 1.0;
        wsum += w[i];
        if (y[i] == 1) wpos += w[i];
    }

    GBDTTrainResult res;
    res.model.config = cfg;
    res.model.n_features = X.dim;
    {
        // Weighted positive rate -> prior log-odds, clamped to +-ln(1e6) so a
        // single-class corpus still yields a finite base score.
        const double cap = std::log(1e6);
        const double pbar = wpos / wsum;
        double base;
        if (pbar <= 0.0)
            base = -cap;
        else if (pbar >= 1.0)
            base = cap;
        else
            base = std::clamp(std::log(pbar / (1.0 - pbar)), -cap, cap);
        res.model.base_score = base;
    }
    res.model.mapper = fit_bins(X, cfg.max_bins);
    const BinnedMatrix B = bin_matrix(X, res.model.mapper);
    BinnedMatrix Bval;
    if (has_val) Bval = bin_matrix(*Xval, res.model.mapper);

    std::vector<double> scores(n, res.model.base_score);
    std::vector<double> val_scores(has_val ? Xval->n_rows : 0, res.model.base_score);
    std::vector<double> val_w(has_val ? Xval->n_rows : 0, 1.0);
    std::vector<double> g(n), h(n);
    Rng rng(cfg.seed);

    double best_val = std::numeric_limits<double>::infinity();
    size_t best_iter = 0;  // number of trees at the best validation loss
    size_t since_best = 0;

    std::vector<size_t> all_rows(n);
    for (size_t i = 0; i < n; ++i) all_rows[i] = i;

    for (size_t iter = 0; iter < cfg.n_trees; ++iter) {
        for (size_t i = 0; i < n; ++i) {
            const auto [gi, hi] = logistic_grad_hess(y[i], scores[i], w[i]);
            g[i] = gi;
            h[i] = hi;
        }
        std::vector<size_t> bag;
        std::span<const size_t> rows(all_rows);
        if (cfg.bagging_fraction < 1.0) {
            const size_t m = std::max<size_t>(
                1, static_cast<size_t>(std::llround(cfg.bagging_fraction *
                                                    static_cast<double>(n))));
            if (m < n) {
                bag = rng.sample_indices(n, m);
                rows = bag;
            }
        }
        Tree tree = grow_tree(B, res.model.mapper, g, h, rows, cfg, rng);
        for (auto& nd : tree.nodes)
            if (nd.is_leaf()) nd.leaf_value *= cfg.learning_rate;
        for (size_t i = 0; i < n; ++i) scores[i] += tree.value_for_binned(B, i);
        res.model.trees.push_back(std::move(tree));
        res.train_loss.push_back(detail::boosting_bce(scores, y, w, wsum));

        if (has_val) {
            const Tree& t = res.model.trees.back();
            for (size_t i = 0; i < val_scores.size(); ++i)
                val_scores[i] += t.value_for_binned(Bval, i);
            const double vl = detail::boosting_bce(val_scores, yval, val_w,
                                                   static_cast<double>(val_scores.size()));
            res.val_loss.push_back(vl);
            if (val_callback) val_callback(iter, vl);
            if (vl < best_val) {
                best_val = vl;
                best_iter = iter + 1;
                since_best = 0;
            } else if (cfg.early_stopping_rounds > 0) {
                if (++since_best >= cfg.early_stopping_rounds) break;
            }
        }
    }

    if (has_val && cfg.early_stopping_rounds > 0) {
        res.model.trees.resize(best_iter);
        res.best_iteration = best_iter;
    } else {
        res.best_iteration = res.model.trees.size();
    }
    return res;
}

// ---------------------------------------------------------------------------
// GBDT file format
// ---------------------------------------------------------------------------
// magic "GBDT" | u16 version | config echo (u32 n_trees, u32 num_leaves,
// u32 min_data_in_leaf, u32 max_bins, f64 learning_rate, f64 lambda_l2,
// f64 feature_fraction, f64 bagging_fraction, f64 scale_pos_weight, u64 seed,
// u32 early_stopping_rounds) | f64 base_score | u32 n_features | per feature:
// u32 n_thresholds + f64 thresholds | u32 n_trees_stored | per tree: pre-order
// nodes, each u8 kind (0 leaf / 1 internal); leaf: f64 value; internal:
// u32 feature, u32 split_bin, f64 threshold, u8 default_left, then the left
// and right subtrees. Little-endian throughout.

inline constexpr std::string_view kGbdtMagic = "GBDT";
inline constexpr uint16_t kGbdtVersion = 1;

namespace detail {

inline void write_tree_nodes(ByteWriter& w, const Tree& tree) {
    std::vector<int32_t> stack{0};
    while (!stack.empty()) {
        const int32_t id = stack.back();
        stack.pop_back();
        const TreeNode& nd = tree.nodes[static_cast<size_t>(id)];
        if (nd.is_leaf()) {
            w.u8(0);
            w.f64(nd.leaf_value);
        } else {
            w.u8(1);
            w.u32(nd.feature);
            w.u32(nd.split_bin);
            w.f64(nd.threshold);
            w.u8(nd.default_left);
            stack.push_back(nd.right);  // left subtree is emitted first
            stack.push_back(nd.left);
        }
    }
}

inline int32_t read_tree_nodes(ByteReader& r, Tree& tree, const BinMapper& mapper,
                               size_t n_features, const std::string& path, size_t depth) {
    if (depth > 4096) throw data_error("bad_tree", path + ": tree nesting too deep");
    const uint8_t kind = r.u8();
    const int32_t id = static_cast<int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (kind == 0) {
        const double v = r.f64();
        if (!std::isfinite(v)) throw data_error("non_finite", path + ": non-finite leaf value");
        tree.nodes[static_cast<size_t>(id)].leaf_value = v;
        return id;
    }
    if (kind != 1) throw data_error("bad_tree", path + ": unknown node kind");
    const uint32_t feature = r.u32();
    const uint32_t split_bin = r.u32();
    const double threshold = r.f64();
    const uint8_t default_left = r.u8();
    if (feature >= n_features) throw data_error("bad_tree", path + ": feature index out of range");
    if (split_bin >= mapper.thresholds[feature].size())
        throw data_error("bad_tree", path + ": split bin out of range");
    const int32_t left = read_tree_nodes(r, tree, mapper, n_features, path, depth + 1);
    const int32_t right = read_tree_nodes(r, tree, mapper, n_features, path, depth + 1);
    TreeNode& nd = tree.nodes[static_cast<size_t>(id)];
    nd.left = left;
    nd.right = right;
    nd.feature = feature;
    nd.split_bin = split_bin;
    nd.threshold = threshold;
    nd.default_left = default_left;
    return id;
}

}  // namespace detail

inline void save_gbdt(const GBDTModel& model, const std::string& path) {
    ByteWriter w;
    w.bytes(kGbdtMagic);
    w.u16(kGbdtVersion);
    w.u32(static_cast<uint32_t>(model.config.n_trees));
    w.u32(static_cast<uint32_t>(model.config.num_leaves));
    w.u32(static_cast<uint32_t>(model.config.min_data_in_leaf));
    w.u32(static_cast<uint32_t>(model.config.max_bins));
    w.f64(model.config.learning_rate);
    w.f64(model.config.lambda_l2);
    w.f64(model.config.feature_fraction);
    w.f64(model.config.bagging_fraction);
    w.f64(model.config.scale_pos_weight);
    w.u64(model.config.seed);
    w.u32(static_cast<uint32_t>(model.config.early_stopping_rounds));
    w.f64(model.base_score);
    w.u32(static_cast<uint32_t>(model.n_features));
    for (const auto& t : model.mapper.thresholds) {
        w.u32(static_cast<uint32_t>(t.size()));
        for (double v : t) w.f64(v);
    }
    w.u32(static_cast<uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) detail::write_tree_nodes(w, tree);
    write_file(path, w.data());
}

inline GBDTModel load_gbdt(const std::string& path) {
    const std::string body = read_file(path);
    ByteReader r(body, path);
    if (r.remaining() < 4 || r.raw(4) != kGbdtMagic)
        throw data_error("bad_magic", path + ": not a GBDT model file");
    const uint16_t version = r.u16();
    if (version != kGbdtVersion)
        throw data_error("bad_version", path + ": unsupported GBDT version " + std::to_string(version));
    GBDTModel m;
    m.config.n_trees = r.u32();
    m.config.num_leaves = r.u32();
    m.config.min_data_in_leaf = r.u32();
    m.config.max_bins = r.u32();
    m.config.learning_rate = r.f64();
    m.config.lambda_l2 = r.f64();
    m.config.feature_fraction = r.f64();
    m.config.bagging_fraction = r.f64();
    m.config.scale_pos_weight = r.f64();
    m.config.seed = r.u64();
    m.config.early_stopping_rounds = r.u32();
    m.base_score = r.f64();
    if (!std::isfinite(m.base_score)) throw data_error("non_finite", path + ": non-finite base score");
    m.n_features = r.u32();
    if (m.n_features == 0) throw data_error("bad_dim", path + ": zero feature count");
    m.mapper.thresholds.resize(m.n_features);
    for (auto& t : m.mapper.thresholds) {
        const uint32_t cnt = r.u32();
        t.resize(cnt);
        double prev = -std::numeric_limits<double>::infinity();
        for (auto& v : t) {
            v = r.f64();
            if (!std::isfinite(v)) throw data_error("non_finite", path + ": non-finite threshold");
            if (!(v > prev)) throw data_error("bad_thresholds", path + ": thresholds not increasing");
            prev = v;
        }
    }
    const uint32_t n_trees = r.u32();
    m.trees.resize(n_trees);
    for (auto& tree : m.trees)
        detail::read_tree_nodes(r, tree, m.mapper, m.n_features, path, 0);
    r.expect_exhausted();
    return m;
}

}  // namespace clsboost
