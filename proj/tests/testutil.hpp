#pragma once

// Shared helpers for the test binaries: scratch directories, a CLI runner,
// data generators, and the independent oracles the core suites compare
// against (central finite differences for the MLP, exhaustive stump search
// over raw values for the booster).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "clsboost/common.hpp"
#include "clsboost/embedding.hpp"
#include "clsboost/gbdt.hpp"
#include "clsboost/mlp.hpp"

namespace testutil {

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "clsboostXXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

private:
    std::string path_;
};

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the built CLI with the given argument string inside a shell; argv
// values must therefore be pre-quoted by the caller where needed.
inline CliResult run_cli(const std::string& args, const TempDir& dir) {
    const std::string out_path = dir.file("__stdout");
    const std::string err_path = dir.file("__stderr");
    const std::string cmd = std::string(CLSBOOST_CLI_PATH) + " " + args + " >" + out_path +
                            " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    return res;
}

// ---------------------------------------------------------------------------
// Random data
// ---------------------------------------------------------------------------

inline clsboost::EmbeddingMatrix random_matrix(size_t n_rows, size_t dim, clsboost::Rng& rng,
                                               double scale = 1.0) {
    auto m = clsboost::EmbeddingMatrix::zeros(n_rows, dim);
    for (auto& v : m.values) v = static_cast<float>(rng.normal() * scale);
    return m;
}

// Two gaussian blobs, labels 0/1, linearly separable up to overlap.
inline std::pair<clsboost::EmbeddingMatrix, std::vector<int>> random_blobs(size_t n_rows,
                                                                           size_t dim,
                                                                           clsboost::Rng& rng,
                                                                           double separation = 2.0) {
    auto X = clsboost::EmbeddingMatrix::zeros(n_rows, dim);
    std::vector<int> y(n_rows);
    for (size_t i = 0; i < n_rows; ++i) {
        y[i] = rng.below(2) ? 1 : 0;
        const double center = y[i] ? separation / 2.0 : -separation / 2.0;
        for (size_t j = 0; j < dim; ++j)
            X.values[i * dim + j] = static_cast<float>(center + rng.normal());
    }
    return {X, y};
}

// ---------------------------------------------------------------------------
// MLP finite-difference oracle
// ---------------------------------------------------------------------------

// Mean batch loss as backward() computes it, as a function of the parameters.
inline double mlp_batch_loss(const clsboost::MLPParams& p, const clsboost::EmbeddingMatrix& X,
                             std::span<const size_t> rows, std::span<const double> targets) {
    return clsboost::backward(p, X, rows, targets).mean_loss;
}

// Central finite differences over every parameter. Returns the maximum
// relative error against the analytic gradient.
inline double max_grad_rel_error(const clsboost::MLPParams& p, const clsboost::EmbeddingMatrix& X,
                                 std::span<const size_t> rows, std::span<const double> targets,
                                 double eps = 1e-6) {
    const clsboost::MLPParams analytic = clsboost::backward(p, X, rows, targets).grads;
    clsboost::MLPParams probe = p;

    double worst = 0.0;
    auto check = [&](double& slot, double analytic_g) {
        const double saved = slot;
        slot = saved + eps;
        const double up = mlp_batch_loss(probe, X, rows, targets);
        slot = saved - eps;
        const double down = mlp_batch_loss(probe, X, rows, targets);
        slot = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic_g), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(analytic_g - fd) / denom);
    };
    for (size_t i = 0; i < probe.w1.size(); ++i) check(probe.w1[i], analytic.w1[i]);
    for (size_t i = 0; i < probe.b1.size(); ++i) check(probe.b1[i], analytic.b1[i]);
    for (size_t i = 0; i < probe.w2.size(); ++i) check(probe.w2[i], analytic.w2[i]);
    check(probe.b2, analytic.b2);
    return worst;
}

// ---------------------------------------------------------------------------
// Brute-force stump oracle
// ---------------------------------------------------------------------------

struct OracleStump {
    bool found = false;
    size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    double left_value = 0.0;   // -G_L/(H_L+lambda), no learning rate
    double right_value = 0.0;
};

// Exhaustive best stump over raw values: every feature in ascending order,
// every sorted distinct value except the last as a `x <= t` threshold, gain
// strictly greater than the incumbent (so ties keep the lower feature, lower
// threshold), both children at least min_data_in_leaf rows.
//
// Bit-exact comparison with the grower pins the accumulation order, which is
// part of the engine's numeric contract: selection gains come from per-value
// group sums (rows ascending within a group) prefix-summed over ascending
// values with the right side as total-minus-left, while the winning leaf
// outputs come from direct per-side sums in ascending row order. Both are
// reproduced here from raw values, independent of the binning/grower code.
inline OracleStump brute_force_stump(const clsboost::EmbeddingMatrix& X,
                                     std::span<const double> g, std::span<const double> h,
                                     const clsboost::GBDTConfig& cfg) {
    OracleStump best;
    const size_t n = X.n_rows;
    if (n < 2 * cfg.min_data_in_leaf) return best;
    double G = 0.0, H = 0.0;
    for (size_t r = 0; r < n; ++r) {
        G += g[r];
        H += h[r];
    }
    for (size_t f = 0; f < X.dim; ++f) {
        std::vector<double> vals(n);
        for (size_t r = 0; r < n; ++r) vals[r] = static_cast<double>(X.values[r * X.dim + f]);
        std::vector<double> distinct = vals;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 2) continue;
        std::vector<double> vg(distinct.size(), 0.0), vh(distinct.size(), 0.0);
        std::vector<size_t> vc(distinct.size(), 0);
        for (size_t r = 0; r < n; ++r) {
            const size_t k = static_cast<size_t>(
                std::lower_bound(distinct.begin(), distinct.end(), vals[r]) - distinct.begin());
            vg[k] += g[r];
            vh[k] += h[r];
            ++vc[k];
        }
        double gl = 0.0, hl = 0.0;
        size_t nl = 0;
        for (size_t k = 0; k + 1 < distinct.size(); ++k) {  // splitting at the max is a no-op
            gl += vg[k];
            hl += vh[k];
            nl += vc[k];
            if (nl < cfg.min_data_in_leaf) continue;
            if (n - nl < cfg.min_data_in_leaf) break;
            const double gr = G - gl;
            const double hr = H - hl;
            const double gain = gl * gl / (hl + cfg.lambda_l2) + gr * gr / (hr + cfg.lambda_l2) -
                                G * G / (H + cfg.lambda_l2);
            if (gain > 0.0 && (!best.found || gain > best.gain)) {
                best.found = true;
                best.feature = f;
                best.threshold = distinct[k];
                best.gain = gain;
            }
        }
    }
    if (best.found) {
        double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
        for (size_t r = 0; r < n; ++r) {
            if (static_cast<double>(X.values[r * X.dim + best.feature]) <= best.threshold) {
                gl += g[r];
                hl += h[r];
            } else {
                gr += g[r];
                hr += h[r];
            }
        }
        best.left_value = clsboost::detail::leaf_output(gl, hl, cfg.lambda_l2);
        best.right_value = clsboost::detail::leaf_output(gr, hr, cfg.lambda_l2);
    }
    return best;
}

// Grows a depth-1 tree through the real pipeline (lossless binning assumed:
// the caller keeps distinct values per feature <= cfg.max_bins).
inline clsboost::Tree grow_stump(const clsboost::EmbeddingMatrix& X, std::span<const double> g,
                                 std::span<const double> h, const clsboost::GBDTConfig& cfg) {
    const auto mapper = clsboost::fit_bins(X, cfg.max_bins);
    const auto B = clsboost::bin_matrix(X, mapper);
    std::vector<size_t> rows(X.n_rows);
    for (size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    clsboost::Rng rng(cfg.seed);
    clsboost::GBDTConfig stump_cfg = cfg;
    stump_cfg.num_leaves = 2;
    return clsboost::grow_tree(B, mapper, g, h, rows, stump_cfg, rng);
}

}  // namespace testutil
