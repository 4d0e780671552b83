#pragma once

// Two-layer fully connected binary classification head: ReLU between the
// layers, sigmoid output, binary cross-entropy loss, Adam updates.
//
// Math runs in float64. The model file ("MLPH") stores parameters as float32
// (magic "MLPH" | u16 version | u32 d_in | u32 d_h | W1 | b1 | W2 | b2,
// little-endian, W1 laid out row-major as [d_in][d_h]), so reported
// validation metrics in the pipeline are always computed from the serialized
// parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clsboost/common.hpp"
#include "clsboost/embedding.hpp"
#include "clsboost/metrics.hpp"

namespace clsboost {

struct MLPConfig {
    size_t d_hidden = 256;
    size_t epochs = 20;
    size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double val_threshold = 0.5;  // decision threshold for per-epoch validation F1
    uint64_t seed = 42;

    void validate() const {
        if (d_hidden < 1) throw config_error("bad_config", "d_hidden must be >= 1");
        if (batch_size < 1) throw config_error("bad_config", "batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw config_error("bad_config", "learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw config_error("bad_config", "beta1/beta2 must be in [0,1)");
        if (!(eps > 0.0)) throw config_error("bad_config", "eps must be > 0");
        if (!(val_threshold > 0.0 && val_threshold < 1.0))
            throw config_error("bad_config", "val_threshold must be in (0,1)");
    }

    bool operator==(const MLPConfig&) const = default;
};

// Weights of the head; also reused as the container for gradients and Adam
// moment accumulators, which are shaped identically.
struct MLPParams {
    size_t d_in = 0;
    size_t d_h = 0;
    std::vector<double> w1;  // d_in * d_h, w1[i*d_h + j] connects input i to hidden j
    std::vector<double> b1;  // d_h
    std::vector<double> w2;  // d_h
    double b2 = 0.0;

    static MLPParams zeros(size_t d_in, size_t d_h) {
        MLPParams p;
        p.d_in = d_in;
        p.d_h = d_h;
        p.w1.assign(d_in * d_h, 0.0);
        p.b1.assign(d_h, 0.0);
        p.w2.assign(d_h, 0.0);
        p.b2 = 0.0;
        return p;
    }

    bool operator==(const MLPParams&) const = default;
};

struct AdamState {
    MLPParams m;  // first moment
    MLPParams v;  // second moment
    uint64_t t = 0;
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState fresh(size_t d_in, size_t d_h, const MLPConfig& cfg) {
        AdamState s;
        s.m = MLPParams::zeros(d_in, d_h);
        s.v = MLPParams::zeros(d_in, d_h);
        s.alpha = cfg.learning_rate;
        s.beta1 = cfg.beta1;
        s.beta2 = cfg.beta2;
        s.eps = cfg.eps;
        return s;
    }
};

struct TrainHistory {
    std::vector<double> train_loss;  // per-epoch mean BCE over training samples
    std::vector<double> val_f1;      // per-epoch validation F1 at val_threshold

    bool operator==(const TrainHistory&) const = default;
};

namespace detail {

// Hidden pre-activations and activations for one sample; scratch for
// forward/backward.
struct MLPWorkspace {
    std::vector<double> z1;
    std::vector<double> h;
};

template <typename X>
inline double forward_raw(const MLPParams& p, X&& x, MLPWorkspace& ws) {
    ws.z1.assign(p.d_h, 0.0);
    for (size_t i = 0; i < p.d_in; ++i) {
        const double xi = static_cast<double>(x[i]);
        if (xi == 0.0) continue;
        const double* wrow = p.w1.data() + i * p.d_h;
        for (size_t j = 0; j < p.d_h; ++j) ws.z1[j] += wrow[j] * xi;
    }
    ws.h.resize(p.d_h);
    double z2 = p.b2;
    for (size_t j = 0; j < p.d_h; ++j) {
        const double a = ws.z1[j] + p.b1[j];
        ws.z1[j] = a;
        ws.h[j] = a > 0.0 ? a : 0.0;
        z2 += p.w2[j] * ws.h[j];
    }
    return z2;
}

inline double clamp_prob_open(double p) {
    constexpr double lo = 1e-12;
    if (p < lo) return lo;
    if (p > 1.0 - lo) return 1.0 - lo;
    return p;
}

}  // namespace detail

// sigmoid(W2^T relu(W1^T x + b1) + b2), clamped into (0,1).
inline double forward(const MLPParams& p, std::span<const float> x) {
    if (x.size() != p.d_in)
        throw data_error("dim_mismatch", "forward: input has dim " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(p.d_in));
    detail::MLPWorkspace ws;
    return detail::clamp_prob_open(sigmoid(detail::forward_raw(p, x, ws)));
}

inline double forward(const MLPParams& p, std::span<const double> x) {
    if (x.size() != p.d_in)
        throw data_error("dim_mismatch", "forward: input has dim " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(p.d_in));
    detail::MLPWorkspace ws;
    return detail::clamp_prob_open(sigmoid(detail::forward_raw(p, x, ws)));
}

// -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1-1e-7] before the log.
inline double bce_loss(double p, double y) {
    constexpr double eps_p = 1e-7;
    const double q = std::clamp(p, eps_p, 1.0 - eps_p);
    return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

struct BackwardResult {
    MLPParams grads;
    double mean_loss = 0.0;
};

// Gradient of mean BCE over the batch. Targets are passed as doubles so the
// soft-target identity dL/dz2 = p - y is exercisable directly in tests;
// training always passes 0/1.
inline BackwardResult backward(const MLPParams& p, const EmbeddingMatrix& X,
                               std::span<const size_t> batch_rows,
                               std::span<const double> targets) {
    if (batch_rows.empty()) throw data_error("empty_batch", "backward: batch is empty");
    if (batch_rows.size() != targets.size())
        throw data_error("length_mismatch", "backward: batch and target sizes differ");
    if (X.dim != p.d_in)
        throw data_error("dim_mismatch", "backward: data dim " + std::to_string(X.dim) +
                         " vs model d_in " + std::to_string(p.d_in));
    BackwardResult res;
    res.grads = MLPParams::zeros(p.d_in, p.d_h);
    detail::MLPWorkspace ws;
    std::vector<double> dz1(p.d_h);
    double loss_acc = 0.0;
    for (size_t b = 0; b < batch_rows.size(); ++b) {
        auto x = X.row(batch_rows[b]);
        const double z2 = detail::forward_raw(p, x, ws);
        const double prob = sigmoid(z2);
        loss_acc += bce_loss(prob, targets[b]);
        const double dz2 = prob - targets[b];
        res.grads.b2 += dz2;
        for (size_t j = 0; j < p.d_h; ++j) {
            res.grads.w2[j] += dz2 * ws.h[j];
            dz1[j] = ws.z1[j] > 0.0 ? dz2 * p.w2[j] : 0.0;
            res.grads.b1[j] += dz1[j];
        }
        for (size_t i = 0; i < p.d_in; ++i) {
            const double xi = static_cast<double>(x[i]);
            if (xi == 0.0) continue;
            double* grow = res.grads.w1.data() + i * p.d_h;
            for (size_t j = 0; j < p.d_h; ++j) grow[j] += xi * dz1[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(batch_rows.size());
    for (auto& g : res.grads.w1) g *= inv;
    for (auto& g : res.grads.b1) g *= inv;
    for (auto& g : res.grads.w2) g *= inv;
    res.grads.b2 *= inv;
    res.mean_loss = loss_acc * inv;
    return res;
}

// Standard Adam with bias correction; eps is added outside the square root.
inline void adam_step(MLPParams& p, const MLPParams& g, AdamState& s) {
    s.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    auto update = [&](double& param, double& m, double& v, double grad) {
        m = s.beta1 * m + (1.0 - s.beta1) * grad;
        v = s.beta2 * v + (1.0 - s.beta2) * grad * grad;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        param -= s.alpha * m_hat / (std::sqrt(v_hat) + s.eps);
    };
    for (size_t i = 0; i < p.w1.size(); ++i) update(p.w1[i], s.m.w1[i], s.v.w1[i], g.w1[i]);
    for (size_t i = 0; i < p.b1.size(); ++i) update(p.b1[i], s.m.b1[i], s.v.b1[i], g.b1[i]);
    for (size_t i = 0; i < p.w2.size(); ++i) update(p.w2[i], s.m.w2[i], s.v.w2[i], g.w2[i]);
    update(p.b2, s.m.b2, s.v.b2, g.b2);
}

inline std::vector<double> predict_mlp(const MLPParams& p, const EmbeddingMatrix& X) {
    if (X.dim != p.d_in)
        throw data_error("dim_mismatch", "predict: data dim " + std::to_string(X.dim) +
                         " vs model d_in " + std::to_string(p.d_in));
    std::vector<double> probs(X.n_rows);
    detail::MLPWorkspace ws;
    for (size_t i = 0; i < X.n_rows; ++i)
        probs[i] = detail::clamp_prob_open(sigmoid(detail::forward_raw(p, X.row(i), ws)));
    return probs;
}

struct TrainHeadResult {
    MLPParams params;  // parameters from the epoch with the best validation F1
    TrainHistory history;
    size_t best_epoch = 0;  // 0-based; meaningful only when history is non-empty
};

namespace detail {

inline MLPParams he_uniform_init(size_t d_in, size_t d_h, Rng& rng) {
    MLPParams p = MLPParams::zeros(d_in, d_h);
    const double l1 = std::sqrt(6.0 / static_cast<double>(d_in));
    for (auto& w : p.w1) w = rng.uniform(-l1, l1);
    const double l2 = std::sqrt(6.0 / static_cast<double>(d_h));
    for (auto& w : p.w2) w = rng.uniform(-l2, l2);
    return p;
}

inline std::vector<int> threshold_labels(std::span<const double> probs, double threshold) {
    std::vector<int> out(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > threshold ? 1 : 0;
    return out;
}

}  // namespace detail

// Seeded end-to-end training loop. Init and shuffle both derive from
// cfg.seed, so two runs produce bit-identical history. Returns the
// parameters of the epoch with the best validation F1 (first epoch wins
// ties); with an empty validation set the final epoch is returned.
inline TrainHeadResult train_head(const EmbeddingMatrix& X, std::span<const int> y,
                                  const EmbeddingMatrix& Xval, std::span<const int> yval,
                                  const MLPConfig& cfg) {
    cfg.validate();
    if (X.n_rows == 0) throw data_error("empty_data", "train_head: empty training set");
    if (X.n_rows != y.size())
        throw data_error("length_mismatch", "train_head: rows vs labels mismatch");
    if (Xval.n_rows != yval.size())
        throw data_error("length_mismatch", "train_head: val rows vs labels mismatch");
    if (Xval.n_rows > 0 && Xval.dim != X.dim)
        throw data_error("dim_mismatch", "train_head: train dim " + std::to_string(X.dim) +
                         " vs val dim " + std::to_string(Xval.dim));
    for (size_t i = 0; i < y.size(); ++i)
        if (y[i] != 0 && y[i] != 1) throw data_error("bad_label", "train_head: labels must be 0/1");
    for (size_t i = 0; i < yval.size(); ++i)
        if (yval[i] != 0 && yval[i] != 1) throw data_error("bad_label", "train_head: labels must be 0/1");

    Rng rng(cfg.seed);
    TrainHeadResult res;
    res.params = detail::he_uniform_init(X.dim, cfg.d_hidden, rng);
    if (cfg.epochs == 0) return res;

    AdamState adam = AdamState::fresh(X.dim, cfg.d_hidden, cfg);
    std::vector<size_t> order(X.n_rows);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    MLPParams best = res.params;
    double best_f1 = -1.0;
    const size_t n = X.n_rows;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const size_t end = std::min(n, begin + cfg.batch_size);
            std::span<const size_t> rows(order.data() + begin, end - begin);
            std::vector<double> targets(rows.size());
            for (size_t b = 0; b < rows.size(); ++b) targets[b] = static_cast<double>(y[rows[b]]);
            BackwardResult bw = backward(res.params, X, rows, targets);
            if (!std::isfinite(bw.mean_loss))
                throw numeric_error("non_finite_loss", "train_head: training loss diverged at epoch " +
                                    std::to_string(epoch));
            loss_sum += bw.mean_loss * static_cast<double>(rows.size());
            adam_step(res.params, bw.grads, adam);
        }
        res.history.train_loss.push_back(loss_sum / static_cast<double>(n));

        double vf1 = 0.0;
        if (Xval.n_rows > 0) {
            const std::vector<double> probs = predict_mlp(res.params, Xval);
            const std::vector<int> preds = detail::threshold_labels(probs, cfg.val_threshold);
            vf1 = f1(confusion(yval, preds));
        }
        res.history.val_f1.push_back(vf1);
        if (vf1 > best_f1) {
            best_f1 = vf1;
            best = res.params;
            res.best_epoch = epoch;
        }
    }
    if (Xval.n_rows > 0)
        res.params = std::move(best);
    else
        res.best_epoch = cfg.epochs - 1;
    return res;
}

// ---------------------------------------------------------------------------
// MLPH file format (float32 parameters)
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMlpMagic = "MLPH";
inline constexpr uint16_t kMlpVersion = 1;

inline void save_mlp(const MLPParams& p, const std::string& path) {
    ByteWriter w;
    w.bytes(kMlpMagic);
    w.u16(kMlpVersion);
    w.u32(static_cast<uint32_t>(p.d_in));
    w.u32(static_cast<uint32_t>(p.d_h));
    for (double v : p.w1) w.f32(static_cast<float>(v));
    for (double v : p.b1) w.f32(static_cast<float>(v));
    for (double v : p.w2) w.f32(static_cast<float>(v));
    w.f32(static_cast<float>(p.b2));
    write_file(path, w.data());
}

inline MLPParams load_mlp(const std::string& path) {
    const std::string body = read_file(path);
    ByteReader r(body, path);
    if (r.remaining() < 4 || r.raw(4) != kMlpMagic)
        throw data_error("bad_magic", path + ": not an MLPH model file");
    const uint16_t version = r.u16();
    if (version != kMlpVersion)
        throw data_error("bad_version", path + ": unsupported MLPH version " + std::to_string(version));
    const size_t d_in = r.u32();
    const size_t d_h = r.u32();
    if (d_in == 0 || d_h == 0) throw data_error("bad_dim", path + ": zero model dimension");
    MLPParams p = MLPParams::zeros(d_in, d_h);
    for (auto& v : p.w1) v = r.f32();
    for (auto& v : p.b1) v = r.f32();
    for (auto& v : p.w2) v = r.f32();
    p.b2 = r.f32();
    r.expect_exhausted();
    auto check = [&](double v) {
        if (!std::isfinite(v)) throw data_error("non_finite", path + ": non-finite parameter");
    };
    for (double v : p.w1) check(v);
    for (double v : p.b1) check(v);
    for (double v : p.w2) check(v);
    check(p.b2);
    return p;
}

// Round-trips parameters through the float32 on-disk precision without
// touching the filesystem; used to evaluate exactly what a saved model
// will predict.
inline MLPParams quantize_to_file_precision(const MLPParams& p) {
    MLPParams q = p;
    for (auto& v : q.w1) v = static_cast<double>(static_cast<float>(v));
    for (auto& v : q.b1) v = static_cast<double>(static_cast<float>(v));
    for (auto& v : q.w2) v = static_cast<double>(static_cast<float>(v));
    q.b2 = static_cast<double>(static_cast<float>(q.b2));
    return q;
}

}  // namespace clsboost
