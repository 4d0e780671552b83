#pragma once

// Binary-classification evaluation: confusion counts, precision, recall, F1.
// Positive class is label 1. Degenerate 0/0 ratios are defined as 0, the
// convention used by common shared-task scorers.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "clsboost/common.hpp"

namespace clsboost {

struct Confusion {
    uint64_t tp = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;
    uint64_t tn = 0;

    uint64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const Confusion&) const = default;
};

inline Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size())
        throw data_error("length_mismatch",
                         "confusion: " + std::to_string(y_true.size()) + " gold labels vs " +
                         std::to_string(y_pred.size()) + " predictions");
    Confusion c;
    for (size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1))
            throw data_error("bad_label", "confusion: labels must be 0 or 1");
        if (t == 1)
            p == 1 ? ++c.tp : ++c.fn;
        else
            p == 1 ? ++c.fp : ++c.tn;
    }
    return c;
}

inline double precision(const Confusion& c) {
    const uint64_t d = c.tp + c.fp;
    return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double recall(const Confusion& c) {
    const uint64_t d = c.tp + c.fn;
    return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double f1_from_pr(double p, double r) {
    const double d = p + r;
    return d == 0.0 ? 0.0 : 2.0 * p * r / d;
}

inline double f1(const Confusion& c) { return f1_from_pr(precision(c), recall(c)); }

// Round half-up to 3 decimals; reported metrics use this presentation.
inline double round3(double x) {
    return std::floor(x * 1000.0 + 0.5) / 1000.0;
}

// Fixed-order report line used by the eval CLI.
inline std::string format_eval_line(const Confusion& c) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "precision=%.3f recall=%.3f f1=%.3f tp=%llu fp=%llu fn=%llu tn=%llu",
                  round3(precision(c)), round3(recall(c)), round3(f1(c)),
                  static_cast<unsigned long long>(c.tp), static_cast<unsigned long long>(c.fp),
                  static_cast<unsigned long long>(c.fn), static_cast<unsigned long long>(c.tn));
    return std::string(buf);
}

}  // namespace clsboost
