#pragma once

// Seeded random-search hyperparameter optimization with median pruning.
//
// Each trial draws its parameters from Rng(derive_seed(study_seed, trial_id)),
// so trial t is reproducible in isolation and the study is deterministic as a
// whole. The objective maximizes its final return value (validation F1 in the
// boosting pipeline) and may report intermediate checkpoint values through a
// TrialReporter; checkpoint values are higher-is-better. With median pruning
// on, a trial stops as soon as one of its checkpoint values falls strictly
// below the median of the values that previously *completed* trials reported
// at the same checkpoint index — but only once at least five trials have
// completed.
//
// Study log: newline-delimited JSON. The first record identifies the study
// ({"type":"study","seed":S}); every following record is one trial with its
// id, params, status, checkpoints, and objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clsboost/common.hpp"

namespace clsboost {

struct ParamSpec {
    enum class Kind { integer, real };
    enum class Scale { linear, log };

    std::string name;
    Kind kind = Kind::real;
    double low = 0.0;
    double high = 1.0;
    Scale scale = Scale::linear;

    void validate() const {
        if (name.empty()) throw config_error("bad_space", "parameter with empty name");
        if (!std::isfinite(low) || !std::isfinite(high) || !(low < high))
            throw config_error("bad_space", "parameter \"" + name + "\": low must be < high");
        if (scale == Scale::log && !(low > 0.0))
            throw config_error("bad_space", "parameter \"" + name + "\": log scale requires low > 0");
    }
};

// Sampled values keyed by parameter name, kept sorted by name.
using ParamAssignment = std::vector<std::pair<std::string, double>>;

inline double param_value(const ParamAssignment& params, const std::string& name) {
    for (const auto& [k, v] : params)
        if (k == name) return v;
    throw config_error("unknown_param", "no sampled value for parameter \"" + name + "\"");
}

// Draws each parameter independently, uniform on its (log-transformed) range,
// consuming the rng in space order; integers round then clamp.
inline ParamAssignment sample(const std::vector<ParamSpec>& space, Rng& rng) {
    ParamAssignment out;
    out.reserve(space.size());
    for (const auto& spec : space) {
        spec.validate();
        double v;
        if (spec.scale == ParamSpec::Scale::log)
            v = std::exp(rng.uniform(std::log(spec.low), std::log(spec.high)));
        else
            v = rng.uniform(spec.low, spec.high);
        if (spec.kind == ParamSpec::Kind::integer) {
            double r = static_cast<double>(std::llround(v));
            r = std::clamp(r, std::ceil(spec.low), std::floor(spec.high));
            v = r;
        }
        out.emplace_back(spec.name, v);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

struct Trial {
    enum class Status { completed, pruned, failed };

    uint64_t id = 0;
    ParamAssignment params;
    Status status = Status::failed;
    std::vector<double> checkpoints;
    std::optional<double> objective;  // set iff completed

    bool operator==(const Trial&) const = default;
};

struct Study {
    uint64_t seed = 0;
    std::vector<Trial> trials;
    std::optional<uint64_t> best_trial;  // id of the completed trial with max objective

    const Trial& best() const {
        if (!best_trial) throw data_error("no_best_trial", "study has no completed trial");
        for (const auto& t : trials)
            if (t.id == *best_trial) return t;
        throw data_error("no_best_trial", "study best trial id not found");
    }

    bool operator==(const Study&) const = default;
};

struct PruneConfig {
    enum class Mode { off, median };
    Mode mode = Mode::off;
    size_t warmup_checkpoints = 0;      // no pruning before this checkpoint index
    size_t min_completed_trials = 5;    // no pruning before this many trials completed

    static PruneConfig off() { return {}; }
    static PruneConfig median(size_t warmup = 0) {
        return {Mode::median, warmup, 5};
    }
};

// Thrown through the objective to abort a pruned trial; deliberately not a
// std::exception so an objective's own error handling cannot swallow it.
struct PrunedSignal {};

class TrialReporter {
  public:
    TrialReporter(const std::vector<Trial>& prior, const PruneConfig& prune,
                  std::vector<double>& sink)
        : prior_(prior), prune_(prune), sink_(sink) {}

    // Records one checkpoint value (higher is better). Throws PrunedSignal if
    // the value falls strictly below the median of completed trials' values
    // at this checkpoint index.
    void report(double value) {
        const size_t index = sink_.size();
        sink_.push_back(value);
        if (prune_.mode != PruneConfig::Mode::median) return;
        if (index < prune_.warmup_checkpoints) return;
        std::vector<double> peers;
        size_t completed = 0;
        for (const auto& t : prior_) {
            if (t.status != Trial::Status::completed) continue;
            ++completed;
            if (t.checkpoints.size() > index) peers.push_back(t.checkpoints[index]);
        }
        if (completed < prune_.min_completed_trials || peers.empty()) return;
        std::sort(peers.begin(), peers.end());
        const size_t n = peers.size();
        const double median = n % 2 == 1 ? peers[n / 2] : 0.5 * (peers[n / 2 - 1] + peers[n / 2]);
        if (value < median) throw PrunedSignal{};
    }

  private:
    const std::vector<Trial>& prior_;
    const PruneConfig& prune_;
    std::vector<double>& sink_;
};

using Objective = std::function<double(const ParamAssignment&, TrialReporter&)>;

// Runs n_trials in order. A throwing objective marks its trial failed and the
// study continues; the best trial is the completed one with the maximum
// objective, earliest id on ties.
inline Study run_study(const Objective& objective, const std::vector<ParamSpec>& space,
                       size_t n_trials, uint64_t seed, const PruneConfig& prune = {}) {
    if (n_trials < 1) throw config_error("bad_config", "n_trials must be >= 1");
    for (const auto& spec : space) spec.validate();
    Study study;
    study.seed = seed;
    for (size_t t = 0; t < n_trials; ++t) {
        Rng rng(derive_seed(seed, t));
        Trial trial;
        trial.id = t;
        trial.params = sample(space, rng);
        TrialReporter reporter(study.trials, prune, trial.checkpoints);
        try {
            const double obj = objective(trial.params, reporter);
            if (!std::isfinite(obj))
                throw numeric_error("non_finite_objective", "objective returned a non-finite value");
            trial.status = Trial::Status::completed;
            trial.objective = obj;
        } catch (const PrunedSignal&) {
            trial.status = Trial::Status::pruned;
        } catch (const std::exception&) {
            trial.status = Trial::Status::failed;
        }
        if (trial.status == Trial::Status::completed) {
            if (!study.best_trial || *trial.objective > *study.best().objective)
                study.best_trial = trial.id;
        }
        study.trials.push_back(std::move(trial));
    }
    return study;
}

// ---------------------------------------------------------------------------
// Study log IO (NDJSON)
// ---------------------------------------------------------------------------

namespace detail {

inline const char* status_name(Trial::Status s) {
    switch (s) {
        case Trial::Status::completed: return "completed";
        case Trial::Status::pruned: return "pruned";
        case Trial::Status::failed: return "failed";
    }
    return "failed";
}

inline Trial::Status status_from_name(const std::string& s, const std::string& what) {
    if (s == "completed") return Trial::Status::completed;
    if (s == "pruned") return Trial::Status::pruned;
    if (s == "failed") return Trial::Status::failed;
    throw data_error("bad_study_log", what + ": unknown trial status \"" + s + "\"");
}

}  // namespace detail

inline std::string study_to_ndjson(const Study& study) {
    std::string out;
    {
        nlohmann::json rec;
        rec["type"] = "study";
        rec["seed"] = study.seed;
        out += rec.dump();
        out += '\n';
    }
    for (const auto& t : study.trials) {
        nlohmann::json rec;
        rec["type"] = "trial";
        rec["id"] = t.id;
        nlohmann::json params = nlohmann::json::object();
        for (const auto& [k, v] : t.params) params[k] = v;
        rec["params"] = params;
        rec["status"] = detail::status_name(t.status);
        rec["checkpoints"] = t.checkpoints;
        if (t.objective)
            rec["objective"] = *t.objective;
        else
            rec["objective"] = nullptr;
        out += rec.dump();
        out += '\n';
    }
    return out;
}

inline void write_study_log(const Study& study, const std::string& path) {
    write_file(path, study_to_ndjson(study));
}

inline Study study_from_ndjson(std::string_view body, const std::string& what) {
    Study study;
    size_t lineno = 0;
    bool saw_header = false;
    size_t start = 0;
    while (start < body.size()) {
        size_t end = body.find('\n', start);
        if (end == std::string_view::npos) end = body.size();
        std::string_view line = body.substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("bad_study_log", what + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            const std::string type = rec.at("type").get<std::string>();
            if (type == "study") {
                if (saw_header)
                    throw data_error("bad_study_log", what + ": duplicate study record");
                study.seed = rec.at("seed").get<uint64_t>();
                saw_header = true;
            } else if (type == "trial") {
                if (!saw_header)
                    throw data_error("bad_study_log", what + ": trial record before study record");
                Trial t;
                t.id = rec.at("id").get<uint64_t>();
                for (const auto& [k, v] : rec.at("params").items())
                    t.params.emplace_back(k, v.get<double>());
                std::sort(t.params.begin(), t.params.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                t.status = detail::status_from_name(rec.at("status").get<std::string>(), what);
                t.checkpoints = rec.at("checkpoints").get<std::vector<double>>();
                const auto& obj = rec.at("objective");
                if (t.status == Trial::Status::completed) {
                    if (obj.is_null())
                        throw data_error("bad_study_log", what + ": completed trial without objective");
                    t.objective = obj.get<double>();
                } else if (!obj.is_null()) {
                    throw data_error("bad_study_log", what + ": objective on a non-completed trial");
                }
                if (t.status == Trial::Status::completed &&
                    (!study.best_trial ||
                     *t.objective > *study.best().objective))
                    study.best_trial = t.id;
                study.trials.push_back(std::move(t));
            } else {
                throw data_error("bad_study_log", what + ": unknown record type \"" + type + "\"");
            }
        } catch (const nlohmann::json::exception& e) {
            throw data_error("bad_study_log", what + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!saw_header) throw data_error("bad_study_log", what + ": missing study record");
    return study;
}

inline Study read_study_log(const std::string& path) {
    return study_from_ndjson(read_file(path), path);
}

// Search space used by the boosting pipeline when no space file is given.
inline std::vector<ParamSpec> default_gbdt_space() {
    using K = ParamSpec::Kind;
    using S = ParamSpec::Scale;
    return {
        {"num_leaves", K::integer, 4, 128, S::log},
        {"learning_rate", K::real, 1e-3, 0.3, S::log},
        {"n_trees", K::integer, 50, 500, S::linear},
        {"min_data_in_leaf", K::integer, 5, 100, S::log},
        {"lambda_l2", K::real, 1e-3, 10, S::log},
        {"feature_fraction", K::real, 0.5, 1, S::linear},
        {"bagging_fraction", K::real, 0.5, 1, S::linear},
    };
}

}  // namespace clsboost
