#pragma once

// End-to-end orchestration: JSON configs, text -> tokens -> embeddings ->
// model flows, prediction, evaluation, and the glue that exposes the booster
// to the hpo module. The CLI is a thin shell over the run_* functions here;
// every stage failure is tagged with the stage name before it propagates.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clsboost/common.hpp"
#include "clsboost/dataset.hpp"
#include "clsboost/embedding.hpp"
#include "clsboost/gbdt.hpp"
#include "clsboost/hpo.hpp"
#include "clsboost/metrics.hpp"
#include "clsboost/mlp.hpp"
#include "clsboost/synthetic.hpp"
#include "clsboost/textprep.hpp"

namespace clsboost {

// Tags errors escaping `fn` with a pipeline stage name (first tag wins).
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (Error& e) {
        if (e.stage.empty()) e.stage = name;
        throw;
    }
}

// ---------------------------------------------------------------------------
// JSON config parsing (unknown keys rejected)
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& what) {
    if (!j.is_object()) throw config_error("bad_config", what + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw config_error("unknown_key", what + ": unknown key \"" + it.key() + "\"");
    }
}

inline double get_number(const nlohmann::json& j, const char* key, double fallback,
                         const std::string& what) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number())
        throw config_error("bad_config", what + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

inline uint64_t get_count(const nlohmann::json& j, const char* key, uint64_t fallback,
                          const std::string& what) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0))
        throw config_error("bad_config", what + ": \"" + key + "\" must be a non-negative integer");
    return v.get<uint64_t>();
}

inline bool get_bool(const nlohmann::json& j, const char* key, bool fallback,
                     const std::string& what) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_boolean())
        throw config_error("bad_config", what + ": \"" + key + "\" must be a boolean");
    return v.get<bool>();
}

}  // namespace detail

inline GBDTConfig gbdt_config_from_json(const nlohmann::json& j,
                                        const std::string& what = "gbdt config") {
    detail::reject_unknown_keys(j,
                                {"n_trees", "num_leaves", "min_data_in_leaf", "max_bins",
                                 "learning_rate", "lambda_l2", "feature_fraction",
                                 "bagging_fraction", "scale_pos_weight", "seed",
                                 "early_stopping_rounds"},
                                what);
    GBDTConfig cfg;
    cfg.n_trees = detail::get_count(j, "n_trees", cfg.n_trees, what);
    cfg.num_leaves = detail::get_count(j, "num_leaves", cfg.num_leaves, what);
    cfg.min_data_in_leaf = detail::get_count(j, "min_data_in_leaf", cfg.min_data_in_leaf, what);
    cfg.max_bins = detail::get_count(j, "max_bins", cfg.max_bins, what);
    cfg.learning_rate = detail::get_number(j, "learning_rate", cfg.learning_rate, what);
    cfg.lambda_l2 = detail::get_number(j, "lambda_l2", cfg.lambda_l2, what);
    cfg.feature_fraction = detail::get_number(j, "feature_fraction", cfg.feature_fraction, what);
    cfg.bagging_fraction = detail::get_number(j, "bagging_fraction", cfg.bagging_fraction, what);
    cfg.scale_pos_weight = detail::get_number(j, "scale_pos_weight", cfg.scale_pos_weight, what);
    cfg.seed = detail::get_count(j, "seed", cfg.seed, what);
    cfg.early_stopping_rounds =
        detail::get_count(j, "early_stopping_rounds", cfg.early_stopping_rounds, what);
    cfg.validate();
    return cfg;
}

inline nlohmann::json gbdt_config_to_json(const GBDTConfig& cfg) {
    nlohmann::json j;
    j["n_trees"] = cfg.n_trees;
    j["num_leaves"] = cfg.num_leaves;
    j["min_data_in_leaf"] = cfg.min_data_in_leaf;
    j["max_bins"] = cfg.max_bins;
    j["learning_rate"] = cfg.learning_rate;
    j["lambda_l2"] = cfg.lambda_l2;
    j["feature_fraction"] = cfg.feature_fraction;
    j["bagging_fraction"] = cfg.bagging_fraction;
    j["scale_pos_weight"] = cfg.scale_pos_weight;
    j["seed"] = cfg.seed;
    j["early_stopping_rounds"] = cfg.early_stopping_rounds;
    return j;
}

inline MLPConfig mlp_config_from_json(const nlohmann::json& j,
                                      const std::string& what = "mlp config") {
    detail::reject_unknown_keys(j,
                                {"d_hidden", "epochs", "batch_size", "learning_rate", "beta1",
                                 "beta2", "eps", "val_threshold", "seed"},
                                what);
    MLPConfig cfg;
    cfg.d_hidden = detail::get_count(j, "d_hidden", cfg.d_hidden, what);
    cfg.epochs = detail::get_count(j, "epochs", cfg.epochs, what);
    cfg.batch_size = detail::get_count(j, "batch_size", cfg.batch_size, what);
    cfg.learning_rate = detail::get_number(j, "learning_rate", cfg.learning_rate, what);
    cfg.beta1 = detail::get_number(j, "beta1", cfg.beta1, what);
    cfg.beta2 = detail::get_number(j, "beta2", cfg.beta2, what);
    cfg.eps = detail::get_number(j, "eps", cfg.eps, what);
    cfg.val_threshold = detail::get_number(j, "val_threshold", cfg.val_threshold, what);
    cfg.seed = detail::get_count(j, "seed", cfg.seed, what);
    cfg.validate();
    return cfg;
}

inline nlohmann::json mlp_config_to_json(const MLPConfig& cfg) {
    nlohmann::json j;
    j["d_hidden"] = cfg.d_hidden;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps"] = cfg.eps;
    j["val_threshold"] = cfg.val_threshold;
    j["seed"] = cfg.seed;
    return j;
}

inline std::vector<ParamSpec> space_from_json(const nlohmann::json& j,
                                              const std::string& what = "search space") {
    if (!j.is_array()) throw config_error("bad_space", what + ": expected a JSON array");
    std::vector<ParamSpec> space;
    for (const auto& entry : j) {
        detail::reject_unknown_keys(entry, {"name", "kind", "low", "high", "scale"}, what);
        ParamSpec spec;
        if (!entry.contains("name") || !entry.at("name").is_string())
            throw config_error("bad_space", what + ": parameter entry needs a string \"name\"");
        spec.name = entry.at("name").get<std::string>();
        const std::string kind =
            entry.contains("kind") ? entry.at("kind").get<std::string>() : "float";
        if (kind == "int")
            spec.kind = ParamSpec::Kind::integer;
        else if (kind == "float")
            spec.kind = ParamSpec::Kind::real;
        else
            throw config_error("bad_space", what + ": kind must be \"int\" or \"float\"");
        spec.low = detail::get_number(entry, "low", spec.low, what);
        spec.high = detail::get_number(entry, "high", spec.high, what);
        const std::string scale =
            entry.contains("scale") ? entry.at("scale").get<std::string>() : "linear";
        if (scale == "log")
            spec.scale = ParamSpec::Scale::log;
        else if (scale == "linear")
            spec.scale = ParamSpec::Scale::linear;
        else
            throw config_error("bad_space", what + ": scale must be \"linear\" or \"log\"");
        spec.validate();
        space.push_back(std::move(spec));
    }
    if (space.empty()) throw config_error("bad_space", what + ": empty search space");
    return space;
}

// Overlays sampled hpo parameters onto a base booster config by field name.
inline GBDTConfig apply_params(GBDTConfig cfg, const ParamAssignment& params) {
    for (const auto& [name, value] : params) {
        if (name == "n_trees")
            cfg.n_trees = static_cast<size_t>(std::llround(value));
        else if (name == "num_leaves")
            cfg.num_leaves = static_cast<size_t>(std::llround(value));
        else if (name == "min_data_in_leaf")
            cfg.min_data_in_leaf = static_cast<size_t>(std::llround(value));
        else if (name == "max_bins")
            cfg.max_bins = static_cast<size_t>(std::llround(value));
        else if (name == "early_stopping_rounds")
            cfg.early_stopping_rounds = static_cast<size_t>(std::llround(value));
        else if (name == "learning_rate")
            cfg.learning_rate = value;
        else if (name == "lambda_l2")
            cfg.lambda_l2 = value;
        else if (name == "feature_fraction")
            cfg.feature_fraction = value;
        else if (name == "bagging_fraction")
            cfg.bagging_fraction = value;
        else if (name == "scale_pos_weight")
            cfg.scale_pos_weight = value;
        else if (name == "seed")
            cfg.seed = static_cast<uint64_t>(std::llround(value));
        else
            throw config_error("unknown_param", "no booster field named \"" + name + "\"");
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

struct StubEmbed {
    size_t dim = 256;
    uint64_t seed = 7;
};

struct EmbeddingSource {
    // exactly one of the two is used
    std::optional<StubEmbed> stub;
    std::optional<std::string> file;  // CLSB path (one per dataset; see run_train)
};

enum class ModelKind { mlp, gbdt };

struct PipelineConfig {
    bool clean = true;
    bool stopwords = true;
    std::optional<std::string> stoplist_path;
    EmbeddingSource embedding;  // default: stub
    ModelKind model = ModelKind::gbdt;
    nlohmann::json model_config = nlohmann::json::object();
    double threshold = 0.5;
    bool standardize = false;
    uint64_t seed = 42;

    void validate() const {
        if (embedding.stub && embedding.file)
            throw config_error("bad_config", "embedding source must be stub or file, not both");
        if (!(threshold > 0.0 && threshold < 1.0))
            throw config_error("bad_config", "threshold must be in (0,1)");
    }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                                const std::string& what = "pipeline config") {
    detail::reject_unknown_keys(j,
                                {"clean", "stopwords", "stoplist", "embedding", "model",
                                 "model_config", "threshold", "standardize", "seed"},
                                what);
    PipelineConfig cfg;
    cfg.clean = detail::get_bool(j, "clean", cfg.clean, what);
    cfg.stopwords = detail::get_bool(j, "stopwords", cfg.stopwords, what);
    if (j.contains("stoplist") && !j.at("stoplist").is_null())
        cfg.stoplist_path = j.at("stoplist").get<std::string>();
    if (j.contains("embedding")) {
        const auto& e = j.at("embedding");
        detail::reject_unknown_keys(e, {"stub", "file"}, what);
        if (e.contains("stub") && e.contains("file"))
            throw config_error("bad_config", what + ": embedding source must be stub or file, not both");
        if (e.contains("stub")) {
            const auto& s = e.at("stub");
            detail::reject_unknown_keys(s, {"dim", "seed"}, what);
            StubEmbed stub;
            stub.dim = detail::get_count(s, "dim", stub.dim, what);
            stub.seed = detail::get_count(s, "seed", stub.seed, what);
            if (stub.dim == 0) throw config_error("bad_config", what + ": stub dim must be >= 1");
            cfg.embedding.stub = stub;
        } else if (e.contains("file")) {
            cfg.embedding.file = e.at("file").get<std::string>();
        } else {
            throw config_error("bad_config", what + ": embedding needs \"stub\" or \"file\"");
        }
    }
    if (j.contains("model")) {
        const std::string kind = j.at("model").get<std::string>();
        if (kind == "mlp")
            cfg.model = ModelKind::mlp;
        else if (kind == "gbdt")
            cfg.model = ModelKind::gbdt;
        else
            throw config_error("bad_config", what + ": model must be \"mlp\" or \"gbdt\"");
    }
    if (j.contains("model_config")) cfg.model_config = j.at("model_config");
    cfg.threshold = detail::get_number(j, "threshold", cfg.threshold, what);
    cfg.standardize = detail::get_bool(j, "standardize", cfg.standardize, what);
    cfg.seed = detail::get_count(j, "seed", cfg.seed, what);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Embedding stage
// ---------------------------------------------------------------------------

inline PrepOptions prep_options_from(const PipelineConfig& cfg) {
    PrepOptions opts;
    opts.clean = cfg.clean;
    opts.stopwords = cfg.stopwords;
    if (cfg.stoplist_path) opts.custom_stoplist = load_stoplist(*cfg.stoplist_path);
    return opts;
}

inline EmbeddingMatrix stub_embed_records(std::span<const Record> records,
                                          const PrepOptions& opts, const StubEmbed& stub) {
    EmbeddingMatrix m = EmbeddingMatrix::zeros(records.size(), stub.dim);
    parallel_chunks(records.size(), [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            std::vector<std::string> tokens = prep_tokens(records[i].text, opts);
            const std::vector<float> vec = stub_encode(tokens, stub.dim, stub.seed);
            std::copy(vec.begin(), vec.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * stub.dim));
        }
    });
    return m;
}

// ---------------------------------------------------------------------------
// Training / prediction / evaluation
// ---------------------------------------------------------------------------

struct TrainOutcome {
    nlohmann::json report;
    Confusion val_confusion;  // zero when no validation set
    bool has_val = false;
};

namespace detail {

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  // 1/sd, with sd 0 mapped to 1
};

inline Standardizer fit_standardizer(const EmbeddingMatrix& X) {
    Standardizer s;
    s.mean.assign(X.dim, 0.0);
    s.scale.assign(X.dim, 1.0);
    if (X.n_rows == 0) return s;
    for (size_t r = 0; r < X.n_rows; ++r)
        for (size_t d = 0; d < X.dim; ++d) s.mean[d] += static_cast<double>(X.values[r * X.dim + d]);
    for (auto& v : s.mean) v /= static_cast<double>(X.n_rows);
    std::vector<double> var(X.dim, 0.0);
    for (size_t r = 0; r < X.n_rows; ++r)
        for (size_t d = 0; d < X.dim; ++d) {
            const double c = static_cast<double>(X.values[r * X.dim + d]) - s.mean[d];
            var[d] += c * c;
        }
    for (size_t d = 0; d < X.dim; ++d) {
        const double sd = std::sqrt(var[d] / static_cast<double>(X.n_rows));
        s.scale[d] = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    return s;
}

inline EmbeddingMatrix apply_standardizer(const EmbeddingMatrix& X, const Standardizer& s) {
    EmbeddingMatrix out = X;
    for (size_t r = 0; r < out.n_rows; ++r)
        for (size_t d = 0; d < out.dim; ++d) {
            const size_t i = r * out.dim + d;
            out.values[i] = static_cast<float>(
                (static_cast<double>(out.values[i]) - s.mean[d]) * s.scale[d]);
        }
    return out;
}

// Rewrites first-layer weights so the saved model consumes raw inputs:
// w1'[i][j] = w1[i][j]*scale[i], b1'[j] = b1[j] - sum_i w1[i][j]*scale[i]*mean[i].
inline MLPParams fold_standardizer(const MLPParams& p, const Standardizer& s) {
    MLPParams out = p;
    for (size_t j = 0; j < p.d_h; ++j) {
        double shift = 0.0;
        for (size_t i = 0; i < p.d_in; ++i) {
            const double w = p.w1[i * p.d_h + j] * s.scale[i];
            out.w1[i * p.d_h + j] = w;
            shift += w * s.mean[i];
        }
        out.b1[j] = p.b1[j] - shift;
    }
    return out;
}

inline nlohmann::json metrics_json(const Confusion& c) {
    nlohmann::json j;
    j["precision"] = round3(precision(c));
    j["recall"] = round3(recall(c));
    j["f1"] = round3(f1(c));
    j["tp"] = c.tp;
    j["fp"] = c.fp;
    j["fn"] = c.fn;
    j["tn"] = c.tn;
    return j;
}

}  // namespace detail

// Loads a model file by magic and returns per-row probabilities.
inline std::vector<double> predict_with_model_file(const std::string& model_path,
                                                   const EmbeddingMatrix& X) {
    const std::string head = read_file(model_path).substr(0, 4);
    if (head == kMlpMagic) {
        const MLPParams params = load_mlp(model_path);
        return predict_mlp(params, X);
    }
    if (head == kGbdtMagic) {
        const GBDTModel model = load_gbdt(model_path);
        return predict_gbdt(model, X);
    }
    throw data_error("bad_magic", model_path + ": unknown model file magic");
}

inline std::vector<Prediction> make_predictions(std::span<const Record> records,
                                                std::span<const double> probs, double threshold) {
    if (records.size() != probs.size())
        throw data_error("length_mismatch", "records vs probabilities length mismatch");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw config_error("bad_config", "threshold must be in [0,1]");
    std::vector<Prediction> preds(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        preds[i].id = records[i].id;
        preds[i].prob = probs[i];
        preds[i].label = probs[i] > threshold ? 1 : 0;
    }
    return preds;
}

// Trains either model kind on ready-made embeddings, saves the model file,
// and builds the JSON report. Validation metrics are computed through the
// saved model file so they match a later predict+eval exactly. Both the
// text-to-model run_train flow and the embedding-level CLI subcommands end
// up here, which keeps their artifacts byte-identical.
inline TrainOutcome train_on_embeddings(ModelKind kind, nlohmann::json model_config,
                                        uint64_t default_seed, const EmbeddingMatrix& X,
                                        std::span<const int> y, const EmbeddingMatrix& Xval,
                                        std::span<const int> yval, double threshold,
                                        bool standardize, const std::string& model_out) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw config_error("bad_config", "threshold must be in (0,1)");
    const bool has_val = Xval.n_rows > 0;
    if (!model_config.is_object())
        throw config_error("bad_config", "model config must be a JSON object");
    if (!model_config.contains("seed")) model_config["seed"] = default_seed;

    TrainOutcome out;
    out.has_val = has_val;
    nlohmann::json& report = out.report;
    report["threshold"] = threshold;
    report["standardize"] = standardize;
    report["n_train"] = X.n_rows;
    report["n_val"] = Xval.n_rows;
    report["dim"] = X.dim;

    if (kind == ModelKind::gbdt) {
        const GBDTConfig gcfg =
            run_stage("config", [&] { return gbdt_config_from_json(model_config); });
        // Per-feature standardization is strictly increasing, which the
        // binning is invariant under, so the booster trains on raw values.
        const GBDTTrainResult res = run_stage("train", [&] {
            return train_gbdt(X, y, gcfg, has_val ? &Xval : nullptr, yval);
        });
        run_stage("save", [&] { save_gbdt(res.model, model_out); });
        report["model"] = "gbdt";
        report["config"] = gbdt_config_to_json(gcfg);
        report["history"]["train_loss"] = res.train_loss;
        if (has_val) report["history"]["val_loss"] = res.val_loss;
        report["n_trees_kept"] = res.model.trees.size();
    } else {
        const MLPConfig mcfg =
            run_stage("config", [&] { return mlp_config_from_json(model_config); });
        detail::Standardizer scaler;
        EmbeddingMatrix Xs, Xvs;
        const EmbeddingMatrix* train_ptr = &X;
        const EmbeddingMatrix* val_ptr = &Xval;
        if (standardize) {
            scaler = detail::fit_standardizer(X);
            Xs = detail::apply_standardizer(X, scaler);
            train_ptr = &Xs;
            if (has_val) {
                Xvs = detail::apply_standardizer(Xval, scaler);
                val_ptr = &Xvs;
            }
        }
        TrainHeadResult res = run_stage("train", [&] {
            return train_head(*train_ptr, y, *val_ptr, yval, mcfg);
        });
        if (standardize) res.params = detail::fold_standardizer(res.params, scaler);
        run_stage("save", [&] { save_mlp(res.params, model_out); });
        report["model"] = "mlp";
        report["config"] = mlp_config_to_json(mcfg);
        report["history"]["train_loss"] = res.history.train_loss;
        if (has_val) {
            report["history"]["val_f1"] = res.history.val_f1;
            report["best_epoch"] = res.best_epoch;
        }
    }

    if (has_val) {
        const auto probs =
            run_stage("validate", [&] { return predict_with_model_file(model_out, Xval); });
        std::vector<int> pred_labels(probs.size());
        for (size_t i = 0; i < probs.size(); ++i)
            pred_labels[i] = probs[i] > threshold ? 1 : 0;
        out.val_confusion = confusion(yval, pred_labels);
        report["validation"] = detail::metrics_json(out.val_confusion);
    }
    return out;
}

// Full text -> tokens -> embeddings -> model flow. `val_tsv` may be empty;
// the report then carries no validation block.
inline TrainOutcome run_train(const PipelineConfig& cfg, const std::string& train_tsv,
                              const std::string& val_tsv, const std::string& model_out,
                              const std::string& val_emb_file = "") {
    cfg.validate();
    const auto records = run_stage("load", [&] { return load_dataset(train_tsv); });
    const bool has_val = !val_tsv.empty();
    const auto val_records =
        run_stage("load", [&] { return has_val ? load_dataset(val_tsv) : std::vector<Record>{}; });
    const auto y = run_stage("load", [&] { return labels_of(records); });
    const auto yval = run_stage("load", [&] { return labels_of(val_records); });

    EmbeddingMatrix X, Xval;
    if (cfg.embedding.file) {
        X = run_stage("embed", [&] { return read_embeddings(*cfg.embedding.file); });
        if (has_val) {
            if (val_emb_file.empty())
                throw config_error("bad_config", "file embedding source needs a validation embedding file");
            Xval = run_stage("embed", [&] { return read_embeddings(val_emb_file); });
        }
        if (X.n_rows != records.size())
            throw data_error("length_mismatch",
                             "embedding rows (" + std::to_string(X.n_rows) + ") vs dataset records (" +
                             std::to_string(records.size()) + ")");
        if (has_val && Xval.n_rows != val_records.size())
            throw data_error("length_mismatch", "validation embedding rows vs records mismatch");
    } else {
        const StubEmbed stub = cfg.embedding.stub.value_or(StubEmbed{});
        const PrepOptions opts = run_stage("prep", [&] { return prep_options_from(cfg); });
        X = run_stage("embed", [&] { return stub_embed_records(records, opts, stub); });
        if (has_val)
            Xval = run_stage("embed", [&] { return stub_embed_records(val_records, opts, stub); });
    }

    TrainOutcome out = train_on_embeddings(cfg.model, cfg.model_config, cfg.seed, X, y, Xval,
                                           yval, cfg.threshold, cfg.standardize, model_out);
    out.report["seed"] = cfg.seed;
    return out;
}

// Embeds records per the config's source (stub preps text; file loads CLSB).
inline EmbeddingMatrix embed_for_predict(const PipelineConfig& cfg,
                                         std::span<const Record> records,
                                         const std::string& emb_file) {
    if (!emb_file.empty()) {
        EmbeddingMatrix X = run_stage("embed", [&] { return read_embeddings(emb_file); });
        if (X.n_rows != records.size())
            throw data_error("length_mismatch",
                             "embedding rows (" + std::to_string(X.n_rows) + ") vs dataset records (" +
                             std::to_string(records.size()) + ")");
        return X;
    }
    const StubEmbed stub = cfg.embedding.stub.value_or(StubEmbed{});
    const PrepOptions opts = run_stage("prep", [&] { return prep_options_from(cfg); });
    return run_stage("embed", [&] { return stub_embed_records(records, opts, stub); });
}

inline std::vector<Prediction> run_predict(const std::string& model_path,
                                           std::span<const Record> records,
                                           const EmbeddingMatrix& X, double threshold) {
    const auto probs = run_stage("predict", [&] { return predict_with_model_file(model_path, X); });
    return run_stage("predict", [&] { return make_predictions(records, probs, threshold); });
}

struct EvalOutcome {
    Confusion confusion;
    nlohmann::json report;
    std::string line;  // fixed-order text report
};

// Joins predictions onto gold labels by id; every gold id must be predicted.
inline EvalOutcome run_eval(std::span<const Prediction> preds, std::span<const Record> gold) {
    std::unordered_map<std::string, int> by_id;
    by_id.reserve(preds.size());
    for (const auto& p : preds)
        if (!by_id.emplace(p.id, p.label).second)
            throw data_error("duplicate_id", "duplicate prediction for id \"" + p.id + "\"");
    std::vector<int> y_true, y_pred;
    y_true.reserve(gold.size());
    y_pred.reserve(gold.size());
    std::unordered_set<std::string> seen;
    seen.reserve(gold.size());
    for (const auto& rec : gold) {
        if (!rec.label)
            throw data_error("missing_label", "gold record \"" + rec.id + "\" has no label");
        if (!seen.insert(rec.id).second)
            throw data_error("duplicate_id", "duplicate gold id \"" + rec.id + "\"");
        const auto it = by_id.find(rec.id);
        if (it == by_id.end())
            throw data_error("missing_prediction", "no prediction for gold id \"" + rec.id + "\"");
        y_true.push_back(*rec.label);
        y_pred.push_back(it->second);
    }
    EvalOutcome out;
    out.confusion = confusion(y_true, y_pred);
    out.report = detail::metrics_json(out.confusion);
    out.line = format_eval_line(out.confusion);
    return out;
}

// ---------------------------------------------------------------------------
// Booster objective for hpo
// ---------------------------------------------------------------------------

// Objective = validation F1 at threshold 0.5 (maximized). Checkpoints are
// negated validation losses every `checkpoint_every` iterations, making them
// higher-is-better as the pruner expects. Data must outlive the objective.
inline Objective make_gbdt_objective(const EmbeddingMatrix& X, std::span<const int> y,
                                     const EmbeddingMatrix& Xval, std::span<const int> yval,
                                     GBDTConfig base, size_t checkpoint_every = 10) {
    if (checkpoint_every < 1)
        throw config_error("bad_config", "checkpoint_every must be >= 1");
    return [&X, y, &Xval, yval, base, checkpoint_every](const ParamAssignment& params,
                                                        TrialReporter& reporter) {
        const GBDTConfig cfg = apply_params(base, params);
        const GBDTTrainResult res = train_gbdt(
            X, y, cfg, &Xval, yval, [&](size_t iter, double val_loss) {
                if ((iter + 1) % checkpoint_every == 0) reporter.report(-val_loss);
            });
        const std::vector<double> probs = predict_gbdt(res.model, Xval);
        std::vector<int> pred_labels(probs.size());
        for (size_t i = 0; i < probs.size(); ++i) pred_labels[i] = probs[i] > 0.5 ? 1 : 0;
        return f1(confusion(yval, pred_labels));
    };
}

}  // namespace clsboost
