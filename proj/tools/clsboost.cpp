// clsboost command-line driver.
//
// Subcommands: prep, embed-stub, train-head, train-gbdt, hpo, predict, eval,
// synth. Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
// failure. Failures print a single JSON object to stderr:
//   {"error":{"code":"...","message":"...","stage":"..."}}

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clsboost/pipeline.hpp"

namespace {

using namespace clsboost;

nlohmann::json load_json_file(const std::string& path, const std::string& what) {
    const std::string body = read_file(path);
    try {
        return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("bad_json", what + " " + path + ": " + e.what());
    }
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
    write_file(path, j.dump(2) + "\n");
}

struct PrepFlags {
    bool no_clean = false;
    bool no_stopwords = false;
    std::string stoplist;

    PrepOptions options() const {
        PrepOptions opts;
        opts.clean = !no_clean;
        opts.stopwords = !no_stopwords;
        if (!stoplist.empty()) opts.custom_stoplist = load_stoplist(stoplist);
        return opts;
    }

    void attach(CLI::App* cmd) {
        cmd->add_flag("--no-clean", no_clean, "skip text cleaning");
        cmd->add_flag("--no-stopwords", no_stopwords, "skip stopword removal");
        cmd->add_option("--stoplist", stoplist, "stoplist file (one lowercase word per line)");
    }
};

// Shared loader for the embedding+labels pairs the training and hpo
// subcommands consume.
struct LabeledEmbeddings {
    std::vector<Record> records;
    std::vector<int> labels;
    EmbeddingMatrix X;
};

LabeledEmbeddings load_labeled(const std::string& emb_path, const std::string& labels_path,
                               bool header) {
    LabeledEmbeddings out;
    out.records = run_stage("load", [&] { return load_dataset(labels_path, header); });
    out.labels = run_stage("load", [&] { return labels_of(out.records); });
    out.X = run_stage("embed", [&] { return read_embeddings(emb_path); });
    if (out.X.n_rows != out.records.size())
        throw data_error("length_mismatch",
                         "embedding rows (" + std::to_string(out.X.n_rows) + ") vs dataset records (" +
                         std::to_string(out.records.size()) + ")");
    return out;
}

int run_prep(const std::string& in, const std::string& out, bool header, const PrepFlags& flags) {
    const PrepOptions opts = run_stage("prep", [&] { return flags.options(); });
    auto records = run_stage("load", [&] { return load_dataset(in, header); });
    run_stage("prep", [&] {
        for (auto& rec : records) {
            const auto tokens = prep_tokens(rec.text, opts);
            rec.text.clear();
            for (size_t i = 0; i < tokens.size(); ++i) {
                if (i > 0) rec.text += ' ';
                rec.text += tokens[i];
            }
        }
    });
    run_stage("save", [&] { write_dataset(records, out); });
    return 0;
}

int run_embed_stub(const std::string& in, const std::string& out, size_t dim, uint64_t seed,
                   bool header, const PrepFlags& flags) {
    if (dim == 0) throw config_error("bad_config", "--dim must be >= 1");
    const PrepOptions opts = run_stage("prep", [&] { return flags.options(); });
    const auto records = run_stage("load", [&] { return load_dataset(in, header); });
    const StubEmbed stub{dim, seed};
    const EmbeddingMatrix X =
        run_stage("embed", [&] { return stub_embed_records(records, opts, stub); });
    run_stage("save", [&] { write_embeddings(X, out); });
    return 0;
}

int run_train_cmd(ModelKind kind, const std::string& emb, const std::string& labels,
                  const std::string& val_emb, const std::string& val_labels,
                  const std::string& config_path, const std::string& model_out,
                  const std::string& report_out, double threshold, bool standardize,
                  bool header) {
    if (val_emb.empty() != val_labels.empty())
        throw usage_error("bad_usage", "--val-emb and --val-labels must be given together");
    const LabeledEmbeddings train = load_labeled(emb, labels, header);
    LabeledEmbeddings val;
    if (!val_emb.empty()) val = load_labeled(val_emb, val_labels, header);
    nlohmann::json model_config = nlohmann::json::object();
    if (!config_path.empty())
        model_config = run_stage("config", [&] { return load_json_file(config_path, "config"); });
    const uint64_t default_seed = kind == ModelKind::gbdt ? GBDTConfig{}.seed : MLPConfig{}.seed;
    const TrainOutcome outcome =
        train_on_embeddings(kind, model_config, default_seed, train.X, train.labels, val.X,
                            val.labels, threshold, standardize, model_out);
    if (!report_out.empty()) run_stage("save", [&] { write_json_file(outcome.report, report_out); });
    if (outcome.has_val) std::cout << format_eval_line(outcome.val_confusion) << "\n";
    return 0;
}

int run_hpo(const std::string& train_emb, const std::string& train_labels,
            const std::string& val_emb, const std::string& val_labels, size_t trials,
            uint64_t seed, const std::string& space_path, const std::string& config_path,
            const std::string& prune_mode, size_t checkpoint_every, const std::string& out,
            const std::string& best_config_out, bool header) {
    const LabeledEmbeddings train = load_labeled(train_emb, train_labels, header);
    const LabeledEmbeddings val = load_labeled(val_emb, val_labels, header);

    std::vector<ParamSpec> space = default_gbdt_space();
    if (!space_path.empty())
        space = run_stage("config",
                          [&] { return space_from_json(load_json_file(space_path, "space")); });
    GBDTConfig base;
    if (!config_path.empty())
        base = run_stage("config",
                         [&] { return gbdt_config_from_json(load_json_file(config_path, "config")); });

    PruneConfig prune;
    if (prune_mode == "median")
        prune = PruneConfig::median();
    else if (prune_mode != "off")
        throw usage_error("bad_usage", "--prune must be \"median\" or \"off\"");

    const Objective objective =
        make_gbdt_objective(train.X, train.labels, val.X, val.labels, base, checkpoint_every);
    const Study study =
        run_stage("hpo", [&] { return run_study(objective, space, trials, seed, prune); });
    run_stage("save", [&] { write_study_log(study, out); });

    if (study.best_trial) {
        const Trial& best = study.best();
        if (!best_config_out.empty()) {
            const GBDTConfig best_cfg = apply_params(base, best.params);
            run_stage("save", [&] { write_json_file(gbdt_config_to_json(best_cfg), best_config_out); });
        }
        std::cout << "best_trial=" << *study.best_trial << " objective="
                  << format_double(*best.objective) << "\n";
    } else {
        std::cout << "best_trial=none\n";
    }
    return 0;
}

int run_predict_cmd(const std::string& model, const std::string& data, const std::string& emb,
                    bool use_stub, size_t stub_dim, uint64_t stub_seed, double threshold,
                    const std::string& out, bool header, const PrepFlags& flags) {
    if (emb.empty() == !use_stub)
        throw usage_error("bad_usage", "give exactly one feature source: --emb FILE or --stub");
    const auto records = run_stage("load", [&] { return load_dataset(data, header); });
    EmbeddingMatrix X;
    if (!emb.empty()) {
        X = run_stage("embed", [&] { return read_embeddings(emb); });
        if (X.n_rows != records.size())
            throw data_error("length_mismatch",
                             "embedding rows (" + std::to_string(X.n_rows) + ") vs dataset records (" +
                             std::to_string(records.size()) + ")");
    } else {
        if (stub_dim == 0) throw config_error("bad_config", "--stub-dim must be >= 1");
        const PrepOptions opts = run_stage("prep", [&] { return flags.options(); });
        const StubEmbed stub{stub_dim, stub_seed};
        X = run_stage("embed", [&] { return stub_embed_records(records, opts, stub); });
    }
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw config_error("bad_config", "--threshold must be in [0,1]");
    const auto preds = run_predict(model, records, X, threshold);
    run_stage("save", [&] { write_predictions(preds, out); });
    return 0;
}

int run_eval_cmd(const std::string& pred_path, const std::string& gold_path,
                 const std::string& report_out, bool header) {
    const auto preds = run_stage("load", [&] { return load_predictions(pred_path); });
    const auto gold = run_stage("load", [&] { return load_dataset(gold_path, header); });
    const EvalOutcome outcome = run_stage("eval", [&] { return run_eval(preds, gold); });
    if (!report_out.empty()) run_stage("save", [&] { write_json_file(outcome.report, report_out); });
    std::cout << outcome.line << "\n";
    return 0;
}

int run_synth(const std::string& out_dir, size_t n_train, size_t n_val, size_t n_test,
              double positive_rate, uint64_t seed) {
    SyntheticSpec spec;
    spec.n_train = n_train;
    spec.n_val = n_val;
    spec.n_test = n_test;
    spec.positive_rate = positive_rate;
    spec.seed = seed;
    const SyntheticCorpus corpus = run_stage("synth", [&] { return make_synthetic(spec); });
    run_stage("save", [&] {
        write_dataset(corpus.train, out_dir + "/train.tsv");
        write_dataset(corpus.val, out_dir + "/val.tsv");
        write_dataset(corpus.test, out_dir + "/test.tsv");
    });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "binary text classification: cleaning, hashed stub embeddings, an MLP head or "
        "leaf-wise boosted trees, random-search tuning, and P/R/F1 evaluation"};
    app.require_subcommand(1);
    std::function<int()> action;

    // prep
    {
        auto* cmd = app.add_subcommand("prep", "clean and tokenize a TSV corpus");
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto header = std::make_shared<bool>(false);
        auto flags = std::make_shared<PrepFlags>();
        cmd->add_option("--in", *in, "input TSV (id, text[, label])")->required();
        cmd->add_option("--out", *out, "output TSV")->required();
        cmd->add_flag("--header", *header, "skip the first input line");
        flags->attach(cmd);
        cmd->callback([=, &action] {
            action = [=] { return run_prep(*in, *out, *header, *flags); };
        });
    }

    // embed-stub
    {
        auto* cmd = app.add_subcommand("embed-stub", "hash-embed a TSV corpus into a CLSB file");
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto dim = std::make_shared<size_t>(256);
        auto seed = std::make_shared<uint64_t>(7);
        auto header = std::make_shared<bool>(false);
        auto flags = std::make_shared<PrepFlags>();
        cmd->add_option("--in", *in, "input TSV")->required();
        cmd->add_option("--out", *out, "output CLSB file")->required();
        cmd->add_option("--dim", *dim, "embedding dimension (default 256)");
        cmd->add_option("--seed", *seed, "hash seed (default 7)");
        cmd->add_flag("--header", *header, "skip the first input line");
        flags->attach(cmd);
        cmd->callback([=, &action] {
            action = [=] { return run_embed_stub(*in, *out, *dim, *seed, *header, *flags); };
        });
    }

    // train-head / train-gbdt share their option set
    for (const auto& [name, kind, help] :
         {std::tuple<const char*, ModelKind, const char*>{
              "train-head", ModelKind::mlp, "train the two-layer MLP head on embeddings"},
          std::tuple<const char*, ModelKind, const char*>{
              "train-gbdt", ModelKind::gbdt, "train the boosted-tree classifier on embeddings"}}) {
        auto* cmd = app.add_subcommand(name, help);
        auto emb = std::make_shared<std::string>();
        auto labels = std::make_shared<std::string>();
        auto val_emb = std::make_shared<std::string>();
        auto val_labels = std::make_shared<std::string>();
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        auto threshold = std::make_shared<double>(0.5);
        auto standardize = std::make_shared<bool>(false);
        auto header = std::make_shared<bool>(false);
        const ModelKind k = kind;
        cmd->add_option("--emb", *emb, "training embeddings (CLSB)")->required();
        cmd->add_option("--labels", *labels, "training labels TSV (id, text, label)")->required();
        cmd->add_option("--val-emb", *val_emb, "validation embeddings (CLSB)");
        cmd->add_option("--val-labels", *val_labels, "validation labels TSV");
        cmd->add_option("--config", *config, "model config JSON file");
        cmd->add_option("--out", *out, "output model file")->required();
        cmd->add_option("--report", *report, "output report JSON file");
        cmd->add_option("--threshold", *threshold, "decision threshold for validation metrics");
        cmd->add_flag("--standardize", *standardize, "z-scale features (folded into the saved head)");
        cmd->add_flag("--header", *header, "skip the first line of label TSVs");
        cmd->callback([=, &action] {
            action = [=] {
                return run_train_cmd(k, *emb, *labels, *val_emb, *val_labels, *config, *out,
                                     *report, *threshold, *standardize, *header);
            };
        });
    }

    // hpo
    {
        auto* cmd = app.add_subcommand("hpo", "random-search booster tuning with median pruning");
        auto train_emb = std::make_shared<std::string>();
        auto train_labels = std::make_shared<std::string>();
        auto val_emb = std::make_shared<std::string>();
        auto val_labels = std::make_shared<std::string>();
        auto trials = std::make_shared<size_t>(0);
        auto seed = std::make_shared<uint64_t>(42);
        auto space = std::make_shared<std::string>();
        auto config = std::make_shared<std::string>();
        auto prune = std::make_shared<std::string>("median");
        auto every = std::make_shared<size_t>(10);
        auto out = std::make_shared<std::string>();
        auto best_config = std::make_shared<std::string>();
        auto header = std::make_shared<bool>(false);
        cmd->add_option("--train-emb", *train_emb, "training embeddings (CLSB)")->required();
        cmd->add_option("--train-labels", *train_labels, "training labels TSV")->required();
        cmd->add_option("--val-emb", *val_emb, "validation embeddings (CLSB)")->required();
        cmd->add_option("--val-labels", *val_labels, "validation labels TSV")->required();
        cmd->add_option("--trials", *trials, "number of trials")->required();
        cmd->add_option("--seed", *seed, "study seed (default 42)");
        cmd->add_option("--space", *space, "search space JSON file (default: built-in booster space)");
        cmd->add_option("--config", *config, "base booster config JSON file");
        cmd->add_option("--prune", *prune, "median | off (default median)");
        cmd->add_option("--checkpoint-every", *every, "boosting iterations per checkpoint (default 10)");
        cmd->add_option("--out", *out, "output study log (NDJSON)")->required();
        cmd->add_option("--best-config", *best_config, "write the best trial's booster config JSON here");
        cmd->add_flag("--header", *header, "skip the first line of label TSVs");
        cmd->callback([=, &action] {
            action = [=] {
                return run_hpo(*train_emb, *train_labels, *val_emb, *val_labels, *trials, *seed,
                               *space, *config, *prune, *every, *out, *best_config, *header);
            };
        });
    }

    // predict
    {
        auto* cmd = app.add_subcommand("predict", "score a dataset with a trained model");
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto emb = std::make_shared<std::string>();
        auto use_stub = std::make_shared<bool>(false);
        auto stub_dim = std::make_shared<size_t>(256);
        auto stub_seed = std::make_shared<uint64_t>(7);
        auto threshold = std::make_shared<double>(0.5);
        auto out = std::make_shared<std::string>();
        auto header = std::make_shared<bool>(false);
        auto flags = std::make_shared<PrepFlags>();
        cmd->add_option("--model", *model, "model file (MLPH or GBDT)")->required();
        cmd->add_option("--data", *data, "dataset TSV providing ids (and text for --stub)")->required();
        cmd->add_option("--emb", *emb, "embeddings for the dataset (CLSB)");
        cmd->add_flag("--stub", *use_stub, "hash-embed the dataset text instead of reading --emb");
        cmd->add_option("--stub-dim", *stub_dim, "stub dimension (default 256)");
        cmd->add_option("--stub-seed", *stub_seed, "stub hash seed (default 7)");
        cmd->add_option("--threshold", *threshold, "decision threshold (default 0.5)");
        cmd->add_option("--out", *out, "output predictions TSV")->required();
        cmd->add_flag("--header", *header, "skip the first line of the dataset TSV");
        flags->attach(cmd);
        cmd->callback([=, &action] {
            action = [=] {
                return run_predict_cmd(*model, *data, *emb, *use_stub, *stub_dim, *stub_seed,
                                       *threshold, *out, *header, *flags);
            };
        });
    }

    // eval
    {
        auto* cmd = app.add_subcommand("eval", "compare predictions against gold labels");
        auto pred = std::make_shared<std::string>();
        auto gold = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        auto header = std::make_shared<bool>(false);
        cmd->add_option("--pred", *pred, "predictions TSV (id, probability, label)")->required();
        cmd->add_option("--gold", *gold, "gold dataset TSV (id, text, label)")->required();
        cmd->add_option("--report", *report, "output report JSON file");
        cmd->add_flag("--header", *header, "skip the first line of the gold TSV");
        cmd->callback([=, &action] {
            action = [=] { return run_eval_cmd(*pred, *gold, *report, *header); };
        });
    }

    // synth
    {
        auto* cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
        auto out_dir = std::make_shared<std::string>();
        auto n_train = std::make_shared<size_t>(7600);
        auto n_val = std::make_shared<size_t>(400);
        auto n_test = std::make_shared<size_t>(10000);
        auto rate = std::make_shared<double>(1334.0 / 7600.0);
        auto seed = std::make_shared<uint64_t>(42);
        cmd->add_option("--out-dir", *out_dir, "directory for train.tsv/val.tsv/test.tsv")->required();
        cmd->add_option("--n-train", *n_train, "training samples (default 7600)");
        cmd->add_option("--n-val", *n_val, "validation samples (default 400)");
        cmd->add_option("--n-test", *n_test, "test samples (default 10000)");
        cmd->add_option("--positive-rate", *rate, "positive class rate (default 1334/7600)");
        cmd->add_option("--seed", *seed, "corpus seed (default 42)");
        cmd->callback([=, &action] {
            action = [=] {
                return run_synth(*out_dir, *n_train, *n_val, *n_test, *rate, *seed);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        nlohmann::json j;
        j["error"]["code"] = "usage";
        j["error"]["message"] = e.what();
        std::cerr << j.dump() << "\n";
        return 2;
    }

    try {
        return action ? action() : 2;
    } catch (const Error& e) {
        nlohmann::json j;
        j["error"]["code"] = e.code();
        j["error"]["message"] = e.what();
        if (!e.stage.empty()) j["error"]["stage"] = e.stage;
        std::cerr << j.dump() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        nlohmann::json j;
        j["error"]["code"] = "internal";
        j["error"]["message"] = e.what();
        std::cerr << j.dump() << "\n";
        return 4;
    }
}
