#pragma once

// Seeded synthetic corpus generator for end-to-end runs and acceptance tests.
//
// Every sample is a bag of noise tokens; positives additionally carry 2-3
// signal-vocabulary tokens with probability 0.97, negatives carry exactly one
// with probability 0.03. Counting signal tokens therefore separates the
// classes (the threshold "two or more" errs only on the 3% tails), putting
// the Bayes F1 near 0.985. Documents are kept short (4-7 noise tokens) and
// the vocabularies small so that the hashed stub embedding, whose random
// unigram/bigram buckets pollute each other more the longer the document,
// still exposes the signal cleanly enough for a trained model to clear 0.9.
// Class counts are exact: round(n * positive_rate) positives per split.

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "clsboost/common.hpp"
#include "clsboost/textprep.hpp"

namespace clsboost {

struct SyntheticSpec {
    size_t n_train = 7600;
    size_t n_val = 400;
    size_t n_test = 10000;
    double positive_rate = 1334.0 / 7600.0;
    uint64_t seed = 42;
    std::vector<std::string> signal_vocab;  // empty -> defaults
    std::vector<std::string> noise_vocab;   // empty -> defaults
};

struct SyntheticCorpus {
    std::vector<Record> train;
    std::vector<Record> val;
    std::vector<Record> test;
};

inline const std::vector<std::string>& default_signal_vocab() {
    static const std::vector<std::string> words = {
        "positive", "tested",   "fever",     "cough",
        "infected", "hospital", "quarantine", "swab",
    };
    return words;
}

inline const std::vector<std::string>& default_noise_vocab() {
    static const std::vector<std::string> words = {
        "morning",  "coffee",   "window",   "garden",   "music",    "river",
        "cloud",    "mountain", "bicycle",  "letter",   "market",   "bridge",
        "stone",    "yellow",   "winter",   "summer",   "evening",  "street",
        "kitchen",  "silver",   "forest",   "camera",   "pocket",   "ticket",
        "bottle",   "orange",   "candle",   "mirror",   "basket",   "jacket",
        "pillow",   "ladder",   "pencil",   "engine",   "lantern",  "rocket",
        "planet",   "meadow",   "valley",   "harbor",
    };
    return words;
}

namespace detail {

inline std::vector<Record> make_split(size_t n, double positive_rate, uint64_t seed,
                                      const std::vector<std::string>& signal,
                                      const std::vector<std::string>& noise,
                                      const std::string& id_prefix) {
    Rng rng(seed);
    const auto n_pos = static_cast<size_t>(std::llround(positive_rate * static_cast<double>(n)));
    std::vector<int> labels(n, 0);
    for (size_t i = 0; i < n_pos && i < n; ++i) labels[i] = 1;
    rng.shuffle(labels);

    std::vector<Record> records(n);
    std::vector<std::string> tokens;
    for (size_t i = 0; i < n; ++i) {
        tokens.clear();
        if (labels[i] == 1) {
            if (rng.uniform01() < 0.97) {
                const size_t k = 2 + rng.below(2);  // 2 or 3 signal tokens
                for (size_t j = 0; j < k; ++j) tokens.push_back(signal[rng.below(signal.size())]);
            }
        } else {
            if (rng.uniform01() < 0.03) tokens.push_back(signal[rng.below(signal.size())]);
        }
        const size_t n_noise = 4 + rng.below(4);  // 4..7 noise tokens
        for (size_t j = 0; j < n_noise; ++j) tokens.push_back(noise[rng.below(noise.size())]);
        rng.shuffle(tokens);

        Record& rec = records[i];
        rec.id = id_prefix + std::to_string(i);
        rec.label = labels[i];
        for (size_t j = 0; j < tokens.size(); ++j) {
            if (j > 0) rec.text += ' ';
            rec.text += tokens[j];
        }
    }
    return records;
}

}  // namespace detail

inline SyntheticCorpus make_synthetic(const SyntheticSpec& spec) {
    if (spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0)
        throw config_error("bad_config", "synthetic split sizes must be > 0");
    if (!(spec.positive_rate > 0.0 && spec.positive_rate < 1.0))
        throw config_error("bad_config", "positive_rate must be in (0,1)");
    const auto& signal = spec.signal_vocab.empty() ? default_signal_vocab() : spec.signal_vocab;
    const auto& noise = spec.noise_vocab.empty() ? default_noise_vocab() : spec.noise_vocab;
    if (signal.empty() || noise.empty())
        throw config_error("bad_config", "vocabularies must be non-empty");
    std::unordered_set<std::string> signal_set(signal.begin(), signal.end());
    for (const auto& word : noise)
        if (signal_set.count(word))
            throw config_error("overlapping_vocab",
                               "token \"" + word + "\" appears in both vocabularies");

    SyntheticCorpus corpus;
    corpus.train = detail::make_split(spec.n_train, spec.positive_rate, derive_seed(spec.seed, 0),
                                      signal, noise, "tr");
    corpus.val = detail::make_split(spec.n_val, spec.positive_rate, derive_seed(spec.seed, 1),
                                    signal, noise, "va");
    corpus.test = detail::make_split(spec.n_test, spec.positive_rate, derive_seed(spec.seed, 2),
                                     signal, noise, "te");
    return corpus;
}

}  // namespace clsboost
