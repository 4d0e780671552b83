#pragma once

// Deterministic cleaning and tokenization of social-media text.
//
// clean_text keeps lowercase ASCII letters, digits, and single spaces, and
// drops everything else: URLs (http://..., https://..., www.... up to the
// next ASCII whitespace, case-insensitive), @-mentions and #-tags (marker
// plus the following [A-Za-z0-9_] run), and every other byte outside ASCII
// alphanumerics/whitespace (which removes emoji, punctuation, and all
// non-ASCII scripts byte-wise). Whitespace runs collapse to one space and
// the result is trimmed. The function is total and idempotent.

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "clsboost/common.hpp"

namespace clsboost {

// One labeled text sample. label, when present, is 0 or 1.
struct Record {
    std::string id;
    std::string text;
    std::optional<int> label;
};

namespace detail {

inline bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
inline bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline bool is_ascii_alpha(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
inline bool is_ascii_alnum(unsigned char c) { return is_ascii_alpha(c) || is_ascii_digit(c); }
inline bool is_tag_word_char(unsigned char c) { return is_ascii_alnum(c) || c == '_'; }

inline bool starts_with_ci(std::string_view s, size_t pos, std::string_view prefix) {
    if (s.size() - pos < prefix.size()) return false;
    for (size_t i = 0; i < prefix.size(); ++i) {
        unsigned char a = static_cast<unsigned char>(s[pos + i]);
        if (a >= 'A' && a <= 'Z') a = static_cast<unsigned char>(a - 'A' + 'a');
        if (a != static_cast<unsigned char>(prefix[i])) return false;
    }
    return true;
}

}  // namespace detail

inline std::string clean_text(std::string_view raw) {
    using namespace detail;
    std::string out;
    out.reserve(raw.size());
    bool space_pending = false;
    size_t i = 0;
    while (i < raw.size()) {
        if (starts_with_ci(raw, i, "http://") || starts_with_ci(raw, i, "https://") ||
            starts_with_ci(raw, i, "www.")) {
            while (i < raw.size() && !is_ascii_space(static_cast<unsigned char>(raw[i]))) ++i;
            continue;
        }
        const unsigned char c = static_cast<unsigned char>(raw[i]);
        if (c == '@' || c == '#') {
            ++i;
            while (i < raw.size() && is_tag_word_char(static_cast<unsigned char>(raw[i]))) ++i;
            continue;
        }
        if (is_ascii_space(c)) {
            space_pending = true;
            ++i;
            continue;
        }
        if (is_ascii_alnum(c)) {
            if (space_pending && !out.empty()) out.push_back(' ');
            space_pending = false;
            out.push_back(is_ascii_alpha(c) ? static_cast<char>(c | 0x20) : static_cast<char>(c));
        }
        ++i;  // anything else is dropped
    }
    return out;
}

// Splits on ASCII whitespace; never yields empty tokens.
inline std::vector<std::string> tokenize(std::string_view cleaned) {
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && detail::is_ascii_space(static_cast<unsigned char>(cleaned[i]))) ++i;
        size_t b = i;
        while (i < cleaned.size() && !detail::is_ascii_space(static_cast<unsigned char>(cleaned[i]))) ++i;
        if (i > b) tokens.emplace_back(cleaned.substr(b, i - b));
    }
    return tokens;
}

// Order-preserving filter; idempotent.
inline std::vector<std::string> remove_stopwords(const std::vector<std::string>& tokens,
                                                 const std::unordered_set<std::string>& stoplist) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens)
        if (!stoplist.count(t)) out.push_back(t);
    return out;
}

// Built-in English stoplist. Contractions appear with apostrophes stripped
// so entries match clean_text output. The same list ships as
// data/stopwords_en.txt.
inline const std::unordered_set<std::string>& builtin_stopwords() {
    static const std::unordered_set<std::string> words = {
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
        "any", "are", "arent", "as", "at", "be", "because", "been", "before", "being",
        "below", "between", "both", "but", "by", "cannot", "cant", "could", "couldnt",
        "did", "didnt", "do", "does", "doesnt", "doing", "dont", "down", "during",
        "each", "few", "for", "from", "further", "had", "hadnt", "has", "hasnt",
        "have", "havent", "having", "he", "hed", "hell", "her", "here", "heres",
        "hers", "herself", "hes", "him", "himself", "his", "how", "hows", "i", "id",
        "if", "ill", "im", "in", "into", "is", "isnt", "it", "its", "itself", "ive",
        "lets", "me", "more", "most", "mustnt", "my", "myself", "no", "nor", "not",
        "of", "off", "on", "once", "only", "or", "other", "ought", "our", "ours",
        "ourselves", "out", "over", "own", "same", "shant", "she", "shed", "shell",
        "shes", "should", "shouldnt", "so", "some", "such", "than", "that", "thats",
        "the", "their", "theirs", "them", "themselves", "then", "there", "theres",
        "these", "they", "theyd", "theyll", "theyre", "theyve", "this", "those",
        "through", "to", "too", "under", "until", "up", "very", "was", "wasnt", "we",
        "wed", "well", "were", "werent", "weve", "what", "whats", "when", "whens",
        "where", "wheres", "which", "while", "who", "whom", "whos", "whys", "why",
        "with", "wont", "would", "wouldnt", "you", "youd", "youll", "your", "youre",
        "yours", "yourself", "yourselves", "youve",
    };
    return words;
}

// One lowercase word per line; blank lines ignored. Entries must already be
// lowercase alphanumerics (they are matched against clean_text output).
inline std::unordered_set<std::string> load_stoplist(const std::string& path) {
    const std::string body = read_file(path);
    std::unordered_set<std::string> words;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= body.size()) {
        size_t nl = body.find('\n', pos);
        std::string_view line(body.data() + pos, (nl == std::string::npos ? body.size() : nl) - pos);
        pos = (nl == std::string::npos) ? body.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        for (char c : line) {
            const unsigned char u = static_cast<unsigned char>(c);
            if (!((u >= 'a' && u <= 'z') || (u >= '0' && u <= '9')))
                throw data_error("bad_stoplist", path + ":" + std::to_string(line_no) +
                                 ": stoplist entries must be lowercase alphanumerics");
        }
        words.emplace(line);
    }
    return words;
}

// Stage toggles shared by every path that turns raw text into tokens.
struct PrepOptions {
    bool clean = true;
    bool stopwords = true;
    std::optional<std::unordered_set<std::string>> custom_stoplist;  // nullopt -> builtin

    const std::unordered_set<std::string>& stoplist() const {
        return custom_stoplist ? *custom_stoplist : builtin_stopwords();
    }
};

inline std::vector<std::string> prep_tokens(std::string_view raw, const PrepOptions& opts) {
    std::vector<std::string> tokens =
        opts.clean ? tokenize(clean_text(raw)) : tokenize(raw);
    if (opts.stopwords) tokens = remove_stopwords(tokens, opts.stoplist());
    return tokens;
}

}  // namespace clsboost
