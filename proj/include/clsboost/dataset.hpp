#pragma once

// Dataset and prediction TSV IO.
//
// Dataset lines are `id<TAB>text` or `id<TAB>text<TAB>label` with labels
// strictly "0"/"1"; errors carry 1-based line numbers. Prediction lines are
// `id<TAB>probability<TAB>label` with probabilities in shortest-roundtrip
// form, so identical probabilities always serialize to identical bytes.

#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clsboost/common.hpp"
#include "clsboost/textprep.hpp"

namespace clsboost {

namespace detail {

// Splits into lines, dropping one trailing empty line from a final '\n' and
// stripping '\r' line endings.
inline std::vector<std::string_view> split_lines(std::string_view body) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    while (start <= body.size()) {
        size_t end = body.find('\n', start);
        if (end == std::string_view::npos) end = body.size();
        std::string_view line = body.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (end == body.size()) break;
        start = end + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace detail

inline std::vector<Record> parse_dataset(std::string_view body, bool has_header,
                                         const std::string& what) {
    std::vector<Record> records;
    const auto lines = detail::split_lines(body);
    for (size_t i = has_header ? 1 : 0; i < lines.size(); ++i) {
        const std::string lineno = std::to_string(i + 1);
        const std::string_view line = lines[i];
        if (line.empty())
            throw data_error("bad_line", what + ":" + lineno + ": empty line");
        const auto fields = detail::split_tabs(line);
        if (fields.size() < 2 || fields.size() > 3)
            throw data_error("bad_line", what + ":" + lineno + ": expected 2 or 3 tab-separated columns, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty())
            throw data_error("bad_id", what + ":" + lineno + ": empty id");
        Record rec;
        rec.id = std::string(fields[0]);
        rec.text = std::string(fields[1]);
        if (fields.size() == 3) {
            if (fields[2] == "0")
                rec.label = 0;
            else if (fields[2] == "1")
                rec.label = 1;
            else
                throw data_error("bad_label", what + ":" + lineno + ": label must be 0 or 1, got \"" +
                                 std::string(fields[2]) + "\"");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<Record> load_dataset(const std::string& path, bool has_header = false) {
    return parse_dataset(read_file(path), has_header, path);
}

inline void write_dataset(std::span<const Record> records, const std::string& path) {
    std::string out;
    for (const auto& rec : records) {
        out += rec.id;
        out += '\t';
        out += rec.text;
        if (rec.label) {
            out += '\t';
            out += *rec.label ? '1' : '0';
        }
        out += '\n';
    }
    write_file(path, out);
}

// Extracts labels from records, requiring every record to carry one.
inline std::vector<int> labels_of(std::span<const Record> records) {
    std::vector<int> labels(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        if (!records[i].label)
            throw data_error("missing_label", "record \"" + records[i].id + "\" has no label");
        labels[i] = *records[i].label;
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

struct Prediction {
    std::string id;
    double prob = 0.0;
    int label = 0;

    bool operator==(const Prediction&) const = default;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_predictions(std::span<const Prediction> preds, const std::string& path) {
    std::string out;
    for (const auto& p : preds) {
        out += p.id;
        out += '\t';
        out += format_double(p.prob);
        out += '\t';
        out += p.label ? '1' : '0';
        out += '\n';
    }
    write_file(path, out);
}

inline std::vector<Prediction> parse_predictions(std::string_view body, const std::string& what) {
    std::vector<Prediction> preds;
    const auto lines = detail::split_lines(body);
    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string lineno = std::to_string(i + 1);
        const std::string_view line = lines[i];
        if (line.empty())
            throw data_error("bad_line", what + ":" + lineno + ": empty line");
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 3)
            throw data_error("bad_line", what + ":" + lineno + ": expected 3 tab-separated columns, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty())
            throw data_error("bad_id", what + ":" + lineno + ": empty id");
        Prediction p;
        p.id = std::string(fields[0]);
        const auto res = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), p.prob);
        if (res.ec != std::errc{} || res.ptr != fields[1].data() + fields[1].size() ||
            !(p.prob >= 0.0 && p.prob <= 1.0))
            throw data_error("bad_probability", what + ":" + lineno + ": probability must be a number in [0,1]");
        if (fields[2] == "0")
            p.label = 0;
        else if (fields[2] == "1")
            p.label = 1;
        else
            throw data_error("bad_label", what + ":" + lineno + ": label must be 0 or 1, got \"" +
                             std::string(fields[2]) + "\"");
        preds.push_back(std::move(p));
    }
    return preds;
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
    return parse_predictions(read_file(path), path);
}

}  // namespace clsboost
