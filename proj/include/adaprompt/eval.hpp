#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adaprompt/errors.hpp"
#include "adaprompt/prompt.hpp"

namespace adaprompt {

struct LabeledExample {
    std::string example_id;
    std::string text;
    std::string gold;
};

struct DatasetSchema {
    enum class Format { Tsv, Jsonl };
    Format format = Format::Tsv;
    std::string text_field = "text";
    std::string label_field = "label";
    std::string id_field; // empty: row ordinals become ids

    static Format format_from_string(std::string_view s) {
        if (s == "tsv") return Format::Tsv;
        if (s == "jsonl") return Format::Jsonl;
        throw Error(ErrorKind::Validation, "unknown dataset format: " + std::string(s));
    }
};

namespace detail {
inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}
} // namespace detail

/// Loads a dataset and validates every gold label against the task's label
/// set, applying label_map (dataset value -> task label) first when provided.
inline std::vector<LabeledExample> load_dataset(
    const std::string& path, const DatasetSchema& schema,
    const std::vector<std::string>& task_labels,
    const std::map<std::string, std::string>& label_map = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read dataset file: " + path);
    const std::set<std::string> allowed(task_labels.begin(), task_labels.end());

    auto resolve_label = [&](const std::string& raw, size_t line_no) {
        std::string label = raw;
        if (!label_map.empty()) {
            auto it = label_map.find(raw);
            if (it == label_map.end())
                throw Error(ErrorKind::Validation, path + ":" + std::to_string(line_no) +
                                                       ": label '" + raw + "' is not in the label map");
            label = it->second;
        }
        if (!allowed.count(label))
            throw Error(ErrorKind::Validation, path + ":" + std::to_string(line_no) + ": unknown label '" +
                                                   raw + "'");
        return label;
    };

    std::vector<LabeledExample> examples;
    std::string line;
    size_t line_no = 0;

    if (schema.format == DatasetSchema::Format::Tsv) {
        if (!std::getline(in, line)) throw Error(ErrorKind::EmptyDataset, "dataset is empty: " + path);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto header = detail::split_tabs(line);
        auto column = [&](const std::string& name, bool required) -> int {
            for (size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return static_cast<int>(i);
            if (required)
                throw Error(ErrorKind::Validation,
                            path + ": header has no '" + name + "' column");
            return -1;
        };
        const int text_col = column(schema.text_field, true);
        const int label_col = column(schema.label_field, true);
        const int id_col = schema.id_field.empty() ? -1 : column(schema.id_field, true);
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto cells = detail::split_tabs(line);
            const auto need = static_cast<size_t>(std::max({text_col, label_col, id_col})) + 1;
            if (cells.size() < need)
                throw Error(ErrorKind::Validation,
                            path + ":" + std::to_string(line_no) + ": row has too few columns");
            LabeledExample ex;
            ex.text = cells[static_cast<size_t>(text_col)];
            ex.gold = resolve_label(cells[static_cast<size_t>(label_col)], line_no);
            ex.example_id =
                id_col >= 0 ? cells[static_cast<size_t>(id_col)] : std::to_string(examples.size());
            examples.push_back(std::move(ex));
        }
    } else {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            nlohmann::json row;
            try {
                row = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::Validation,
                            path + ":" + std::to_string(line_no) + ": bad JSON row: " + e.what());
            }
            if (!row.contains(schema.text_field) || !row.contains(schema.label_field))
                throw Error(ErrorKind::Validation, path + ":" + std::to_string(line_no) +
                                                       ": row lacks declared text/label fields");
            LabeledExample ex;
            ex.text = row[schema.text_field].is_string() ? row[schema.text_field].get<std::string>()
                                                         : row[schema.text_field].dump();
            const std::string raw = row[schema.label_field].is_string()
                                        ? row[schema.label_field].get<std::string>()
                                        : row[schema.label_field].dump();
            ex.gold = resolve_label(raw, line_no);
            ex.example_id = !schema.id_field.empty() && row.contains(schema.id_field)
                                ? (row[schema.id_field].is_string()
                                       ? row[schema.id_field].get<std::string>()
                                       : row[schema.id_field].dump())
                                : std::to_string(examples.size());
            examples.push_back(std::move(ex));
        }
    }

    if (examples.empty()) throw Error(ErrorKind::EmptyDataset, "dataset is empty: " + path);
    return examples;
}

struct Prediction {
    std::string example_id;
    std::string gold;
    std::string predicted;
    std::vector<LabelScore> scores;
};

/// Fraction of exact matches; predictions and gold must align by example_id.
inline double accuracy(const std::vector<Prediction>& predictions,
                       const std::vector<LabeledExample>& gold) {
    if (predictions.size() != gold.size())
        throw Error(ErrorKind::Alignment, "prediction/gold lengths differ");
    if (predictions.empty()) throw Error(ErrorKind::EmptyDataset, "no predictions to score");
    size_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].example_id != gold[i].example_id)
            throw Error(ErrorKind::Alignment,
                        "example_id mismatch at row " + std::to_string(i) + ": '" +
                            predictions[i].example_id + "' vs '" + gold[i].example_id + "'");
        if (predictions[i].predicted == gold[i].gold) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

inline double accuracy(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) throw Error(ErrorKind::EmptyDataset, "no predictions to score");
    size_t correct = 0;
    for (const auto& p : predictions)
        if (p.predicted == p.gold) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

/// Multi-pattern aggregate in the reporting convention of the tables:
/// mean / std over patterns, best pattern in brackets.
struct PatternReport {
    std::vector<double> per_pattern;
    double mean = 0.0;
    double std_dev = 0.0; // population by default
    double best = 0.0;
    size_t n_examples = 0;

    nlohmann::json to_json() const {
        return {{"per_pattern", per_pattern}, {"mean", mean}, {"std", std_dev},
                {"best", best},               {"n", n_examples}};
    }

    static PatternReport from_json(const nlohmann::json& j) {
        PatternReport r;
        r.per_pattern = j.at("per_pattern").get<std::vector<double>>();
        r.mean = j.at("mean").get<double>();
        r.std_dev = j.at("std").get<double>();
        r.best = j.at("best").get<double>();
        r.n_examples = j.at("n").get<size_t>();
        return r;
    }
};

inline PatternReport aggregate_patterns(const std::vector<double>& per_pattern_accuracies,
                                        size_t n_examples = 0, bool sample_std = false) {
    if (per_pattern_accuracies.empty())
        throw Error(ErrorKind::Validation, "aggregate_patterns needs at least one accuracy");
    PatternReport r;
    r.per_pattern = per_pattern_accuracies;
    r.n_examples = n_examples;
    const auto n = static_cast<double>(per_pattern_accuracies.size());
    double sum = 0.0;
    for (double a : per_pattern_accuracies) sum += a;
    r.mean = sum / n;
    double ss = 0.0;
    for (double a : per_pattern_accuracies) ss += (a - r.mean) * (a - r.mean);
    if (sample_std && per_pattern_accuracies.size() > 1)
        r.std_dev = std::sqrt(ss / (n - 1.0));
    else
        r.std_dev = std::sqrt(ss / n);
    r.best = *std::max_element(per_pattern_accuracies.begin(), per_pattern_accuracies.end());
    return r;
}

/// "75.92/17.36(91.28)" — percent accuracies, two decimals.
inline std::string format_pattern_summary(const PatternReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << r.mean * 100.0 << '/' << r.std_dev * 100.0 << '(' << r.best * 100.0 << ')';
    return os.str();
}

namespace detail {
inline std::string format_score(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
} // namespace detail

/// TSV predictions file: example_id, gold, predicted, score:<label> columns.
inline void save_predictions(const std::vector<Prediction>& predictions,
                             const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write predictions file: " + path);
    out << "example_id\tgold\tpredicted";
    for (const auto& l : labels) out << "\tscore:" << l;
    out << "\n";
    for (const auto& p : predictions) {
        out << p.example_id << '\t' << p.gold << '\t' << p.predicted;
        for (const auto& l : labels) {
            double v = 0.0;
            for (const auto& s : p.scores)
                if (s.label == l) v = s.score;
            out << '\t' << detail::format_score(v);
        }
        out << "\n";
    }
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read predictions file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::EmptyDataset, "predictions file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_tabs(line);
    if (header.size() < 3 || header[0] != "example_id" || header[1] != "gold" ||
        header[2] != "predicted")
        throw Error(ErrorKind::Validation, "unrecognized predictions header in " + path);
    std::vector<std::string> score_labels;
    for (size_t i = 3; i < header.size(); ++i) {
        if (header[i].rfind("score:", 0) != 0)
            throw Error(ErrorKind::Validation, "unrecognized predictions column: " + header[i]);
        score_labels.push_back(header[i].substr(6));
    }
    std::vector<Prediction> out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_tabs(line);
        if (cells.size() != header.size())
            throw Error(ErrorKind::Validation,
                        path + ":" + std::to_string(line_no) + ": wrong column count");
        Prediction p;
        p.example_id = cells[0];
        p.gold = cells[1];
        p.predicted = cells[2];
        for (size_t i = 0; i < score_labels.size(); ++i)
            p.scores.push_back(LabelScore{score_labels[i], std::stod(cells[3 + i])});
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace adaprompt
