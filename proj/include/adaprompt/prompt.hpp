#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "adaprompt/errors.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

/// Pattern function: literal text with exactly one "{input}" slot and one
/// "{mask}" slot, e.g. "{input} In summary, this movie is {mask}."
class PromptTemplate {
public:
    static PromptTemplate parse(std::string template_id, std::string_view pattern) {
        PromptTemplate t;
        t.id_ = std::move(template_id);
        const std::string p(pattern);
        const auto input_pos = find_single(p, "{input}", "input");
        const auto mask_pos = find_single(p, "{mask}", "mask");
        t.input_first_ = input_pos < mask_pos;
        const auto first_pos = t.input_first_ ? input_pos : mask_pos;
        const auto first_len = t.input_first_ ? 7u : 6u; // strlen of the slot markers
        const auto second_pos = t.input_first_ ? mask_pos : input_pos;
        const auto second_len = t.input_first_ ? 6u : 7u;
        t.lead_ = p.substr(0, first_pos);
        t.mid_ = p.substr(first_pos + first_len, second_pos - (first_pos + first_len));
        t.tail_ = p.substr(second_pos + second_len);
        return t;
    }

    /// Prompt(x): literal substitution producing a cloze question with one
    /// mask marker.
    std::string apply(std::string_view input, const std::string& mask_marker) const {
        if (input.empty())
            throw Error(ErrorKind::Validation, "template input must be non-empty");
        std::string out = lead_;
        out += input_first_ ? std::string(input) : mask_marker;
        out += mid_;
        out += input_first_ ? mask_marker : std::string(input);
        out += tail_;
        return out;
    }

    /// fill(P, w): the template's literal text with the input slot removed and
    /// the mask replaced by w; used as an entailment probe sentence.
    std::string fill_probe(std::string_view word) const {
        std::string out = lead_;
        out += input_first_ ? "" : std::string(word);
        out += mid_;
        out += input_first_ ? std::string(word) : "";
        out += tail_;
        return collapse_spaces(out);
    }

    const std::string& id() const { return id_; }
    bool input_first() const { return input_first_; }

    std::string pattern() const {
        std::string out = lead_;
        out += input_first_ ? "{input}" : "{mask}";
        out += mid_;
        out += input_first_ ? "{mask}" : "{input}";
        out += tail_;
        return out;
    }

private:
    static size_t find_single(const std::string& p, std::string_view slot, const char* name) {
        const auto pos = p.find(slot);
        if (pos == std::string::npos)
            throw Error(ErrorKind::MalformedTemplate,
                        std::string("template is missing its {") + name + "} slot");
        if (p.find(slot, pos + slot.size()) != std::string::npos)
            throw Error(ErrorKind::MalformedTemplate,
                        std::string("template declares more than one {") + name + "} slot");
        return pos;
    }

    static std::string collapse_spaces(std::string_view s) {
        std::string out;
        bool in_space = false;
        for (char c : s) {
            if (c == ' ' || c == '\t') {
                in_space = true;
                continue;
            }
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(c);
        }
        return out;
    }

    std::string id_;
    std::string lead_, mid_, tail_;
    bool input_first_ = true;
};

/// The mapping v: Y -> L with per-label word sets. Labels keep their declared
/// order; word sets keep insertion order with seeds first.
struct Verbalizer {
    enum class Provenance { Seed, Augmented };

    std::vector<std::string> labels;
    std::map<std::string, std::vector<std::string>> word_sets;
    Provenance provenance = Provenance::Seed;

    static Verbalizer make(std::vector<std::string> labels,
                           std::map<std::string, std::vector<std::string>> word_sets,
                           Provenance provenance = Provenance::Seed) {
        Verbalizer v;
        v.labels = std::move(labels);
        v.word_sets = std::move(word_sets);
        v.provenance = provenance;
        v.validate();
        return v;
    }

    const std::vector<std::string>& words(const std::string& label) const {
        auto it = word_sets.find(label);
        if (it == word_sets.end())
            throw Error(ErrorKind::Validation, "label not declared in verbalizer: " + label);
        return it->second;
    }

    bool has_label(const std::string& label) const { return word_sets.count(label) > 0; }

    /// Non-empty sets, single-token words, pairwise disjoint across labels
    /// (case-insensitively, matching how words are scored).
    void validate() const {
        if (labels.empty()) throw Error(ErrorKind::Validation, "verbalizer declares no labels");
        std::set<std::string> seen;
        for (const auto& label : labels) {
            auto it = word_sets.find(label);
            if (it == word_sets.end() || it->second.empty())
                throw Error(ErrorKind::Validation, "verbalizer word set for label '" + label + "' is empty");
            for (const auto& word : it->second) {
                if (tokenize(word).size() != 1)
                    throw Error(ErrorKind::Validation,
                                "verbalizer word is not a single token: '" + word + "'");
                const auto key = fold_token(word);
                if (!seen.insert(key).second)
                    throw Error(ErrorKind::Validation,
                                "verbalizer word sets are not disjoint: '" + word + "'");
            }
        }
        if (word_sets.size() != labels.size())
            throw Error(ErrorKind::Validation, "verbalizer word sets do not match the label list");
    }
};

struct LabelScore {
    std::string label;
    double score = 0.0;
};

/// s(l|x): the mean masked-token probability of label l's words (reduces to
/// the single-word probability when |Y_l| = 1).
inline LabelScore score_label(const MaskedLmBackend& backend, const PromptTemplate& tmpl,
                              const Verbalizer& verbalizer, std::string_view x,
                              const std::string& label,
                              std::vector<std::string>* warnings = nullptr) {
    const auto& words = verbalizer.words(label);
    const std::string masked = tmpl.apply(x, backend.mask_marker());
    double sum = 0.0;
    for (const auto& word : words) {
        const auto wp = backend.word_probability(masked, word);
        if (wp.out_of_vocabulary && warnings)
            warnings->push_back("verbalizer word '" + word + "' is outside the backend vocabulary; "
                                "using its smoothed probability");
        sum += wp.prob;
    }
    return LabelScore{label, sum / static_cast<double>(words.size())};
}

/// Argmax of score_label over the declared labels; exact ties go to the
/// earlier label.
inline std::string predict_label(const MaskedLmBackend& backend, const PromptTemplate& tmpl,
                                 const Verbalizer& verbalizer, std::string_view x,
                                 std::vector<LabelScore>* scores_out = nullptr,
                                 std::vector<std::string>* warnings = nullptr) {
    std::string best;
    double best_score = 0.0;
    bool first = true;
    for (const auto& label : verbalizer.labels) {
        const auto ls = score_label(backend, tmpl, verbalizer, x, label, warnings);
        if (scores_out) scores_out->push_back(ls);
        if (first || ls.score > best_score) {
            best = label;
            best_score = ls.score;
            first = false;
        }
    }
    return best;
}

} // namespace adaprompt
