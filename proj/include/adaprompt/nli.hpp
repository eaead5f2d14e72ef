#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adaprompt/errors.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

/// Three-way premise -> hypothesis judgment; components sum to 1.
struct NliJudgment {
    double entail = 0.0;
    double neutral = 0.0;
    double contradict = 0.0;
};

/// The NLI system N. Implementations must be deterministic for fixed state.
class EntailmentBackend {
public:
    virtual ~EntailmentBackend() = default;
    virtual NliJudgment judge(std::string_view premise, std::string_view hypothesis) const = 0;
};

/// Deterministic offline stand-in for a neural NLI model.
///
/// p_entail is the fraction of hypothesis content tokens covered by premise
/// tokens, directly or through the synonym lexicon. An antonym-lexicon hit
/// moves the remainder to p_contradict; otherwise it goes to p_neutral.
class LexicalEntailmentBackend final : public EntailmentBackend {
public:
    LexicalEntailmentBackend() = default;

    /// Each lexicon line is a whitespace-separated group of mutually
    /// synonymous words.
    void load_synonyms(const std::string& path) { load_groups(path, synonyms_); }

    /// Each lexicon line is a pair of opposed words.
    void load_antonyms(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot read antonym lexicon: " + path);
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string a, b;
            if (!(row >> a >> b)) continue;
            add_antonym_pair(a, b);
        }
    }

    void add_synonym_group(const std::vector<std::string>& words) {
        std::vector<std::string> folded;
        for (const auto& w : words) folded.push_back(fold_token(w));
        for (const auto& a : folded)
            for (const auto& b : folded)
                if (a != b) synonyms_[a].insert(b);
    }

    void add_antonym_pair(const std::string& a, const std::string& b) {
        antonyms_[fold_token(a)].insert(fold_token(b));
        antonyms_[fold_token(b)].insert(fold_token(a));
    }

    NliJudgment judge(std::string_view premise, std::string_view hypothesis) const override {
        const auto premise_tokens = content_tokens(premise);
        const auto hypothesis_tokens = content_tokens(hypothesis);

        size_t covered = 0;
        bool antonym_hit = false;
        for (const auto& h : hypothesis_tokens) {
            bool hit = premise_tokens.count(h) > 0;
            if (!hit) {
                auto syn = synonyms_.find(h);
                if (syn != synonyms_.end())
                    for (const auto& p : premise_tokens)
                        if (syn->second.count(p)) {
                            hit = true;
                            break;
                        }
            }
            if (hit) ++covered;
            auto ant = antonyms_.find(h);
            if (ant != antonyms_.end())
                for (const auto& p : premise_tokens)
                    if (ant->second.count(p)) antonym_hit = true;
        }

        NliJudgment j;
        j.entail = hypothesis_tokens.empty()
                       ? 1.0
                       : static_cast<double>(covered) / static_cast<double>(hypothesis_tokens.size());
        const double rest = 1.0 - j.entail;
        if (antonym_hit)
            j.contradict = rest;
        else
            j.neutral = rest;
        return j;
    }

private:
    static std::set<std::string> content_tokens(std::string_view sentence) {
        static const std::set<std::string> function_words = {
            "a",  "an",  "and", "are",  "as", "at",   "be", "been", "by", "for", "from",
            "in", "is",  "it",  "its",  "of", "on",   "or", "that", "the", "this", "these",
            "to", "was", "were", "with", "those"};
        std::set<std::string> out;
        for (const auto& t : tokenize(sentence))
            if (!function_words.count(t)) out.insert(t);
        return out;
    }

    void load_groups(const std::string& path, std::map<std::string, std::set<std::string>>&) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot read synonym lexicon: " + path);
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::vector<std::string> group;
            std::string w;
            while (row >> w) group.push_back(w);
            if (group.size() >= 2) add_synonym_group(group);
        }
    }

    std::map<std::string, std::set<std::string>> synonyms_;
    std::map<std::string, std::set<std::string>> antonyms_;
};

} // namespace adaprompt
