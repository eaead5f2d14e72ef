#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "adaprompt/errors.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/nli.hpp"
#include "adaprompt/prompt.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

struct AugmentationConfig {
    double threshold = 0.4;          // entailment acceptance threshold t
    size_t per_label_cap = 5;        // max |Y_l| after augmentation
    size_t per_sample_top_n = 20;    // predictions collected per test input
    size_t candidates_per_label = 20; // |C| = candidates_per_label * |L|

    void validate() const {
        if (!(threshold > 0.0 && threshold < 1.0))
            throw Error(ErrorKind::Validation, "entailment threshold must lie in (0,1)");
        if (per_label_cap < 1)
            throw Error(ErrorKind::Validation, "per-label cap must be >= 1");
        if (per_sample_top_n < 1)
            throw Error(ErrorKind::Validation, "per-sample top-n must be >= 1");
    }
};

/// High-frequency predicted words considered for augmentation, sorted by
/// frequency descending (ties by token).
struct CandidateSet {
    struct Entry {
        std::string token;
        uint64_t frequency = 0;
    };
    std::vector<Entry> words;
    size_t cap = 0;
};

/// Collects the per-input top-N mask fillers over all inputs, counts global
/// frequency, drops seed words, non-alphabetic tokens and tokens shorter than
/// two characters, and keeps the cap = candidates_per_label * |L| most
/// frequent.
inline CandidateSet extract_candidates(const MaskedLmBackend& backend, const PromptTemplate& tmpl,
                                       const std::vector<std::string>& inputs,
                                       const Verbalizer& seed_verbalizer,
                                       const AugmentationConfig& config) {
    config.validate();
    if (inputs.empty()) throw Error(ErrorKind::Validation, "candidate extraction needs inputs");

    std::set<std::string> seeds;
    for (const auto& label : seed_verbalizer.labels)
        for (const auto& w : seed_verbalizer.words(label)) seeds.insert(fold_token(w));

    std::map<std::string, uint64_t> frequency;
    for (const auto& input : inputs) {
        const auto masked = tmpl.apply(input, backend.mask_marker());
        for (const auto& p : backend.predict_fillers(masked, config.per_sample_top_n))
            ++frequency[p.token];
    }

    CandidateSet set;
    set.cap = config.candidates_per_label * seed_verbalizer.labels.size();
    for (const auto& [token, count] : frequency) {
        if (seeds.count(fold_token(token))) continue;
        if (!is_alphabetic_token(token)) continue;
        if (codepoint_length(token) < 2) continue;
        set.words.push_back(CandidateSet::Entry{token, count});
    }
    std::sort(set.words.begin(), set.words.end(), [](const auto& a, const auto& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.token < b.token;
    });
    if (set.words.size() > set.cap) set.words.resize(set.cap);
    return set;
}

/// True iff the premise entails the hypothesis with probability >= t.
inline bool entails(const EntailmentBackend& nli, std::string_view premise,
                    std::string_view hypothesis, double t) {
    if (premise.empty() || hypothesis.empty())
        throw Error(ErrorKind::Validation, "entailment probe sentences must be non-empty");
    return nli.judge(premise, hypothesis).entail >= t;
}

struct AugmentationResult {
    Verbalizer verbalizer;

    /// Raw per-label accept decisions (candidate, max-direction p_entail),
    /// before cross-label conflict resolution and trimming.
    std::map<std::string, std::vector<std::pair<std::string, double>>> accepted;

    /// Candidates accepted by several labels with an exact strength tie.
    std::vector<std::string> dropped_ties;

    std::vector<std::string> warnings;
};

/// Verbalizer adaptation: a candidate joins label l when, for some seed
/// y in Y_l, fill(P, y) entails fill(P, c) or fill(P, c) entails fill(P, y)
/// at threshold t. A candidate accepted by several labels goes to the label
/// with the highest observed p_entail (exact ties drop it); each final set is
/// trimmed to per_label_cap, seeds first, then candidates by descending
/// p_entail.
inline AugmentationResult augment_verbalizer(const EntailmentBackend& nli,
                                             const PromptTemplate& tmpl,
                                             const Verbalizer& seed_verbalizer,
                                             const CandidateSet& candidates,
                                             const AugmentationConfig& config) {
    config.validate();
    seed_verbalizer.validate();
    AugmentationResult result;

    // Algorithm pass: per label, per seed, per candidate, both directions.
    for (const auto& label : seed_verbalizer.labels) {
        auto& accepted = result.accepted[label];
        for (const auto& candidate : candidates.words) {
            bool accept = false;
            double strength = 0.0;
            bool skipped = false;
            for (const auto& seed : seed_verbalizer.words(label)) {
                const std::string probe_seed = tmpl.fill_probe(seed);
                const std::string probe_cand = tmpl.fill_probe(candidate.token);
                try {
                    const double fwd = nli.judge(probe_seed, probe_cand).entail;
                    const double bwd = nli.judge(probe_cand, probe_seed).entail;
                    strength = std::max({strength, fwd, bwd});
                    if (fwd >= config.threshold || bwd >= config.threshold) accept = true;
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::BackendTransport) throw;
                    result.warnings.push_back("entailment check failed for candidate '" +
                                              candidate.token + "' (" + e.what() + "); skipped");
                    skipped = true;
                    break;
                }
            }
            if (accept && !skipped) accepted.push_back({candidate.token, strength});
        }
    }

    // Cross-label disjointness: keep the strongest label; exact ties drop the
    // candidate.
    std::map<std::string, std::vector<std::pair<std::string, double>>> best_for;
    for (const auto& label : seed_verbalizer.labels)
        for (const auto& [token, strength] : result.accepted[label])
            best_for[token].push_back({label, strength});

    std::map<std::string, std::vector<std::pair<std::string, double>>> assigned;
    for (const auto& [token, claims] : best_for) {
        double best = 0.0;
        for (const auto& [label, strength] : claims) best = std::max(best, strength);
        std::vector<std::string> winners;
        for (const auto& [label, strength] : claims)
            if (strength == best) winners.push_back(label);
        if (winners.size() != 1) {
            result.dropped_ties.push_back(token);
            continue;
        }
        assigned[winners.front()].push_back({token, best});
    }

    // Trim: seeds always survive; candidates fill the remaining room by
    // descending strength, ties by token.
    std::map<std::string, std::vector<std::string>> final_sets;
    for (const auto& label : seed_verbalizer.labels) {
        auto& words = final_sets[label];
        words = seed_verbalizer.words(label);
        auto extras = assigned[label];
        std::sort(extras.begin(), extras.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (const auto& [token, strength] : extras) {
            if (words.size() >= config.per_label_cap) break;
            words.push_back(token);
        }
    }

    result.verbalizer = Verbalizer::make(seed_verbalizer.labels, std::move(final_sets),
                                         Verbalizer::Provenance::Augmented);
    return result;
}

} // namespace adaprompt
