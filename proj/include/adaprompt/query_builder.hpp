#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adaprompt/corpus_index.hpp"
#include "adaprompt/errors.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/prompt.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

enum class RetrievalMode { PromptAware, RawInput };

inline const char* to_string(RetrievalMode m) {
    return m == RetrievalMode::PromptAware ? "prompt" : "raw";
}

inline RetrievalMode retrieval_mode_from_string(std::string_view s) {
    if (s == "prompt" || s == "prompt_aware") return RetrievalMode::PromptAware;
    if (s == "raw" || s == "raw_input") return RetrievalMode::RawInput;
    throw Error(ErrorKind::Validation, "unknown retrieval mode: " + std::string(s));
}

struct RetrievalPlan {
    size_t top_o = 10;        // |O| predictions per input
    size_t k = 50;            // hits per query (engine space)
    RetrievalMode mode = RetrievalMode::PromptAware;
    std::string query_source; // dataset identifier; may differ from the eval set

    void validate() const {
        if (k < 1) throw Error(ErrorKind::Validation, "retrieval plan requires k >= 1");
        if (mode == RetrievalMode::PromptAware && top_o < 1)
            throw Error(ErrorKind::Validation, "prompt-aware retrieval requires top_o >= 1");
    }
};

struct ProvenanceTriple {
    uint32_t input_id = 0;
    uint32_t query_index = 0;
    uint32_t rank = 0; // 1-based hit rank
};

/// Deduplicated continual-pretraining sentences, in first-seen order
/// (input order, then query order, then rank). provenance[i] lists every
/// (input, query, rank) that contributed sentences[i].
struct RetrievedSet {
    std::vector<std::string> sentences;
    std::vector<std::vector<ProvenanceTriple>> provenance;
    size_t size_raw = 0;
    size_t size_deduped = 0;
    size_t failed_inputs = 0;
    std::vector<std::string> warnings;
};

/// The query list Q for one input: Prompt(x) with the mask marker replaced by
/// each of the top-|O| predicted fillers, in prediction order. In raw mode
/// the single query is x itself and the backend is never consulted.
inline std::vector<std::string> build_queries(const MaskedLmBackend& backend,
                                              const PromptTemplate& tmpl, std::string_view x,
                                              const RetrievalPlan& plan,
                                              std::vector<std::string>* warnings = nullptr) {
    plan.validate();
    if (plan.mode == RetrievalMode::RawInput) return {std::string(x)};

    const std::string masked = tmpl.apply(x, backend.mask_marker());
    const auto predictions = backend.predict_fillers(masked, plan.top_o);
    if (predictions.empty()) {
        if (warnings)
            warnings->push_back("backend returned no fillers for input '" + std::string(x) +
                                "'; no queries built");
        return {};
    }
    const auto marker_pos = masked.find(backend.mask_marker());
    std::vector<std::string> queries;
    queries.reserve(predictions.size());
    for (const auto& p : predictions) {
        std::string q = masked;
        q.replace(marker_pos, backend.mask_marker().size(), p.token);
        queries.push_back(std::move(q));
    }
    return queries;
}

/// Builds D_p: per input, build_queries then retrieve(k) per query; hit texts
/// are unioned and deduplicated by NFC-normalized, whitespace-collapsed,
/// case-preserved text. Retrieval runs in parallel across inputs; the merge
/// is a serial fold in input order, so output order is deterministic.
inline RetrievedSet build_retrieval_set(const CorpusIndex& index, const MaskedLmBackend& backend,
                                        const PromptTemplate& tmpl,
                                        const std::vector<std::string>& inputs,
                                        const RetrievalPlan& plan, size_t max_workers = 0) {
    plan.validate();
    if (inputs.empty()) throw Error(ErrorKind::Validation, "retrieval needs at least one input");

    struct PerInput {
        // (query_index, rank, doc_id) in query order then rank order
        std::vector<std::tuple<uint32_t, uint32_t, uint32_t>> hits;
        std::vector<std::string> warnings;
        bool failed = false;
        std::string failure;
    };

    std::vector<PerInput> partial(inputs.size());
    const auto worker_body = [&](size_t i) {
        PerInput& out = partial[i];
        try {
            const auto queries = build_queries(backend, tmpl, inputs[i], plan, &out.warnings);
            for (uint32_t qi = 0; qi < queries.size(); ++qi) {
                const auto res = index.retrieve(queries[qi], plan.k);
                if (res.empty_query)
                    out.warnings.push_back("query " + std::to_string(qi) + " for input " +
                                           std::to_string(i) + " tokenized to nothing");
                for (const auto& hit : res.hits)
                    out.hits.emplace_back(qi, hit.rank, hit.doc_id);
            }
        } catch (const std::exception& e) {
            out.failed = true;
            out.failure = e.what();
        }
    };

    size_t workers = max_workers ? max_workers : std::thread::hardware_concurrency();
    if (workers <= 1 || inputs.size() <= 1) {
        for (size_t i = 0; i < inputs.size(); ++i) worker_body(i);
    } else {
        workers = std::min(workers, inputs.size());
        std::atomic<size_t> cursor{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = cursor.fetch_add(1); i < inputs.size(); i = cursor.fetch_add(1))
                    worker_body(i);
            });
        for (auto& t : pool) t.join();
    }

    RetrievedSet set;
    std::map<std::string, size_t> by_key;
    for (uint32_t input_id = 0; input_id < partial.size(); ++input_id) {
        PerInput& p = partial[input_id];
        for (auto& w : p.warnings) set.warnings.push_back(std::move(w));
        if (p.failed) {
            ++set.failed_inputs;
            set.warnings.push_back("input " + std::to_string(input_id) + " failed: " + p.failure);
            continue;
        }
        for (const auto& [query_index, rank, doc_id] : p.hits) {
            ++set.size_raw;
            const std::string& text = index.doc(doc_id).text;
            const std::string key = dedup_key(text);
            auto [it, inserted] = by_key.try_emplace(key, set.sentences.size());
            if (inserted) {
                set.sentences.push_back(text);
                set.provenance.emplace_back();
            }
            set.provenance[it->second].push_back(ProvenanceTriple{input_id, query_index, rank});
        }
    }
    set.size_deduped = set.sentences.size();
    return set;
}

/// Newline-delimited sentence persistence with a provenance sidecar
/// (sentence_index TAB input_id TAB query_index TAB rank).
inline void save_retrieved_set(const RetrievedSet& set, const std::string& sentences_path,
                               const std::string& provenance_path) {
    std::ofstream out(sentences_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write retrieved set: " + sentences_path);
    for (const auto& s : set.sentences) out << s << "\n";
    std::ofstream prov(provenance_path, std::ios::binary);
    if (!prov) throw Error(ErrorKind::Io, "cannot write provenance file: " + provenance_path);
    prov << "# sentence_index\tinput_id\tquery_index\trank\n";
    for (size_t i = 0; i < set.provenance.size(); ++i)
        for (const auto& t : set.provenance[i])
            prov << i << '\t' << t.input_id << '\t' << t.query_index << '\t' << t.rank << "\n";
}

} // namespace adaprompt
