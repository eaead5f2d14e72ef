#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adaprompt/errors.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

enum class ScoringMode { Bm25, ClassicTfidf };

inline const char* to_string(ScoringMode m) { return m == ScoringMode::Bm25 ? "bm25" : "tfidf"; }

inline ScoringMode scoring_mode_from_string(std::string_view s) {
    if (s == "bm25") return ScoringMode::Bm25;
    if (s == "tfidf" || s == "classic-tfidf") return ScoringMode::ClassicTfidf;
    throw Error(ErrorKind::Validation, "unknown scoring mode: " + std::string(s));
}

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// One sentence of the general corpus. doc_id is the ingestion ordinal.
struct SentenceDoc {
    uint32_t doc_id = 0;
    std::string text;            // NFC-normalized, trimmed, no line breaks
    uint32_t source_index = 0;   // position in CorpusIndex::source_tags()
};

struct Hit {
    uint32_t doc_id = 0;
    double score = 0.0;
    uint32_t rank = 0; // 1-based
};

struct SearchResult {
    std::vector<Hit> hits;
    bool empty_query = false; // query tokenized to nothing; hits empty, not an error
};

struct Posting {
    uint32_t doc_id = 0;
    uint32_t term_frequency = 0;
};

/// Sentence-level inverted index with BM25 (default) or classic TF-IDF
/// additive scoring.
///
/// Per query token t and document d:
///   bm25:   idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len))
///           with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
///   tfidf:  tf * ln(1 + N / df)
/// Query tokens contribute once per occurrence. Both idf forms are strictly
/// positive, so every document sharing a token with the query scores > 0.
///
/// Immutable after construction; retrieval is read-only and safe to run
/// concurrently from many threads.
class CorpusIndex {
public:
    static CorpusIndex build_from_files(const std::vector<std::string>& corpus_paths,
                                        ScoringMode mode, Bm25Params params = {}) {
        CorpusIndex index(mode, params);
        for (const auto& path : corpus_paths) {
            std::ifstream in(path);
            if (!in) throw Error(ErrorKind::Ingestion, "cannot read corpus file: " + path);
            const auto source = index.add_source(path);
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                index.add_sentence(line, source);
            }
        }
        index.finish();
        return index;
    }

    static CorpusIndex build_from_sentences(const std::vector<std::string>& sentences,
                                            ScoringMode mode, Bm25Params params = {},
                                            const std::string& source_tag = "<memory>") {
        CorpusIndex index(mode, params);
        const auto source = index.add_source(source_tag);
        for (const auto& s : sentences) index.add_sentence(s, source);
        index.finish();
        return index;
    }

    /// Top-k by score, ties broken by ascending doc_id. Only documents sharing
    /// at least one token with the query are considered.
    SearchResult retrieve(std::string_view query, size_t k) const {
        if (k == 0) throw Error(ErrorKind::Validation, "retrieve requires k >= 1");
        SearchResult result;
        const auto query_tokens = tokenize(query);
        if (query_tokens.empty()) {
            result.empty_query = true;
            return result;
        }

        std::unordered_map<uint32_t, double> scores;
        for (const auto& token : query_tokens) {
            auto it = postings_.find(token);
            if (it == postings_.end()) continue;
            const auto df = static_cast<double>(it->second.size());
            for (const Posting& p : it->second)
                scores[p.doc_id] += term_score(p.term_frequency, doc_lengths_[p.doc_id], df);
        }

        std::vector<Hit> hits;
        hits.reserve(scores.size());
        for (const auto& [doc_id, score] : scores) hits.push_back(Hit{doc_id, score, 0});
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc_id < b.doc_id;
        });
        if (hits.size() > k) hits.resize(k);
        for (size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<uint32_t>(i + 1);
        result.hits = std::move(hits);
        return result;
    }

    size_t doc_count() const { return docs_.size(); }
    double avg_doc_len() const { return avg_doc_len_; }
    ScoringMode scoring_mode() const { return mode_; }
    const Bm25Params& bm25_params() const { return params_; }

    const SentenceDoc& doc(uint32_t doc_id) const {
        if (doc_id >= docs_.size()) throw Error(ErrorKind::Validation, "doc_id out of range");
        return docs_[doc_id];
    }

    uint32_t doc_length(uint32_t doc_id) const { return doc_lengths_.at(doc_id); }

    size_t document_frequency(std::string_view token) const {
        auto it = postings_.find(std::string(token));
        return it == postings_.end() ? 0 : it->second.size();
    }

    const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
    const std::vector<std::string>& source_tags() const { return sources_; }
    const std::string& source_tag(const SentenceDoc& d) const { return sources_[d.source_index]; }

    /// Versioned structured-text persistence. Postings are reconstructed
    /// deterministically at load, so the round trip is byte-stable.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write index file: " + path);
        out << "adaprompt-index v1\n";
        out << "scoring " << to_string(mode_) << "\n";
        out << "k1 " << format_double(params_.k1) << "\n";
        out << "b " << format_double(params_.b) << "\n";
        out << "files " << sources_.size() << "\n";
        for (const auto& s : sources_) out << s << "\n";
        out << "docs " << docs_.size() << "\n";
        out << "vocab " << postings_.size() << "\n";
        out << "total_tokens " << total_tokens_ << "\n";
        for (const auto& d : docs_) out << d.source_index << '\t' << d.text << "\n";
        out << "end\n";
        if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
    }

    static CorpusIndex load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot read index file: " + path);
        std::string line;
        auto next = [&](const char* what) {
            if (!std::getline(in, line))
                throw Error(ErrorKind::Validation, std::string("truncated index file: missing ") + what);
            return line;
        };
        if (next("header") != "adaprompt-index v1")
            throw Error(ErrorKind::Validation, "unsupported index format: " + line);
        const auto mode = scoring_mode_from_string(expect_field(next("scoring"), "scoring"));
        Bm25Params params;
        params.k1 = std::stod(expect_field(next("k1"), "k1"));
        params.b = std::stod(expect_field(next("b"), "b"));
        const auto n_files = std::stoul(expect_field(next("files"), "files"));

        CorpusIndex index(mode, params);
        for (size_t i = 0; i < n_files; ++i) index.add_source(next("file path"));
        const auto n_docs = std::stoul(expect_field(next("docs"), "docs"));
        const auto vocab = std::stoul(expect_field(next("vocab"), "vocab"));
        const auto total = std::stoull(expect_field(next("total_tokens"), "total_tokens"));
        for (size_t i = 0; i < n_docs; ++i) {
            next("doc row");
            const auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw Error(ErrorKind::Validation, "malformed doc row in index file");
            const auto source = static_cast<uint32_t>(std::stoul(line.substr(0, tab)));
            if (source >= index.sources_.size())
                throw Error(ErrorKind::Validation, "doc row references unknown source file");
            index.add_sentence(line.substr(tab + 1), source);
        }
        if (next("end marker") != "end")
            throw Error(ErrorKind::Validation, "missing end marker in index file");
        index.finish();
        if (index.postings_.size() != vocab || index.total_tokens_ != total)
            throw Error(ErrorKind::Validation, "index file statistics do not match its contents");
        return index;
    }

private:
    CorpusIndex(ScoringMode mode, Bm25Params params) : mode_(mode), params_(params) {}

    uint32_t add_source(const std::string& tag) {
        sources_.push_back(tag);
        return static_cast<uint32_t>(sources_.size() - 1);
    }

    void add_sentence(std::string_view raw, uint32_t source) {
        std::string text = normalize_sentence(raw);
        if (text.empty()) return;
        const auto doc_id = static_cast<uint32_t>(docs_.size());
        const auto tokens = tokenize(text);
        std::map<std::string, uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [token, count] : tf)
            postings_[token].push_back(Posting{doc_id, count});
        doc_lengths_.push_back(static_cast<uint32_t>(tokens.size()));
        total_tokens_ += tokens.size();
        docs_.push_back(SentenceDoc{doc_id, std::move(text), source});
    }

    void finish() {
        if (docs_.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus contains no non-empty sentences");
        avg_doc_len_ = static_cast<double>(total_tokens_) / static_cast<double>(docs_.size());
    }

    double term_score(uint32_t tf, uint32_t doc_len, double df) const {
        const auto n = static_cast<double>(docs_.size());
        const auto tfd = static_cast<double>(tf);
        if (mode_ == ScoringMode::ClassicTfidf) return tfd * std::log(1.0 + n / df);
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        const double norm = 1.0 - params_.b + params_.b * (static_cast<double>(doc_len) / avg_doc_len_);
        return idf * tfd * (params_.k1 + 1.0) / (tfd + params_.k1 * norm);
    }

    static std::string expect_field(const std::string& row, const std::string& key) {
        if (row.rfind(key + " ", 0) != 0)
            throw Error(ErrorKind::Validation, "index file: expected '" + key + "' row, got: " + row);
        return row.substr(key.size() + 1);
    }

    static std::string format_double(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

    ScoringMode mode_;
    Bm25Params params_;
    std::vector<SentenceDoc> docs_;
    std::vector<uint32_t> doc_lengths_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> sources_;
    uint64_t total_tokens_ = 0;
    double avg_doc_len_ = 0.0;
};

} // namespace adaprompt
