#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adaprompt/errors.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

/// One mask-filler candidate. Prediction lists are sorted by probability
/// descending, ties by token ascending; probabilities over the full
/// vocabulary sum to 1.
struct FillerPrediction {
    std::string token;
    double prob = 0.0;
};

struct WordProbability {
    double prob = 0.0;
    bool out_of_vocabulary = false;
};

/// Continual-pretraining hyperparameters. The count backend treats training
/// as a single counting pass; external neural backends receive these fields
/// verbatim on the wire.
struct TrainConfig {
    double learning_rate = 1e-5;
    int batch_size = 96;
    int epochs = 3;
    int eval_checkpoint_step = 500;
    nlohmann::json extra = nlohmann::json::object();

    nlohmann::json to_json() const {
        nlohmann::json j = extra;
        j["learning_rate"] = learning_rate;
        j["batch_size"] = batch_size;
        j["epochs"] = epochs;
        j["eval_checkpoint_step"] = eval_checkpoint_step;
        return j;
    }
};

/// The model M: predicts mask fillers and can be continually trained.
/// Implementations must keep prediction pure for a fixed state, and
/// continual_train must return a distinct state, leaving the original
/// untouched.
class MaskedLmBackend {
public:
    virtual ~MaskedLmBackend() = default;

    virtual std::vector<FillerPrediction> predict_fillers(std::string_view masked_text,
                                                          size_t top_n) const = 0;

    /// Pr[mask = word | masked_text]. Words outside the vocabulary get the
    /// backend's smoothed/OOV probability and are flagged, never rejected.
    virtual WordProbability word_probability(std::string_view masked_text,
                                             std::string_view word) const = 0;

    virtual std::shared_ptr<MaskedLmBackend> continual_train(
        const std::vector<std::string>& sentences, const TrainConfig& config,
        std::vector<std::string>* warnings = nullptr) const = 0;

    virtual std::string checkpoint_id() const = 0;
    virtual const std::string& mask_marker() const = 0;

protected:
    /// Splits masked_text at the configured marker, requiring exactly one
    /// occurrence.
    static std::pair<std::string, std::string> split_at_mask(std::string_view masked_text,
                                                             const std::string& marker) {
        const auto first = masked_text.find(marker);
        if (first == std::string_view::npos)
            throw Error(ErrorKind::MalformedPrompt, "masked text contains no mask marker");
        if (masked_text.find(marker, first + marker.size()) != std::string_view::npos)
            throw Error(ErrorKind::MalformedPrompt, "masked text contains multiple mask markers");
        return {std::string(masked_text.substr(0, first)),
                std::string(masked_text.substr(first + marker.size()))};
    }
};

/// Deterministic desk-scale stand-in for a masked LM: a window co-occurrence
/// model with additive smoothing.
///
/// For candidate w with context tokens C (the tokens within `radius` of the
/// mask position on either side):
///   s(w) = ln((uni(w) + a) / (T + a*V)) + sum_{c in C} ln((cooc(w,c) + a) / (uni(w) + a*V))
/// with T = total trained tokens and V = |vocab|. The mask distribution is
/// exp(s(w)) normalized over the vocabulary.
class CountMlmBackend final : public MaskedLmBackend {
public:
    explicit CountMlmBackend(double alpha = 0.1, int radius = 5,
                             std::string mask_marker = "<mask>")
        : alpha_(alpha), radius_(radius), mask_marker_(std::move(mask_marker)) {
        if (alpha_ <= 0.0) throw Error(ErrorKind::Validation, "smoothing alpha must be > 0");
        if (radius_ < 1) throw Error(ErrorKind::Validation, "window radius must be >= 1");
    }

    /// Registers tokens with zero counts. A vocabulary with all-zero counts
    /// yields the uniform distribution.
    void add_vocabulary(const std::vector<std::string>& tokens) {
        for (const auto& t : tokens) unigram_.try_emplace(t, 0);
    }

    void add_vocabulary_from_text(std::string_view text) { add_vocabulary(tokenize(text)); }

    /// One counting pass over the sentences; order and repetition behave
    /// additively, so training is permutation-invariant.
    void train_on(const std::vector<std::string>& sentences) {
        for (const auto& sentence : sentences) {
            const auto tokens = tokenize(sentence);
            const auto n = static_cast<int>(tokens.size());
            for (int i = 0; i < n; ++i) {
                ++unigram_[tokens[i]];
                ++total_tokens_;
                const int lo = std::max(0, i - radius_);
                const int hi = std::min(n - 1, i + radius_);
                for (int j = lo; j <= hi; ++j) {
                    if (j == i) continue;
                    ++cooccur_[{tokens[i], tokens[j]}];
                }
            }
        }
    }

    std::vector<FillerPrediction> predict_fillers(std::string_view masked_text,
                                                  size_t top_n) const override {
        const auto context = mask_context(masked_text);
        if (unigram_.empty())
            throw Error(ErrorKind::EmptyModel, "count backend has no vocabulary");
        if (top_n == 0) return {};
        auto dist = mask_distribution(context);
        std::sort(dist.begin(), dist.end(), [](const FillerPrediction& a, const FillerPrediction& b) {
            if (a.prob != b.prob) return a.prob > b.prob;
            return a.token < b.token;
        });
        if (dist.size() > top_n) dist.resize(top_n);
        return dist;
    }

    WordProbability word_probability(std::string_view masked_text,
                                     std::string_view word) const override {
        const auto context = mask_context(masked_text);
        if (unigram_.empty())
            throw Error(ErrorKind::EmptyModel, "count backend has no vocabulary");
        const std::string folded = fold_token(word);
        double z = 0.0;
        double target = 0.0;
        bool in_vocab = unigram_.count(folded) > 0;
        const double max_score = max_context_score(context, in_vocab ? nullptr : &folded);
        for (const auto& [token, count] : unigram_)
            z += std::exp(score(context, token) - max_score);
        if (in_vocab) {
            target = std::exp(score(context, folded) - max_score);
        } else {
            // Smoothed OOV candidate: normalize over vocab plus the candidate.
            target = std::exp(score(context, folded) - max_score);
            z += target;
        }
        return WordProbability{target / z, !in_vocab};
    }

    std::shared_ptr<MaskedLmBackend> continual_train(
        const std::vector<std::string>& sentences, const TrainConfig&,
        std::vector<std::string>* warnings = nullptr) const override {
        auto next = std::make_shared<CountMlmBackend>(*this);
        if (sentences.empty()) {
            if (warnings) warnings->push_back("continual_train called with an empty sentence set; state unchanged");
            return next;
        }
        next->train_on(sentences);
        return next;
    }

    /// Content hash of the serialized state; equal states share an id.
    std::string checkpoint_id() const override {
        std::ostringstream os;
        serialize(os);
        const std::string bytes = os.str();
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 1099511628211ull;
        }
        std::ostringstream hex;
        hex << "count-" << std::hex << h;
        return hex.str();
    }

    const std::string& mask_marker() const override { return mask_marker_; }

    /// Raw additive-smoothing log score for a candidate given context tokens.
    double score(const std::vector<std::string>& context, const std::string& word) const {
        const double v = static_cast<double>(unigram_.size());
        const double t = static_cast<double>(total_tokens_);
        const double uni = static_cast<double>(unigram_count(word));
        double s = std::log((uni + alpha_) / (t + alpha_ * v));
        for (const auto& c : context)
            s += std::log((cooccur_count(word, c) + alpha_) / (uni + alpha_ * v));
        return s;
    }

    /// Normalized distribution over the vocabulary for the given context.
    std::vector<FillerPrediction> mask_distribution(const std::vector<std::string>& context) const {
        if (unigram_.empty())
            throw Error(ErrorKind::EmptyModel, "count backend has no vocabulary");
        std::vector<FillerPrediction> dist;
        dist.reserve(unigram_.size());
        const double max_score = max_context_score(context, nullptr);
        double z = 0.0;
        for (const auto& [token, count] : unigram_) {
            const double e = std::exp(score(context, token) - max_score);
            dist.push_back(FillerPrediction{token, e});
            z += e;
        }
        for (auto& p : dist) p.prob /= z;
        return dist;
    }

    /// Context tokens for the single mask position: up to `radius` tokens on
    /// each side.
    std::vector<std::string> mask_context(std::string_view masked_text) const {
        auto [left, right] = split_at_mask(masked_text, mask_marker_);
        auto left_tokens = tokenize(left);
        auto right_tokens = tokenize(right);
        std::vector<std::string> context;
        const size_t lo = left_tokens.size() > static_cast<size_t>(radius_)
                              ? left_tokens.size() - static_cast<size_t>(radius_)
                              : 0;
        for (size_t i = lo; i < left_tokens.size(); ++i) context.push_back(left_tokens[i]);
        for (size_t i = 0; i < right_tokens.size() && i < static_cast<size_t>(radius_); ++i)
            context.push_back(right_tokens[i]);
        return context;
    }

    uint64_t unigram_count(const std::string& token) const {
        auto it = unigram_.find(token);
        return it == unigram_.end() ? 0 : it->second;
    }

    uint64_t cooccur_count(const std::string& token, const std::string& context_token) const {
        auto it = cooccur_.find({token, context_token});
        return it == cooccur_.end() ? 0 : it->second;
    }

    size_t vocab_size() const { return unigram_.size(); }
    uint64_t total_tokens() const { return total_tokens_; }
    double alpha() const { return alpha_; }
    int radius() const { return radius_; }

    void serialize(std::ostream& out) const {
        out << "adaprompt-countlm v1\n";
        out << "alpha " << format_double(alpha_) << "\n";
        out << "radius " << radius_ << "\n";
        out << "mask " << mask_marker_ << "\n";
        out << "total " << total_tokens_ << "\n";
        out << "vocab " << unigram_.size() << "\n";
        for (const auto& [token, count] : unigram_) out << token << ' ' << count << "\n";
        out << "cooccur " << cooccur_.size() << "\n";
        for (const auto& [key, count] : cooccur_)
            out << key.first << ' ' << key.second << ' ' << count << "\n";
        out << "end\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write model file: " + path);
        serialize(out);
        if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
    }

    static CountMlmBackend deserialize(std::istream& in) {
        std::string line;
        auto next = [&](const char* what) {
            if (!std::getline(in, line))
                throw Error(ErrorKind::Validation, std::string("truncated model file: missing ") + what);
            return line;
        };
        if (next("header") != "adaprompt-countlm v1")
            throw Error(ErrorKind::Validation, "unsupported model format: " + line);
        const double alpha = std::stod(field(next("alpha"), "alpha"));
        const int radius = std::stoi(field(next("radius"), "radius"));
        const std::string marker = field(next("mask"), "mask");
        const uint64_t total = std::stoull(field(next("total"), "total"));
        const size_t vocab = std::stoul(field(next("vocab"), "vocab"));
        CountMlmBackend model(alpha, radius, marker);
        for (size_t i = 0; i < vocab; ++i) {
            std::istringstream row(next("vocab row"));
            std::string token;
            uint64_t count;
            if (!(row >> token >> count))
                throw Error(ErrorKind::Validation, "malformed vocab row in model file");
            model.unigram_[token] = count;
        }
        const size_t n_cooccur = std::stoul(field(next("cooccur"), "cooccur"));
        for (size_t i = 0; i < n_cooccur; ++i) {
            std::istringstream row(next("cooccur row"));
            std::string a, b;
            uint64_t count;
            if (!(row >> a >> b >> count))
                throw Error(ErrorKind::Validation, "malformed cooccur row in model file");
            model.cooccur_[{a, b}] = count;
        }
        if (next("end marker") != "end")
            throw Error(ErrorKind::Validation, "missing end marker in model file");
        model.total_tokens_ = total;
        return model;
    }

    static CountMlmBackend load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot read model file: " + path);
        return deserialize(in);
    }

private:
    double max_context_score(const std::vector<std::string>& context,
                             const std::string* extra_word) const {
        double m = extra_word ? score(context, *extra_word) : -std::numeric_limits<double>::infinity();
        for (const auto& [token, count] : unigram_) m = std::max(m, score(context, token));
        return m;
    }

    static std::string field(const std::string& row, const std::string& key) {
        if (row.rfind(key + " ", 0) != 0)
            throw Error(ErrorKind::Validation, "model file: expected '" + key + "' row, got: " + row);
        return row.substr(key.size() + 1);
    }

    static std::string format_double(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

    double alpha_;
    int radius_;
    std::string mask_marker_;
    std::map<std::string, uint64_t> unigram_;
    std::map<std::pair<std::string, std::string>, uint64_t> cooccur_;
    uint64_t total_tokens_ = 0;
};

} // namespace adaprompt
