#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaprompt/corpus_index.hpp"
#include "adaprompt/errors.hpp"
#include "adaprompt/eval.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/nli.hpp"
#include "adaprompt/prompt.hpp"
#include "adaprompt/query_builder.hpp"
#include "adaprompt/verbalizer_augment.hpp"

namespace adaprompt {

/// Full-run switches. iterations: 0 = plain zero-shot, 1 = single adaptation,
/// 2 = iterative adaptation. enable_cp / enable_va / plan.mode are the
/// ablation switches (-CP, -va, -PR).
struct PipelineConfig {
    int iterations = 1;
    bool enable_cp = true;
    bool enable_va = true;
    /// Iteration i trains from the iteration-(i-1) state by default; set to
    /// true to restart each iteration's training from the base model instead.
    bool retrain_from_base = false;
    RetrievalPlan plan;
    AugmentationConfig augmentation;
    TrainConfig training;
    uint64_t seed = 0;
    size_t max_workers = 0; // 0: hardware concurrency

    void validate() const {
        if (iterations < 0 || iterations > 2)
            throw Error(ErrorKind::Validation, "iterations must be 0, 1 or 2");
        plan.validate();
        augmentation.validate();
    }

    /// Training iterations actually run; disabling continual pretraining
    /// skips retrieval and training entirely.
    int effective_iterations() const { return enable_cp ? iterations : 0; }

    nlohmann::json to_json() const {
        return {{"iterations", iterations},
                {"enable_cp", enable_cp},
                {"enable_va", enable_va},
                {"retrain_from_base", retrain_from_base},
                {"plan",
                 {{"top_o", plan.top_o},
                  {"k", plan.k},
                  {"mode", to_string(plan.mode)},
                  {"query_source", plan.query_source}}},
                {"augmentation",
                 {{"threshold", augmentation.threshold},
                  {"per_label_cap", augmentation.per_label_cap},
                  {"per_sample_top_n", augmentation.per_sample_top_n},
                  {"candidates_per_label", augmentation.candidates_per_label}}},
                {"training", training.to_json()},
                {"seed", seed}};
    }
};

inline nlohmann::json verbalizer_to_json(const Verbalizer& v) {
    nlohmann::json sets = nlohmann::json::object();
    for (const auto& label : v.labels) sets[label] = v.words(label);
    return {{"labels", v.labels},
            {"word_sets", sets},
            {"provenance", v.provenance == Verbalizer::Provenance::Seed ? "seed" : "augmented"}};
}

struct IterationRecord {
    int iteration = 0;
    std::string checkpoint;
    size_t retrieved_raw = 0;
    size_t retrieved_deduped = 0;
    size_t failed_inputs = 0;
};

/// Everything needed to replay a run with the built-in backends. Two runs
/// with identical config and state agree on every field except timing.
struct RunManifest {
    nlohmann::json config_snapshot;
    uint64_t seed = 0;
    std::string base_checkpoint;
    std::vector<IterationRecord> iterations;
    std::string final_checkpoint;
    nlohmann::json final_verbalizer;
    std::string template_id;
    size_t n_query_inputs = 0;
    size_t n_eval_inputs = 0;
    double wall_seconds = 0.0;

    nlohmann::json to_json(bool include_timing = true) const {
        nlohmann::json iters = nlohmann::json::array();
        for (const auto& it : iterations)
            iters.push_back({{"iteration", it.iteration},
                             {"checkpoint", it.checkpoint},
                             {"retrieved_raw", it.retrieved_raw},
                             {"retrieved_deduped", it.retrieved_deduped},
                             {"failed_inputs", it.failed_inputs}});
        nlohmann::json j = {{"config", config_snapshot},
                            {"seed", seed},
                            {"template_id", template_id},
                            {"base_checkpoint", base_checkpoint},
                            {"iterations", iters},
                            {"final_checkpoint", final_checkpoint},
                            {"final_verbalizer", final_verbalizer},
                            {"n_query_inputs", n_query_inputs},
                            {"n_eval_inputs", n_eval_inputs}};
        if (include_timing) j["wall_seconds"] = wall_seconds;
        return j;
    }
};

/// Stage failures carry the stage name and the manifest accumulated so far.
class PipelineError : public Error {
public:
    PipelineError(const std::string& stage, const std::string& message, nlohmann::json partial)
        : Error(ErrorKind::Pipeline, "stage " + stage + ": " + message),
          stage_(stage),
          partial_manifest_(std::move(partial)) {}

    const std::string& stage() const { return stage_; }
    const nlohmann::json& partial_manifest() const { return partial_manifest_; }

private:
    std::string stage_;
    nlohmann::json partial_manifest_;
};

struct ZeroShotResult {
    std::vector<Prediction> predictions;
    double accuracy = 0.0;
    size_t failed_inputs = 0;
    std::vector<std::string> warnings;
};

/// Applies predict_label to every example. A failing input is logged, gets an
/// empty prediction, and counts as incorrect.
inline ZeroShotResult run_zero_shot(const MaskedLmBackend& backend, const PromptTemplate& tmpl,
                                    const Verbalizer& verbalizer,
                                    const std::vector<LabeledExample>& eval_set) {
    verbalizer.validate();
    if (eval_set.empty()) throw Error(ErrorKind::EmptyDataset, "evaluation set is empty");
    ZeroShotResult result;
    result.predictions.reserve(eval_set.size());
    for (const auto& ex : eval_set) {
        Prediction p;
        p.example_id = ex.example_id;
        p.gold = ex.gold;
        try {
            p.predicted = predict_label(backend, tmpl, verbalizer, ex.text, &p.scores,
                                        &result.warnings);
        } catch (const Error& e) {
            ++result.failed_inputs;
            result.warnings.push_back("example " + ex.example_id + " failed: " + e.what());
            p.predicted.clear();
            p.scores.clear();
        }
        result.predictions.push_back(std::move(p));
    }
    result.accuracy = accuracy(result.predictions);
    return result;
}

struct AdapromptRun {
    RunManifest manifest;
    ZeroShotResult eval;
    Verbalizer final_verbalizer;
    std::vector<RetrievedSet> retrieved; // one per iteration, in order
    std::shared_ptr<MaskedLmBackend> final_backend;
    AugmentationResult augmentation; // empty when enable_va is false
    std::vector<std::string> warnings;
};

/// The full adaptation flow: iteration i builds queries with the state from
/// iteration i-1, retrieves D_p(i) and trains cumulatively on it; verbalizer
/// augmentation (when enabled) runs once after the final iteration using the
/// final model's predictions; evaluation uses the final model and final
/// verbalizer. The base backend state is never modified.
inline AdapromptRun run_adaprompt(const CorpusIndex* index,
                                  std::shared_ptr<MaskedLmBackend> base_backend,
                                  const EntailmentBackend* nli, const PromptTemplate& tmpl,
                                  const Verbalizer& seed_verbalizer,
                                  const std::vector<std::string>& query_inputs,
                                  const std::vector<LabeledExample>& eval_set,
                                  const PipelineConfig& config) {
    config.validate();
    seed_verbalizer.validate();
    const auto started = std::chrono::steady_clock::now();

    AdapromptRun run;
    run.manifest.config_snapshot = config.to_json();
    run.manifest.seed = config.seed;
    run.manifest.base_checkpoint = base_backend->checkpoint_id();
    run.manifest.template_id = tmpl.id();
    run.manifest.n_query_inputs = query_inputs.size();
    run.manifest.n_eval_inputs = eval_set.size();

    auto fail = [&](const std::string& stage, const std::string& message) -> PipelineError {
        return PipelineError(stage, message, run.manifest.to_json(false));
    };

    std::shared_ptr<MaskedLmBackend> current = base_backend;

    const int train_iterations = config.effective_iterations();
    if (train_iterations > 0 && index == nullptr)
        throw fail("retrieval", "no corpus index configured");

    for (int i = 1; i <= train_iterations; ++i) {
        RetrievedSet rs;
        try {
            rs = build_retrieval_set(*index, *current, tmpl, query_inputs, config.plan,
                                     config.max_workers);
        } catch (const std::exception& e) {
            throw fail("retrieval[" + std::to_string(i) + "]", e.what());
        }
        try {
            const auto& train_source = config.retrain_from_base ? base_backend : current;
            current = train_source->continual_train(rs.sentences, config.training, &run.warnings);
        } catch (const std::exception& e) {
            throw fail("training[" + std::to_string(i) + "]", e.what());
        }
        run.manifest.iterations.push_back(IterationRecord{
            i, current->checkpoint_id(), rs.size_raw, rs.size_deduped, rs.failed_inputs});
        for (const auto& w : rs.warnings) run.warnings.push_back(w);
        run.retrieved.push_back(std::move(rs));
    }

    run.final_verbalizer = seed_verbalizer;
    if (config.enable_va) {
        if (nli == nullptr) throw fail("augmentation", "no entailment backend configured");
        try {
            const auto candidates = extract_candidates(*current, tmpl, query_inputs,
                                                       seed_verbalizer, config.augmentation);
            run.augmentation =
                augment_verbalizer(*nli, tmpl, seed_verbalizer, candidates, config.augmentation);
            run.final_verbalizer = run.augmentation.verbalizer;
            for (const auto& w : run.augmentation.warnings) run.warnings.push_back(w);
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw fail("augmentation", e.what());
        }
    }

    run.manifest.final_checkpoint = current->checkpoint_id();
    run.manifest.final_verbalizer = verbalizer_to_json(run.final_verbalizer);

    try {
        run.eval = run_zero_shot(*current, tmpl, run.final_verbalizer, eval_set);
    } catch (const std::exception& e) {
        throw fail("evaluation", e.what());
    }
    for (const auto& w : run.eval.warnings) run.warnings.push_back(w);

    run.final_backend = std::move(current);
    run.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return run;
}

} // namespace adaprompt
