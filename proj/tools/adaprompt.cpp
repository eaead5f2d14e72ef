// adaprompt — prompt-based zero-shot classification with adaptive retrieval,
// continual pretraining and verbalizer augmentation.
//
// Subcommands: index, adapt, augment-verbalizer, run, eval.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaprompt/adaprompt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adaprompt;

namespace {

std::vector<std::string> expand_corpus_paths(const std::vector<std::string>& inputs) {
    std::vector<std::string> files;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            std::vector<std::string> dir_files;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file()) dir_files.push_back(e.path().string());
            std::sort(dir_files.begin(), dir_files.end());
            files.insert(files.end(), dir_files.begin(), dir_files.end());
        } else {
            files.push_back(p);
        }
    }
    return files;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, path + ": bad JSON: " + std::string(e.what()));
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write file: " + path);
    out << content;
}

// Backend construction shared by adapt / augment-verbalizer / run.
struct BackendOptions {
    std::string model_path;
    std::vector<std::string> vocab_from;
    std::vector<std::string> train_on;
    double alpha = 0.1;
    int radius = 5;
    std::vector<std::string> wire_command;
    size_t probe_top_n = 100;

    static BackendOptions from_json(const json& spec) {
        BackendOptions o;
        const std::string type = spec.value("type", "count");
        if (type == "wire") {
            o.wire_command = spec.at("command").get<std::vector<std::string>>();
            o.probe_top_n = spec.value("probe_top_n", static_cast<size_t>(100));
            return o;
        }
        if (type != "count")
            throw Error(ErrorKind::Validation, "unknown backend type: " + type);
        o.model_path = spec.value("model", "");
        if (spec.contains("vocab_from")) o.vocab_from = spec["vocab_from"].get<std::vector<std::string>>();
        if (spec.contains("train_on")) o.train_on = spec["train_on"].get<std::vector<std::string>>();
        o.alpha = spec.value("alpha", 0.1);
        o.radius = spec.value("radius", 5);
        return o;
    }

    std::shared_ptr<MaskedLmBackend> build(const std::string& mask_marker) const {
        if (!wire_command.empty()) {
            auto transport = std::make_shared<WireTransport>(wire_command);
            return std::make_shared<WireLmBackend>(transport, mask_marker, probe_top_n);
        }
        std::shared_ptr<CountMlmBackend> backend;
        if (!model_path.empty())
            backend = std::make_shared<CountMlmBackend>(CountMlmBackend::load(model_path));
        else
            backend = std::make_shared<CountMlmBackend>(alpha, radius, mask_marker);
        for (const auto& path : vocab_from)
            for (const auto& line : read_lines(path)) backend->add_vocabulary_from_text(line);
        for (const auto& path : train_on) backend->train_on(read_lines(path));
        return backend;
    }
};

struct NliOptions {
    std::string synonyms;
    std::string antonyms;
    std::vector<std::string> wire_command;

    static NliOptions from_json(const json& spec) {
        NliOptions o;
        const std::string type = spec.value("type", "lexical");
        if (type == "wire") {
            o.wire_command = spec.at("command").get<std::vector<std::string>>();
            return o;
        }
        if (type != "lexical")
            throw Error(ErrorKind::Validation, "unknown nli backend type: " + type);
        o.synonyms = spec.value("synonyms", "");
        o.antonyms = spec.value("antonyms", "");
        return o;
    }

    std::unique_ptr<EntailmentBackend> build() const {
        if (!wire_command.empty()) {
            auto transport = std::make_shared<WireTransport>(wire_command);
            return std::make_unique<WireNliBackend>(transport);
        }
        auto nli = std::make_unique<LexicalEntailmentBackend>();
        if (!synonyms.empty()) nli->load_synonyms(synonyms);
        if (!antonyms.empty()) nli->load_antonyms(antonyms);
        return nli;
    }
};

int cmd_index(const std::vector<std::string>& corpus, const std::string& out,
              const std::string& scoring) {
    const auto files = expand_corpus_paths(corpus);
    if (files.empty()) throw Error(ErrorKind::Validation, "no corpus files given");
    auto index = CorpusIndex::build_from_files(files, scoring_mode_from_string(scoring));
    index.save(out);
    std::cout << "indexed " << index.doc_count() << " sentences from " << files.size()
              << " file(s); vocab " << index.postings().size() << "; avg_len "
              << index.avg_doc_len() << "; wrote " << out << "\n";
    return 0;
}

std::vector<std::string> dataset_texts(const TaskConfig& task, const std::string& dataset_path,
                                       const std::string& texts_path) {
    if (!texts_path.empty()) return read_lines(texts_path);
    std::vector<std::string> texts;
    for (const auto& ex : load_dataset(dataset_path, task.schema, task.labels, task.label_map))
        texts.push_back(ex.text);
    return texts;
}

int cmd_adapt(const std::string& index_path, const std::string& task_path,
              const std::string& template_id, const std::string& dataset_path,
              const std::string& texts_path, size_t top_o, size_t k, const std::string& mode,
              const BackendOptions& backend_opts, const std::string& mask_marker,
              const std::string& out) {
    const auto task = TaskConfig::load(task_path);
    const auto& tmpl = template_id.empty() ? task.templates.front() : task.template_by_id(template_id);
    const auto index = CorpusIndex::load(index_path);
    const auto backend = backend_opts.build(mask_marker);
    const auto inputs = dataset_texts(task, dataset_path, texts_path);

    RetrievalPlan plan;
    plan.top_o = top_o;
    plan.k = k;
    plan.mode = retrieval_mode_from_string(mode);
    plan.query_source = texts_path.empty() ? dataset_path : texts_path;

    const auto set = build_retrieval_set(index, *backend, tmpl, inputs, plan);
    save_retrieved_set(set, out, out + ".prov");
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "retrieved raw " << set.size_raw << ", deduped " << set.size_deduped << " ("
              << set.failed_inputs << " failed inputs); wrote " << out << " and " << out
              << ".prov\n";
    return 0;
}

int cmd_augment(const std::string& task_path, const std::string& template_id,
                const std::string& dataset_path, const std::string& texts_path,
                const BackendOptions& backend_opts, const NliOptions& nli_opts,
                double threshold, size_t cap, size_t top_n, size_t candidates_per_label,
                const std::string& mask_marker, const std::string& out) {
    const auto task = TaskConfig::load(task_path);
    const auto& tmpl = template_id.empty() ? task.templates.front() : task.template_by_id(template_id);
    const auto backend = backend_opts.build(mask_marker);
    const auto nli = nli_opts.build();
    const auto inputs = dataset_texts(task, dataset_path, texts_path);

    AugmentationConfig config;
    config.threshold = threshold;
    config.per_label_cap = cap;
    config.per_sample_top_n = top_n;
    config.candidates_per_label = candidates_per_label;

    const auto candidates = extract_candidates(*backend, tmpl, inputs, task.seed_verbalizer, config);
    const auto result = augment_verbalizer(*nli, tmpl, task.seed_verbalizer, candidates, config);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

    const auto j = verbalizer_to_json(result.verbalizer);
    if (!out.empty()) write_text_file(out, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_run(const std::string& config_path) {
    const json config = read_json_file(config_path);

    const auto task = config.contains("task_file")
                          ? TaskConfig::load(config["task_file"].get<std::string>())
                          : TaskConfig::from_json(config.at("task"));
    const std::string mask_marker = config.value("mask_marker", "<mask>");

    std::vector<std::string> template_ids;
    if (config.contains("template_ids"))
        template_ids = config["template_ids"].get<std::vector<std::string>>();
    else
        for (const auto& t : task.templates) template_ids.push_back(t.id());

    PipelineConfig pipeline;
    if (config.contains("pipeline")) {
        const auto& p = config["pipeline"];
        pipeline.iterations = p.value("iterations", 1);
        pipeline.enable_cp = p.value("enable_cp", true);
        pipeline.enable_va = p.value("enable_va", true);
        pipeline.retrain_from_base = p.value("retrain_from_base", false);
    }
    if (config.contains("plan")) {
        const auto& p = config["plan"];
        pipeline.plan.top_o = p.value("top_o", static_cast<size_t>(10));
        pipeline.plan.k = p.value("k", static_cast<size_t>(50));
        pipeline.plan.mode = retrieval_mode_from_string(p.value("mode", "prompt"));
    }
    if (config.contains("augmentation")) {
        const auto& a = config["augmentation"];
        pipeline.augmentation.threshold = a.value("threshold", 0.4);
        pipeline.augmentation.per_label_cap = a.value("per_label_cap", static_cast<size_t>(5));
        pipeline.augmentation.per_sample_top_n = a.value("per_sample_top_n", static_cast<size_t>(20));
        pipeline.augmentation.candidates_per_label =
            a.value("candidates_per_label", static_cast<size_t>(20));
    }
    if (config.contains("training")) {
        auto t = config["training"];
        pipeline.training.learning_rate = t.value("learning_rate", 1e-5);
        pipeline.training.batch_size = t.value("batch_size", 96);
        pipeline.training.epochs = t.value("epochs", 3);
        pipeline.training.eval_checkpoint_step = t.value("eval_checkpoint_step", 500);
        t.erase("learning_rate");
        t.erase("batch_size");
        t.erase("epochs");
        t.erase("eval_checkpoint_step");
        pipeline.training.extra = t;
    }
    pipeline.seed = config.value("seed", static_cast<uint64_t>(0));
    pipeline.max_workers = config.value("max_workers", static_cast<size_t>(0));
    pipeline.plan.query_source = config.value("query_texts", config.value("query_dataset", ""));

    // Query inputs: a labeled dataset's texts or a raw newline-delimited file.
    std::vector<std::string> query_inputs;
    if (config.contains("query_texts"))
        query_inputs = read_lines(config["query_texts"].get<std::string>());
    else if (config.contains("query_dataset"))
        query_inputs = dataset_texts(task, config["query_dataset"].get<std::string>(), "");

    const auto eval_set = load_dataset(config.at("eval_dataset").get<std::string>(), task.schema,
                                       task.labels, task.label_map);

    std::unique_ptr<CorpusIndex> index;
    if (pipeline.effective_iterations() > 0) {
        if (config.contains("index_path"))
            index = std::make_unique<CorpusIndex>(CorpusIndex::load(config["index_path"].get<std::string>()));
        else if (config.contains("corpus"))
            index = std::make_unique<CorpusIndex>(CorpusIndex::build_from_files(
                expand_corpus_paths(config["corpus"].get<std::vector<std::string>>()),
                scoring_mode_from_string(config.value("scoring", "bm25"))));
        else
            throw Error(ErrorKind::Validation,
                        "config enables continual pretraining but names no index_path or corpus");
    }

    const auto backend =
        BackendOptions::from_json(config.value("backend", json{{"type", "count"}})).build(mask_marker);
    std::unique_ptr<EntailmentBackend> nli;
    if (pipeline.enable_va)
        nli = NliOptions::from_json(config.value("nli", json{{"type", "lexical"}})).build();

    const std::string out_dir = config.value("output_dir", "adaprompt-out");
    fs::create_directories(out_dir);

    std::vector<double> per_pattern;
    json metrics_patterns = json::object();
    for (const auto& tid : template_ids) {
        const auto& tmpl = task.template_by_id(tid);
        const auto run = run_adaprompt(index.get(), backend, nli.get(), tmpl,
                                       task.seed_verbalizer, query_inputs, eval_set, pipeline);
        for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";

        write_text_file(out_dir + "/manifest_" + tid + ".json",
                        run.manifest.to_json(true).dump(2) + "\n");
        save_predictions(run.eval.predictions, task.labels, out_dir + "/predictions_" + tid + ".tsv");
        for (size_t i = 0; i < run.retrieved.size(); ++i) {
            const auto stem = out_dir + "/retrieved_" + tid + "_iter" + std::to_string(i + 1);
            save_retrieved_set(run.retrieved[i], stem + ".txt", stem + ".prov");
        }
        per_pattern.push_back(run.eval.accuracy);
        metrics_patterns[tid] = run.eval.accuracy;
        std::cout << "pattern " << tid << ": accuracy " << run.eval.accuracy << " ("
                  << run.eval.predictions.size() << " examples, " << run.eval.failed_inputs
                  << " failed)\n";
    }

    auto report = aggregate_patterns(per_pattern, eval_set.size(), config.value("sample_std", false));
    json metrics = report.to_json();
    metrics["patterns"] = metrics_patterns;
    metrics["summary"] = format_pattern_summary(report);
    write_text_file(out_dir + "/metrics.json", metrics.dump(2) + "\n");
    std::cout << "mean/std(best): " << format_pattern_summary(report) << "\n";
    std::cout << "outputs in " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::vector<std::string>& prediction_files, const std::string& gold_path,
             const std::string& format, const std::string& text_field,
             const std::string& label_field, const std::string& id_field,
             const std::string& out, bool sample_std) {
    std::vector<double> per_pattern;
    size_t n_examples = 0;
    for (const auto& path : prediction_files) {
        const auto predictions = load_predictions(path);
        n_examples = predictions.size();
        if (!gold_path.empty()) {
            DatasetSchema schema;
            schema.format = DatasetSchema::format_from_string(format);
            schema.text_field = text_field;
            schema.label_field = label_field;
            schema.id_field = id_field;
            std::vector<std::string> labels;
            {
                std::set<std::string> seen;
                for (const auto& p : predictions)
                    for (const auto& s : p.scores)
                        if (seen.insert(s.label).second) labels.push_back(s.label);
                // Fall back to gold values when the file carries no scores.
                if (labels.empty())
                    for (const auto& p : predictions)
                        if (seen.insert(p.gold).second) labels.push_back(p.gold);
            }
            const auto gold = load_dataset(gold_path, schema, labels);
            per_pattern.push_back(accuracy(predictions, gold));
        } else {
            per_pattern.push_back(accuracy(predictions));
        }
    }
    auto report = aggregate_patterns(per_pattern, n_examples, sample_std);
    json j = report.to_json();
    j["summary"] = format_pattern_summary(report);
    if (!out.empty()) write_text_file(out, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AdaPrompt: adaptive retrieval, continual pretraining and verbalizer "
                 "augmentation for prompt-based zero-shot classification"};
    app.require_subcommand(1);

    // index
    auto* index_cmd = app.add_subcommand("index", "Build a sentence-level corpus index");
    std::vector<std::string> corpus;
    std::string index_out, scoring = "bm25";
    index_cmd->add_option("--corpus", corpus, "Corpus files or directories (newline-delimited sentences)")
        ->required();
    index_cmd->add_option("--out", index_out, "Output index path")->required();
    index_cmd->add_option("--scoring", scoring, "bm25 or tfidf")->check(CLI::IsMember({"bm25", "tfidf"}));

    // shared backend flags builder
    std::string mask_marker = "<mask>";
    auto add_backend_flags = [&](CLI::App* cmd, BackendOptions& opts) {
        cmd->add_option("--model", opts.model_path, "Count-model file to load");
        cmd->add_option("--vocab-from", opts.vocab_from, "Files whose tokens seed the vocabulary");
        cmd->add_option("--train-on", opts.train_on, "Files of sentences to train the count model on");
        cmd->add_option("--alpha", opts.alpha, "Additive smoothing");
        cmd->add_option("--radius", opts.radius, "Co-occurrence window radius");
        cmd->add_option("--backend-cmd", opts.wire_command, "External masked-LM server command");
        cmd->add_option("--probe-top-n", opts.probe_top_n,
                        "Predictions fetched when probing word probabilities over the wire");
    };

    // adapt
    auto* adapt_cmd = app.add_subcommand("adapt", "Build the deduplicated retrieval set D_p");
    std::string adapt_index, adapt_task, adapt_template, adapt_dataset, adapt_texts, adapt_mode = "prompt",
                adapt_out = "retrieved.txt";
    size_t adapt_top_o = 10, adapt_k = 50;
    BackendOptions adapt_backend;
    adapt_cmd->add_option("--index", adapt_index, "Index file")->required();
    adapt_cmd->add_option("--task", adapt_task, "Task config JSON")->required();
    adapt_cmd->add_option("--template", adapt_template, "Template id (default: first)");
    adapt_cmd->add_option("--dataset", adapt_dataset, "Labeled dataset whose texts become queries");
    adapt_cmd->add_option("--texts", adapt_texts, "Raw newline-delimited query texts");
    adapt_cmd->add_option("--top-o", adapt_top_o, "Predictions per input");
    adapt_cmd->add_option("--k", adapt_k, "Hits per query");
    adapt_cmd->add_option("--mode", adapt_mode, "prompt or raw")->check(CLI::IsMember({"prompt", "raw"}));
    adapt_cmd->add_option("--out", adapt_out, "Output sentence file (provenance at <out>.prov)");
    adapt_cmd->add_option("--mask-marker", mask_marker, "Mask marker literal");
    add_backend_flags(adapt_cmd, adapt_backend);

    // augment-verbalizer
    auto* augment_cmd = app.add_subcommand("augment-verbalizer",
                                           "Expand seed verbalizers with NLI-filtered candidates");
    std::string aug_task, aug_template, aug_dataset, aug_texts, aug_out, aug_syn, aug_ant;
    std::vector<std::string> aug_nli_cmd;
    double aug_threshold = 0.4;
    size_t aug_cap = 5, aug_top_n = 20, aug_cpl = 20;
    BackendOptions aug_backend;
    augment_cmd->add_option("--task", aug_task, "Task config JSON")->required();
    augment_cmd->add_option("--template", aug_template, "Template id (default: first)");
    augment_cmd->add_option("--dataset", aug_dataset, "Labeled dataset whose texts drive extraction");
    augment_cmd->add_option("--texts", aug_texts, "Raw newline-delimited input texts");
    augment_cmd->add_option("--threshold", aug_threshold, "Entailment threshold t");
    augment_cmd->add_option("--cap", aug_cap, "Per-label verbalizer cap");
    augment_cmd->add_option("--top-n", aug_top_n, "Predictions collected per input");
    augment_cmd->add_option("--candidates-per-label", aug_cpl, "|C| = this x |L|");
    augment_cmd->add_option("--synonyms", aug_syn, "Synonym lexicon for the lexical NLI backend");
    augment_cmd->add_option("--antonyms", aug_ant, "Antonym lexicon for the lexical NLI backend");
    augment_cmd->add_option("--nli-cmd", aug_nli_cmd, "External NLI server command");
    augment_cmd->add_option("--out", aug_out, "Write augmented verbalizer JSON here");
    augment_cmd->add_option("--mask-marker", mask_marker, "Mask marker literal");
    add_backend_flags(augment_cmd, aug_backend);

    // run
    auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from one config file");
    std::string run_config;
    run_cmd->add_option("--config", run_config, "Run config JSON")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score prediction files and aggregate patterns");
    std::vector<std::string> eval_predictions;
    std::string eval_gold, eval_format = "tsv", eval_text_field = "text",
                eval_label_field = "label", eval_id_field, eval_out;
    bool eval_sample_std = false;
    eval_cmd->add_option("--predictions", eval_predictions, "Prediction files (one per pattern)")
        ->required();
    eval_cmd->add_option("--gold", eval_gold, "Gold dataset file (defaults to the gold column)");
    eval_cmd->add_option("--format", eval_format, "Gold file format: tsv or jsonl");
    eval_cmd->add_option("--text-field", eval_text_field, "Gold text field name");
    eval_cmd->add_option("--label-field", eval_label_field, "Gold label field name");
    eval_cmd->add_option("--id-field", eval_id_field, "Gold id field name");
    eval_cmd->add_option("--out", eval_out, "Write the metrics report here");
    eval_cmd->add_flag("--sample-std", eval_sample_std, "Use sample instead of population std");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(index_cmd)) return cmd_index(corpus, index_out, scoring);
        if (app.got_subcommand(adapt_cmd))
            return cmd_adapt(adapt_index, adapt_task, adapt_template, adapt_dataset, adapt_texts,
                             adapt_top_o, adapt_k, adapt_mode, adapt_backend, mask_marker, adapt_out);
        if (app.got_subcommand(augment_cmd)) {
            NliOptions nli;
            nli.synonyms = aug_syn;
            nli.antonyms = aug_ant;
            nli.wire_command = aug_nli_cmd;
            return cmd_augment(aug_task, aug_template, aug_dataset, aug_texts, aug_backend, nli,
                               aug_threshold, aug_cap, aug_top_n, aug_cpl, mask_marker, aug_out);
        }
        if (app.got_subcommand(run_cmd)) return cmd_run(run_config);
        if (app.got_subcommand(eval_cmd))
            return cmd_eval(eval_predictions, eval_gold, eval_format, eval_text_field,
                            eval_label_field, eval_id_field, eval_out, eval_sample_std);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
