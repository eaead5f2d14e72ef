#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaprompt/errors.hpp"
#include "adaprompt/eval.hpp"
#include "adaprompt/prompt.hpp"

namespace adaprompt {

/// Task declaration: label set, prompt templates with {input}/{mask}
/// placeholders, per-label seed words, and how to read the task's datasets.
struct TaskConfig {
    std::string name;
    std::vector<std::string> labels;
    std::vector<PromptTemplate> templates;
    Verbalizer seed_verbalizer;
    std::map<std::string, std::string> label_map; // dataset value -> task label
    DatasetSchema schema;

    const PromptTemplate& template_by_id(const std::string& id) const {
        for (const auto& t : templates)
            if (t.id() == id) return t;
        throw Error(ErrorKind::Validation, "task '" + name + "' declares no template '" + id + "'");
    }

    static TaskConfig from_json(const nlohmann::json& j) {
        TaskConfig task;
        task.name = j.value("name", "task");
        if (!j.contains("labels") || !j["labels"].is_array())
            throw Error(ErrorKind::Validation, "task config needs a labels array");
        task.labels = j["labels"].get<std::vector<std::string>>();

        if (!j.contains("templates") || !j["templates"].is_array() || j["templates"].empty())
            throw Error(ErrorKind::Validation, "task config needs at least one template");
        for (const auto& t : j["templates"]) {
            if (!t.contains("id") || !t.contains("pattern"))
                throw Error(ErrorKind::Validation, "each template needs an id and a pattern");
            task.templates.push_back(
                PromptTemplate::parse(t["id"].get<std::string>(), t["pattern"].get<std::string>()));
        }

        if (!j.contains("verbalizer") || !j["verbalizer"].is_object())
            throw Error(ErrorKind::Validation, "task config needs a verbalizer object");
        std::map<std::string, std::vector<std::string>> sets;
        for (const auto& label : task.labels) {
            if (!j["verbalizer"].contains(label))
                throw Error(ErrorKind::Validation,
                            "verbalizer lacks seed words for label '" + label + "'");
            sets[label] = j["verbalizer"][label].get<std::vector<std::string>>();
        }
        task.seed_verbalizer = Verbalizer::make(task.labels, std::move(sets));

        if (j.contains("label_map"))
            for (const auto& [k, v] : j["label_map"].items())
                task.label_map[k] = v.get<std::string>();

        if (j.contains("dataset_schema")) {
            const auto& s = j["dataset_schema"];
            task.schema.format = DatasetSchema::format_from_string(s.value("format", "tsv"));
            task.schema.text_field = s.value("text_field", "text");
            task.schema.label_field = s.value("label_field", "label");
            task.schema.id_field = s.value("id_field", "");
        }
        return task;
    }

    static TaskConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot read task config: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Validation, path + ": bad JSON: " + e.what());
        }
        return from_json(j);
    }
};

} // namespace adaprompt
