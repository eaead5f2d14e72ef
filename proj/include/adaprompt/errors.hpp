#pragma once

#include <stdexcept>
#include <string>

namespace adaprompt {

/// Failure categories surfaced by the library. Each maps to one of the
/// documented error conditions of the public operations.
enum class ErrorKind {
    Ingestion,         // unreadable corpus file
    EmptyCorpus,       // index built from zero sentences
    MalformedPrompt,   // masked text without exactly one mask marker
    MalformedTemplate, // template missing an input or mask slot
    EmptyModel,        // prediction requested from a backend with no vocabulary
    BackendTransport,  // external backend unreachable or protocol violation
    Validation,        // bad dataset row, unknown label, bad config value
    Alignment,         // prediction/gold id mismatch
    EmptyDataset,
    Io,
    Pipeline,          // stage failure inside a pipeline run
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Ingestion: return "ingestion";
        case ErrorKind::EmptyCorpus: return "empty-corpus";
        case ErrorKind::MalformedPrompt: return "malformed-prompt";
        case ErrorKind::MalformedTemplate: return "malformed-template";
        case ErrorKind::EmptyModel: return "empty-model";
        case ErrorKind::BackendTransport: return "backend-transport";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Alignment: return "alignment";
        case ErrorKind::EmptyDataset: return "empty-dataset";
        case ErrorKind::Io: return "io";
        case ErrorKind::Pipeline: return "pipeline";
    }
    return "unknown";
}

} // namespace adaprompt
