#pragma once

#include <csignal>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "adaprompt/errors.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/nli.hpp"
#include "adaprompt/text.hpp"

namespace adaprompt {

/// Newline-delimited JSON transport to a child process: one request line in,
/// one response line out, strictly in order. Thread-safe; concurrent callers
/// are serialized so responses always match requests.
class WireTransport {
public:
    explicit WireTransport(const std::vector<std::string>& command) {
        if (command.empty())
            throw Error(ErrorKind::BackendTransport, "backend command must not be empty");
        ignore_sigpipe_once();

        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw Error(ErrorKind::BackendTransport, "pipe creation failed");

        pid_ = fork();
        if (pid_ < 0) throw Error(ErrorKind::BackendTransport, "fork failed");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            std::vector<char*> argv;
            for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
            argv.push_back(nullptr);
            execvp(argv[0], argv.data());
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        command_ = command;
    }

    WireTransport(const WireTransport&) = delete;
    WireTransport& operator=(const WireTransport&) = delete;

    ~WireTransport() {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 200; ++i) {
                if (waitpid(pid_, &status, WNOHANG) != 0) return;
                usleep(10000);
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, &status, 0);
        }
    }

    nlohmann::json request(const nlohmann::json& req) {
        std::lock_guard<std::mutex> lock(mu_);
        return request_unlocked(req);
    }

    /// Loads `checkpoint` first when the child is positioned elsewhere, then
    /// issues the request, all under one lock.
    nlohmann::json request_at_checkpoint(const std::string& checkpoint, const nlohmann::json& req) {
        std::lock_guard<std::mutex> lock(mu_);
        if (active_checkpoint_ != checkpoint) {
            const auto resp =
                request_unlocked({{"op", "load_checkpoint"}, {"checkpoint", checkpoint}});
            if (!resp.value("ok", false))
                throw Error(ErrorKind::BackendTransport,
                            "backend refused to load checkpoint '" + checkpoint + "'");
            active_checkpoint_ = checkpoint;
        }
        return request_unlocked(req);
    }

    void mark_active_checkpoint(const std::string& checkpoint) {
        std::lock_guard<std::mutex> lock(mu_);
        active_checkpoint_ = checkpoint;
    }

private:
    static void ignore_sigpipe_once() {
        static std::once_flag flag;
        std::call_once(flag, [] { signal(SIGPIPE, SIG_IGN); });
    }

    nlohmann::json request_unlocked(const nlohmann::json& req) {
        std::string line = req.dump();
        line.push_back('\n');
        size_t sent = 0;
        while (sent < line.size()) {
            const ssize_t n = write(write_fd_, line.data() + sent, line.size() - sent);
            if (n <= 0)
                throw Error(ErrorKind::BackendTransport,
                            "backend '" + command_.front() + "' is unreachable (write failed)");
            sent += static_cast<size_t>(n);
        }
        std::string response = read_line();
        try {
            return nlohmann::json::parse(response);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::BackendTransport,
                        std::string("backend sent malformed JSON: ") + e.what());
        }
    }

    std::string read_line() {
        while (true) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            char chunk[4096];
            const ssize_t n = read(read_fd_, chunk, sizeof(chunk));
            if (n <= 0)
                throw Error(ErrorKind::BackendTransport,
                            "backend '" + command_.front() + "' closed the connection");
            buffer_.append(chunk, static_cast<size_t>(n));
        }
    }

    std::vector<std::string> command_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::mutex mu_;
    std::string buffer_;
    std::string active_checkpoint_ = "base";
};

/// Masked LM served by an external process. The initial state is checkpoint
/// "base"; training returns a new handle bound to the checkpoint id the
/// server reports, and the transport reloads checkpoints on demand so every
/// handle stays usable.
class WireLmBackend final : public MaskedLmBackend {
public:
    WireLmBackend(std::shared_ptr<WireTransport> transport, std::string mask_marker = "<mask>",
                  size_t probe_top_n = 100, std::string checkpoint = "base")
        : transport_(std::move(transport)),
          mask_marker_(std::move(mask_marker)),
          probe_top_n_(probe_top_n),
          checkpoint_(std::move(checkpoint)) {}

    std::vector<FillerPrediction> predict_fillers(std::string_view masked_text,
                                                  size_t top_n) const override {
        split_at_mask(masked_text, mask_marker_); // validate marker count locally
        if (top_n == 0) return {};
        const auto resp = transport_->request_at_checkpoint(
            checkpoint_, {{"op", "predict"},
                          {"text", std::string(masked_text)},
                          {"mask_token", mask_marker_},
                          {"top_n", top_n}});
        if (!resp.contains("predictions") || !resp["predictions"].is_array())
            throw Error(ErrorKind::BackendTransport, "predict response lacks a predictions array");
        std::vector<FillerPrediction> out;
        for (const auto& p : resp["predictions"]) {
            if (!p.contains("token") || !p.contains("prob"))
                throw Error(ErrorKind::BackendTransport, "prediction entry lacks token/prob");
            out.push_back(FillerPrediction{p["token"].get<std::string>(), p["prob"].get<double>()});
        }
        std::sort(out.begin(), out.end(), [](const FillerPrediction& a, const FillerPrediction& b) {
            if (a.prob != b.prob) return a.prob > b.prob;
            return a.token < b.token;
        });
        if (out.size() > top_n) out.resize(top_n);
        return out;
    }

    WordProbability word_probability(std::string_view masked_text,
                                     std::string_view word) const override {
        const auto predictions = predict_fillers(masked_text, probe_top_n_);
        const std::string folded = fold_token(word);
        for (const auto& p : predictions)
            if (fold_token(p.token) == folded) return WordProbability{p.prob, false};
        return WordProbability{0.0, true};
    }

    std::shared_ptr<MaskedLmBackend> continual_train(
        const std::vector<std::string>& sentences, const TrainConfig& config,
        std::vector<std::string>* warnings = nullptr) const override {
        if (sentences.empty()) {
            if (warnings)
                warnings->push_back("continual_train called with an empty sentence set; state unchanged");
            return std::make_shared<WireLmBackend>(transport_, mask_marker_, probe_top_n_, checkpoint_);
        }
        const auto resp = transport_->request_at_checkpoint(
            checkpoint_,
            {{"op", "train"}, {"sentences", sentences}, {"config", config.to_json()}});
        if (!resp.value("ok", false) || !resp.contains("checkpoint"))
            throw Error(ErrorKind::BackendTransport, "train request failed or returned no checkpoint");
        const auto id = resp["checkpoint"].get<std::string>();
        transport_->mark_active_checkpoint(id);
        return std::make_shared<WireLmBackend>(transport_, mask_marker_, probe_top_n_, id);
    }

    std::string checkpoint_id() const override { return checkpoint_; }
    const std::string& mask_marker() const override { return mask_marker_; }

private:
    std::shared_ptr<WireTransport> transport_;
    std::string mask_marker_;
    size_t probe_top_n_;
    std::string checkpoint_;
};

/// NLI judgments served by an external process over the same transport.
class WireNliBackend final : public EntailmentBackend {
public:
    explicit WireNliBackend(std::shared_ptr<WireTransport> transport)
        : transport_(std::move(transport)) {}

    NliJudgment judge(std::string_view premise, std::string_view hypothesis) const override {
        const auto resp = transport_->request({{"op", "nli"},
                                               {"premise", std::string(premise)},
                                               {"hypothesis", std::string(hypothesis)}});
        if (!resp.contains("entail") || !resp.contains("neutral") || !resp.contains("contradict"))
            throw Error(ErrorKind::BackendTransport, "nli response lacks entail/neutral/contradict");
        return NliJudgment{resp["entail"].get<double>(), resp["neutral"].get<double>(),
                           resp["contradict"].get<double>()};
    }

private:
    std::shared_ptr<WireTransport> transport_;
};

} // namespace adaprompt
