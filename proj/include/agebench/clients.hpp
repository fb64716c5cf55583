#pragma once

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>

#include "agebench/editor.hpp"
#include "agebench/estimator.hpp"

namespace agebench {

namespace detail {

inline std::string api_key_from_env(const std::string& env_name) {
    if (env_name.empty()) return "";
    const char* v = std::getenv(env_name.c_str());
    return v ? v : "";
}

// 2xx succeeds, 4xx (except 429) is a policy refusal, everything else is a
// retryable transport failure.
enum class HttpOutcome { Ok, Refused, Transport };

inline HttpOutcome classify_status(const httplib::Result& res) {
    if (!res) return HttpOutcome::Transport;
    if (res->status >= 200 && res->status < 300) return HttpOutcome::Ok;
    if (res->status >= 400 && res->status < 500 && res->status != 429)
        return HttpOutcome::Refused;
    return HttpOutcome::Transport;
}

}  // namespace detail

// Generic multipart image-edit endpoint: POST {image, prompt} and get the
// edited image bytes back.
class HttpEditorClient : public EditorClient {
  public:
    HttpEditorClient(std::string id, std::string base_url, std::string api_key_env,
                     std::string path = "/edit", double timeout_s = 60.0)
        : id_(std::move(id)),
          base_url_(std::move(base_url)),
          path_(std::move(path)),
          api_key_(detail::api_key_from_env(api_key_env)),
          timeout_s_(timeout_s) {}

    std::string id() const override { return id_; }

    EditorResponse edit(const std::vector<std::uint8_t>& image_png,
                        const std::string& prompt) override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(static_cast<int>(timeout_s_), 0);
        cli.set_read_timeout(static_cast<int>(timeout_s_), 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        httplib::MultipartFormDataItems items = {
            {"image", std::string(image_png.begin(), image_png.end()), "image.png", "image/png"},
            {"prompt", prompt, "", "text/plain"},
        };
        auto res = cli.Post(path_, headers, items);
        EditorResponse out;
        switch (detail::classify_status(res)) {
            case detail::HttpOutcome::Ok:
                out.kind = EditorResponse::Kind::Edited;
                out.image_bytes.assign(res->body.begin(), res->body.end());
                break;
            case detail::HttpOutcome::Refused:
                out.kind = EditorResponse::Kind::Refused;
                out.reason = "http " + std::to_string(res->status) +
                             (res->body.empty() ? "" : ": " + res->body.substr(0, 200));
                break;
            case detail::HttpOutcome::Transport:
                out.kind = EditorResponse::Kind::TransportError;
                out.reason = res ? "http " + std::to_string(res->status)
                                 : "connection failed: " + httplib::to_string(res.error());
                break;
        }
        return out;
    }

  private:
    std::string id_;
    std::string base_url_;
    std::string path_;
    std::string api_key_;
    double timeout_s_;
};

// Remote VLM estimator: POST {image, prompt, model}; the response body is the
// model's textual reply, parsed downstream.
class HttpVlmEstimatorClient : public EstimatorClient {
  public:
    HttpVlmEstimatorClient(std::string id, std::string base_url, std::string model_name,
                           std::string api_key_env, std::string path = "/predict",
                           double timeout_s = 30.0)
        : id_(std::move(id)),
          base_url_(std::move(base_url)),
          model_name_(std::move(model_name)),
          path_(std::move(path)),
          api_key_(detail::api_key_from_env(api_key_env)),
          timeout_s_(timeout_s) {}

    std::string id() const override { return id_; }

    EstimatorResponse predict(const std::vector<std::uint8_t>& image_bytes) override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(static_cast<int>(timeout_s_), 0);
        cli.set_read_timeout(static_cast<int>(timeout_s_), 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        httplib::MultipartFormDataItems items = {
            {"image", std::string(image_bytes.begin(), image_bytes.end()), "image.png",
             "image/png"},
            {"prompt", kAgePrompt, "", "text/plain"},
            {"model", model_name_, "", "text/plain"},
        };
        auto res = cli.Post(path_, headers, items);
        EstimatorResponse out;
        switch (detail::classify_status(res)) {
            case detail::HttpOutcome::Ok:
                out.kind = EstimatorResponse::Kind::Answered;
                out.text = res->body;
                break;
            case detail::HttpOutcome::Refused:
                out.kind = EstimatorResponse::Kind::Refused;
                out.reason = "http " + std::to_string(res->status);
                break;
            case detail::HttpOutcome::Transport:
                out.kind = EstimatorResponse::Kind::TransportError;
                out.reason = res ? "http " + std::to_string(res->status)
                                 : "connection failed: " + httplib::to_string(res.error());
                break;
        }
        return out;
    }

  private:
    std::string id_;
    std::string base_url_;
    std::string model_name_;
    std::string path_;
    std::string api_key_;
    double timeout_s_;
};

// Local model adapter speaking the line protocol: one image path per request
// line on stdin, one decimal age per response line on stdout. The child is
// spawned once and requests are serialized.
class SubprocessAdapterClient : public EstimatorClient {
  public:
    SubprocessAdapterClient(std::string id, std::string command)
        : id_(std::move(id)), command_(std::move(command)) {
        scratch_dir_ = std::filesystem::temp_directory_path() /
                       ("agebench-adapter-" + std::to_string(::getpid()) + "-" + id_);
        std::filesystem::create_directories(scratch_dir_);
        spawn();
    }

    ~SubprocessAdapterClient() override {
        if (to_child_) std::fclose(to_child_);
        if (from_child_) std::fclose(from_child_);
        if (pid_ > 0) {
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
        std::error_code ec;
        std::filesystem::remove_all(scratch_dir_, ec);
    }

    std::string id() const override { return id_; }

    EstimatorResponse predict(const std::vector<std::uint8_t>& image_bytes) override {
        std::lock_guard<std::mutex> lock(mutex_);
        EstimatorResponse out;
        if (!to_child_ || !from_child_) {
            out.reason = "adapter process not running";
            return out;
        }
        const auto image_path = scratch_dir_ / "request.png";
        try {
            write_file_bytes(image_path, image_bytes);
        } catch (const std::exception& e) {
            out.reason = e.what();
            return out;
        }
        if (std::fprintf(to_child_, "%s\n", image_path.c_str()) < 0 ||
            std::fflush(to_child_) != 0) {
            out.reason = "adapter stdin closed";
            return out;
        }
        char line[256];
        if (!std::fgets(line, sizeof line, from_child_)) {
            out.reason = "adapter produced no response line";
            return out;
        }
        out.kind = EstimatorResponse::Kind::Answered;
        out.text = line;
        return out;
    }

  private:
    void spawn() {
        // a child that exits early must surface as a transport error, not kill
        // the process on the next write
        static const bool sigpipe_ignored = [] {
            ::signal(SIGPIPE, SIG_IGN);
            return true;
        }();
        (void)sigpipe_ignored;
        int to_pipe[2], from_pipe[2];
        if (::pipe(to_pipe) != 0 || ::pipe(from_pipe) != 0)
            throw std::runtime_error("adapter: pipe() failed");
        pid_ = ::fork();
        if (pid_ < 0) throw std::runtime_error("adapter: fork() failed");
        if (pid_ == 0) {
            ::dup2(to_pipe[0], STDIN_FILENO);
            ::dup2(from_pipe[1], STDOUT_FILENO);
            ::close(to_pipe[0]);
            ::close(to_pipe[1]);
            ::close(from_pipe[0]);
            ::close(from_pipe[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            std::_Exit(127);
        }
        ::close(to_pipe[0]);
        ::close(from_pipe[1]);
        to_child_ = ::fdopen(to_pipe[1], "w");
        from_child_ = ::fdopen(from_pipe[0], "r");
    }

    std::string id_;
    std::string command_;
    std::filesystem::path scratch_dir_;
    std::mutex mutex_;
    ::pid_t pid_ = -1;
    std::FILE* to_child_ = nullptr;
    std::FILE* from_child_ = nullptr;
};

}  // namespace agebench
