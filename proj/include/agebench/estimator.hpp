#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "agebench/csv.hpp"
#include "agebench/digest.hpp"
#include "agebench/image.hpp"
#include "agebench/retry.hpp"

namespace agebench {

inline constexpr const char* kAgePrompt =
    "How old does the person in this image appear? Reply with only a number.";

struct ModelDescriptor {
    enum class Kind { RemoteVlm, LocalAdapter, Synthetic };
    std::string id;
    Kind kind = Kind::Synthetic;
    std::string base_url;      // RemoteVlm
    std::string model_name;    // RemoteVlm
    std::string api_key_env;   // RemoteVlm
    std::string command;       // LocalAdapter
    double timeout_s = 30.0;
    double requests_per_second = 0.0;  // 0 disables rate limiting
};

inline const char* model_kind_name(ModelDescriptor::Kind k) {
    switch (k) {
        case ModelDescriptor::Kind::RemoteVlm: return "remote_vlm";
        case ModelDescriptor::Kind::LocalAdapter: return "local_adapter";
        case ModelDescriptor::Kind::Synthetic: return "synthetic";
    }
    throw std::logic_error("model_kind_name: bad enum");
}

inline std::optional<ModelDescriptor::Kind> parse_model_kind(const std::string& s) {
    if (s == "remote_vlm") return ModelDescriptor::Kind::RemoteVlm;
    if (s == "local_adapter") return ModelDescriptor::Kind::LocalAdapter;
    if (s == "synthetic") return ModelDescriptor::Kind::Synthetic;
    return std::nullopt;
}

// First decimal number in the text, accepted when it lies in [0, 120] years.
inline std::optional<double> parse_age_response(const std::string& text,
                                                std::string* error = nullptr) {
    static const std::regex number(R"([+-]?\d+(\.\d+)?)");
    std::smatch m;
    if (!std::regex_search(text, m, number)) {
        if (error) *error = "no number in response";
        return std::nullopt;
    }
    const double value = std::strtod(m.str().c_str(), nullptr);
    if (value < 0.0 || value > 120.0) {
        if (error) *error = "age " + m.str() + " outside [0,120]";
        return std::nullopt;
    }
    return value;
}

// A client answers with text (VLM reply or a bare number) or, for clients
// that compute locally, a direct age that skips text round-tripping.
struct EstimatorResponse {
    enum class Kind { Answered, Refused, TransportError };
    Kind kind = Kind::TransportError;
    std::string text;
    std::optional<double> direct_age;
    std::string reason;
};

class EstimatorClient {
  public:
    virtual ~EstimatorClient() = default;
    virtual std::string id() const = 0;
    virtual EstimatorResponse predict(const std::vector<std::uint8_t>& image_bytes) = 0;
};

struct PredictionOutcome {
    enum class Status { Ok, Refused, TransportError, ParseError };
    Status status = Status::TransportError;
    std::optional<double> age;
    std::string raw;
    std::string reason;
    int attempts = 0;
};

inline const char* prediction_status_name(PredictionOutcome::Status s) {
    switch (s) {
        case PredictionOutcome::Status::Ok: return "ok";
        case PredictionOutcome::Status::Refused: return "refused";
        case PredictionOutcome::Status::TransportError: return "transport_error";
        case PredictionOutcome::Status::ParseError: return "parse_error";
    }
    throw std::logic_error("prediction_status_name: bad enum");
}

// Transport failures retry per policy; refusals and unparseable replies are
// final (the reply itself is the client's answer).
inline PredictionOutcome predict_age(EstimatorClient& client,
                                     const std::vector<std::uint8_t>& image_bytes,
                                     RetryPolicy retry = {}, RateLimiter* limiter = nullptr) {
    PredictionOutcome out;
    for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
        if (limiter) limiter->acquire();
        EstimatorResponse resp = client.predict(image_bytes);
        out.attempts = attempt;
        if (resp.kind == EstimatorResponse::Kind::Refused) {
            out.status = PredictionOutcome::Status::Refused;
            out.reason = resp.reason;
            return out;
        }
        if (resp.kind == EstimatorResponse::Kind::Answered) {
            out.raw = resp.text;
            if (resp.direct_age) {
                if (*resp.direct_age < 0.0 || !std::isfinite(*resp.direct_age)) {
                    out.status = PredictionOutcome::Status::ParseError;
                    out.reason = "client produced an invalid age";
                    return out;
                }
                out.status = PredictionOutcome::Status::Ok;
                out.age = resp.direct_age;
                return out;
            }
            std::string err;
            auto age = parse_age_response(resp.text, &err);
            if (!age) {
                out.status = PredictionOutcome::Status::ParseError;
                out.reason = err;
                return out;
            }
            out.status = PredictionOutcome::Status::Ok;
            out.age = age;
            return out;
        }
        out.reason = resp.reason;
        if (attempt < retry.max_attempts)
            std::this_thread::sleep_for(retry.backoff_after(attempt));
    }
    out.status = PredictionOutcome::Status::TransportError;
    return out;
}

// One prediction row per (model, image, condition); duplicates are rejected.
struct PredictionRow {
    std::string model_id;
    std::string image_id;
    std::string condition;  // "baseline" or an attack-set label
    std::optional<double> predicted_age;
    std::string status = "ok";
};

class PredictionStore {
  public:
    using Key = std::tuple<std::string, std::string, std::string>;

    PredictionStore() = default;
    PredictionStore(PredictionStore&& other) noexcept {
        std::lock_guard<std::mutex> lock(other.mutex_);
        rows_ = std::move(other.rows_);
    }
    PredictionStore& operator=(PredictionStore&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mutex_, other.mutex_);
            rows_ = std::move(other.rows_);
        }
        return *this;
    }

    void add(PredictionRow row) {
        Key key{row.model_id, row.image_id, row.condition};
        std::lock_guard<std::mutex> lock(mutex_);
        if (rows_.count(key))
            throw std::invalid_argument("duplicate prediction for (" + row.model_id + ", " +
                                        row.image_id + ", " + row.condition + ")");
        rows_.emplace(std::move(key), std::move(row));
    }

    bool contains(const std::string& model, const std::string& image,
                  const std::string& condition) const {
        std::lock_guard<std::mutex> lock(mutex_);
        return rows_.count(Key{model, image, condition}) > 0;
    }

    std::optional<PredictionRow> get(const std::string& model, const std::string& image,
                                     const std::string& condition) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = rows_.find(Key{model, image, condition});
        if (it == rows_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return rows_.size();
    }

    std::vector<PredictionRow> all() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::vector<PredictionRow> out;
        out.reserve(rows_.size());
        for (const auto& [key, row] : rows_) out.push_back(row);
        return out;
    }

    void save_csv(const std::filesystem::path& path) const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::string out = "model_id,image_id,condition,predicted_age,status\n";
        for (const auto& [key, row] : rows_) {
            char age[64] = "";
            if (row.predicted_age) std::snprintf(age, sizeof age, "%.10g", *row.predicted_age);
            out += csv_join({row.model_id, row.image_id, row.condition, age, row.status});
            out += '\n';
        }
        write_file_text(path, out);
    }

    static PredictionStore load_csv(const std::filesystem::path& path) {
        PredictionStore store;
        if (!std::filesystem::exists(path)) return store;
        auto rows = read_csv_file(path.string());
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& r = rows[i];
            if (r.size() != 5) continue;
            PredictionRow row;
            row.model_id = r[0];
            row.image_id = r[1];
            row.condition = r[2];
            if (!r[3].empty()) row.predicted_age = std::strtod(r[3].c_str(), nullptr);
            row.status = r[4];
            store.add(std::move(row));
        }
        return store;
    }

  private:
    mutable std::mutex mutex_;
    std::map<Key, PredictionRow> rows_;
};

}  // namespace agebench
