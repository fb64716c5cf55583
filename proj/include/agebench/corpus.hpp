#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agebench/csv.hpp"
#include "agebench/digest.hpp"
#include "agebench/image.hpp"
#include "agebench/parallel.hpp"

namespace agebench {

constexpr int kMinResolution = 120;
constexpr int kMinTrueAge = 10;
constexpr int kMaxTrueAge = 21;
constexpr int kAdultThresholdYears = 18;

struct ImageRecord {
    std::string id;
    std::filesystem::path path;
    int width = 0;
    int height = 0;
    int channels = 3;
    int true_age = 0;
    std::string source_dataset;
    std::string digest;       // SHA-256 of the image file bytes
    bool grayscale = false;   // stored RGB but all channels identical

    bool is_minor() const { return true_age < kAdultThresholdYears; }
};

// Reasons a record fails the eligibility filters, empty when eligible.
inline std::vector<std::string> ineligibility_reasons(const ImageRecord& r) {
    std::vector<std::string> reasons;
    if (r.width < kMinResolution || r.height < kMinResolution)
        reasons.push_back("resolution below " + std::to_string(kMinResolution) + "x" +
                          std::to_string(kMinResolution));
    if (r.channels != 3) reasons.push_back("not 3-channel");
    if (r.grayscale) reasons.push_back("grayscale content");
    if (r.true_age < kMinTrueAge || r.true_age > kMaxTrueAge)
        reasons.push_back("age outside " + std::to_string(kMinTrueAge) + "-" +
                          std::to_string(kMaxTrueAge));
    return reasons;
}

inline bool is_eligible(const ImageRecord& r) { return ineligibility_reasons(r).empty(); }

struct SkipEntry {
    std::size_t row = 0;  // 1-based manifest row (excluding header)
    std::string id;
    std::string reason;
};

struct Corpus {
    std::vector<ImageRecord> records;
    std::vector<SkipEntry> skips;

    int minor_count() const {
        int n = 0;
        for (const auto& r : records) n += r.is_minor() ? 1 : 0;
        return n;
    }
    int adult_count() const { return static_cast<int>(records.size()) - minor_count(); }

    const ImageRecord* find(const std::string& id) const {
        for (const auto& r : records)
            if (r.id == id) return &r;
        return nullptr;
    }
};

// Reads the manifest CSV (`id,path,true_age,source_dataset`), decoding each
// image to take dimensions, channel content, and digest from the actual bytes.
// Relative image paths resolve against the manifest's directory. Unreadable or
// malformed rows become skip entries; a missing manifest is fatal.
inline Corpus ingest_manifest(const std::filesystem::path& manifest_path, int parallelism = 4) {
    if (!std::filesystem::exists(manifest_path))
        throw std::runtime_error("manifest not found: " + manifest_path.string());
    auto rows = read_csv_file(manifest_path.string());
    if (rows.empty()) throw std::runtime_error("manifest is empty: " + manifest_path.string());
    const std::vector<std::string> header = {"id", "path", "true_age", "source_dataset"};
    if (rows[0] != header)
        throw std::runtime_error("manifest header must be id,path,true_age,source_dataset");
    const std::filesystem::path base = manifest_path.parent_path();

    struct RowResult {
        std::optional<ImageRecord> record;
        std::optional<SkipEntry> skip;
    };
    std::vector<std::size_t> indices(rows.size() - 1);
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i + 1;

    auto process = [&](std::size_t row_idx) -> RowResult {
        const auto& row = rows[row_idx];
        RowResult res;
        auto skip = [&](const std::string& id, const std::string& reason) {
            res.skip = SkipEntry{row_idx, id, reason};
            return res;
        };
        if (row.size() != 4) return skip(row.empty() ? "" : row[0], "expected 4 columns");
        ImageRecord rec;
        rec.id = row[0];
        rec.source_dataset = row[3];
        if (rec.id.empty()) return skip("", "empty id");
        try {
            // Fractional labels floor to whole years.
            rec.true_age = static_cast<int>(std::floor(std::stod(row[2])));
        } catch (const std::exception&) {
            return skip(rec.id, "unparseable true_age '" + row[2] + "'");
        }
        std::filesystem::path p(row[1]);
        rec.path = p.is_absolute() ? p : base / p;
        std::vector<std::uint8_t> bytes;
        try {
            bytes = read_file_bytes(rec.path);
        } catch (const std::exception& e) {
            return skip(rec.id, e.what());
        }
        Image img;
        try {
            img = decode_image(bytes);
        } catch (const std::exception& e) {
            return skip(rec.id, e.what());
        }
        rec.width = img.width;
        rec.height = img.height;
        rec.channels = Image::kChannels;
        rec.grayscale = channels_identical(img);
        rec.digest = sha256_hex(bytes);
        res.record = std::move(rec);
        return res;
    };

    std::vector<RowResult> results = parallel_map(indices, parallelism, process);
    Corpus corpus;
    std::unordered_set<std::string> seen;
    for (auto& res : results) {
        if (res.skip) {
            corpus.skips.push_back(std::move(*res.skip));
            continue;
        }
        if (!seen.insert(res.record->id).second) {
            corpus.skips.push_back(SkipEntry{0, res.record->id, "duplicate id"});
            continue;
        }
        corpus.records.push_back(std::move(*res.record));
    }
    return corpus;
}

// Hook for eligibility judgments the harness does not implement itself, e.g.
// an external frontal-face-visibility check. Returns false to reject.
using EligibilityHook = std::function<bool(const ImageRecord&)>;

// Retains exactly the records passing the eligibility invariants; removals
// land in the skip list with their reasons. Idempotent.
inline Corpus filter_eligible(const Corpus& corpus, const EligibilityHook& external = nullptr) {
    Corpus out;
    out.skips = corpus.skips;
    for (const auto& r : corpus.records) {
        auto reasons = ineligibility_reasons(r);
        if (external && !external(r)) reasons.push_back("external predicate");
        if (reasons.empty()) {
            out.records.push_back(r);
        } else {
            std::string joined;
            for (const auto& s : reasons) {
                if (!joined.empty()) joined += "; ";
                joined += s;
            }
            out.skips.push_back(SkipEntry{0, r.id, joined});
        }
    }
    return out;
}

inline std::pair<int, int> split_counts(const Corpus& corpus) {
    return {corpus.minor_count(), corpus.adult_count()};
}

inline nlohmann::ordered_json corpus_to_json(const Corpus& corpus) {
    nlohmann::ordered_json j;
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& r : corpus.records) {
        nlohmann::ordered_json rec;
        rec["id"] = r.id;
        rec["path"] = r.path.string();
        rec["width"] = r.width;
        rec["height"] = r.height;
        rec["channels"] = r.channels;
        rec["true_age"] = r.true_age;
        rec["source_dataset"] = r.source_dataset;
        rec["digest"] = r.digest;
        rec["grayscale"] = r.grayscale;
        rec["eligible"] = is_eligible(r);
        rec["ineligibility"] = ineligibility_reasons(r);
        j["records"].push_back(std::move(rec));
    }
    j["skips"] = nlohmann::ordered_json::array();
    for (const auto& s : corpus.skips) {
        j["skips"].push_back({{"row", s.row}, {"id", s.id}, {"reason", s.reason}});
    }
    j["minor_count"] = corpus.minor_count();
    j["adult_count"] = corpus.adult_count();
    return j;
}

inline void write_corpus_json(const Corpus& corpus, const std::filesystem::path& path) {
    write_file_text(path, corpus_to_json(corpus).dump(2) + "\n");
}

inline Corpus read_corpus_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus json: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    Corpus corpus;
    for (const auto& rec : j.at("records")) {
        ImageRecord r;
        r.id = rec.at("id").get<std::string>();
        r.path = rec.at("path").get<std::string>();
        r.width = rec.at("width").get<int>();
        r.height = rec.at("height").get<int>();
        r.channels = rec.at("channels").get<int>();
        r.true_age = rec.at("true_age").get<int>();
        r.source_dataset = rec.at("source_dataset").get<std::string>();
        r.digest = rec.at("digest").get<std::string>();
        r.grayscale = rec.at("grayscale").get<bool>();
        corpus.records.push_back(std::move(r));
    }
    for (const auto& s : j.at("skips")) {
        corpus.skips.push_back(SkipEntry{s.at("row").get<std::size_t>(),
                                         s.at("id").get<std::string>(),
                                         s.at("reason").get<std::string>()});
    }
    return corpus;
}

}  // namespace agebench
