#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "agebench/attack.hpp"
#include "agebench/estimator.hpp"

namespace agebench {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EditorConfig {
    std::string id = "synthetic";
    enum class Kind { Synthetic, Http } kind = Kind::Synthetic;
    std::string base_url;
    std::string api_key_env;
    std::string path = "/edit";
    double timeout_s = 60.0;
    double requests_per_second = 0.0;
};

struct RunConfig {
    std::string run_id = "default";
    std::filesystem::path corpus_manifest;

    EditorConfig editor;
    std::vector<AttackType> attacks{kAllAttacks.begin(), kAllAttacks.end()};

    int tau = 15;
    std::vector<std::string> subset_labels;  // empty means all 15

    int parallelism = 4;
    double confidence = 0.95;
    int retry_attempts = 3;
    int retry_initial_ms = 1000;

    double near_zero_cutoff = 3.0;
    double jump_cutoff = 3.0;

    std::vector<std::string> report_formats{"markdown", "csv", "svg"};
    std::vector<std::string> report_sections{"table2", "table3", "table4",
                                             "table6", "trajectories", "stratified",
                                             "distributions"};

    std::vector<ModelDescriptor> models;

    std::vector<AttackSet> subsets() const {
        if (subset_labels.empty()) return enumerate_subsets();
        std::vector<AttackSet> out;
        for (const auto& label : subset_labels) {
            auto set = AttackSet::parse(label);
            if (!set) throw ConfigError("unknown subset label '" + label + "'");
            out.push_back(*set);
        }
        return out;
    }
};

namespace detail {

// TOML-style key/value file: [section] headers, key = value lines,
// '#' comments, optional double quotes around values.
struct RawConfig {
    // section -> key -> value, plus section order for model sections
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::vector<std::string> section_order;
};

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}

inline RawConfig parse_raw_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    RawConfig raw;
    std::string section;  // "" = top level
    raw.section_order.push_back(section);
    raw.sections[section];
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            section = strip(line.substr(1, line.size() - 2));
            if (raw.sections.count(section))
                throw ConfigError("duplicate section [" + section + "]");
            raw.sections[section];
            raw.section_order.push_back(section);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string value = unquote(strip(line.substr(eq + 1)));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (raw.sections[section].count(key))
            throw ConfigError("duplicate key '" + key + "' in section [" + section + "]");
        raw.sections[section][key] = value;
    }
    return raw;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t next = s.find(',', pos);
        std::string item = strip(s.substr(pos, next == std::string::npos ? next : next - pos));
        if (!item.empty()) out.push_back(item);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
    }
}

// Rejects keys the schema does not know: a typo should fail loudly, not
// silently fall back to a default.
inline void check_known_keys(const std::string& section,
                             const std::map<std::string, std::string>& kv,
                             const std::set<std::string>& known) {
    for (const auto& [key, value] : kv) {
        if (!known.count(key))
            throw ConfigError("unknown key '" + key + "' in section [" +
                              (section.empty() ? "top level" : section) + "]");
    }
}

}  // namespace detail

inline std::vector<std::string> config_split_list(const std::string& s) {
    return detail::split_list(s);
}

// Parses and validates the run config, filling documented defaults and
// rejecting contradictions before any stage runs.
inline RunConfig validate_config(const std::filesystem::path& path) {
    using namespace detail;
    RawConfig raw = parse_raw_config(path);
    RunConfig cfg;

    for (const auto& section : raw.section_order) {
        const auto& kv = raw.sections.at(section);
        if (section.empty()) {
            check_known_keys(section, kv, {"run_id"});
            if (kv.count("run_id")) cfg.run_id = kv.at("run_id");
        } else if (section == "corpus") {
            check_known_keys(section, kv, {"manifest"});
            if (kv.count("manifest")) cfg.corpus_manifest = kv.at("manifest");
        } else if (section == "editor") {
            check_known_keys(section, kv,
                             {"id", "kind", "base_url", "api_key_env", "path", "timeout_s",
                              "requests_per_second", "attacks", "retry_attempts",
                              "retry_initial_ms"});
            if (kv.count("id")) cfg.editor.id = kv.at("id");
            if (kv.count("kind")) {
                const std::string& kind = kv.at("kind");
                if (kind == "synthetic") cfg.editor.kind = EditorConfig::Kind::Synthetic;
                else if (kind == "http") cfg.editor.kind = EditorConfig::Kind::Http;
                else throw ConfigError("editor kind must be synthetic or http, got '" + kind + "'");
            }
            if (kv.count("base_url")) cfg.editor.base_url = kv.at("base_url");
            if (kv.count("api_key_env")) cfg.editor.api_key_env = kv.at("api_key_env");
            if (kv.count("path")) cfg.editor.path = kv.at("path");
            if (kv.count("timeout_s"))
                cfg.editor.timeout_s = parse_double("timeout_s", kv.at("timeout_s"));
            if (kv.count("requests_per_second"))
                cfg.editor.requests_per_second =
                    parse_double("requests_per_second", kv.at("requests_per_second"));
            if (kv.count("retry_attempts"))
                cfg.retry_attempts = parse_int("retry_attempts", kv.at("retry_attempts"));
            if (kv.count("retry_initial_ms"))
                cfg.retry_initial_ms = parse_int("retry_initial_ms", kv.at("retry_initial_ms"));
            if (kv.count("attacks")) {
                cfg.attacks.clear();
                for (const auto& token : split_list(kv.at("attacks"))) {
                    auto t = parse_attack_token(token);
                    if (!t) throw ConfigError("unknown attack '" + token + "'");
                    if (std::find(cfg.attacks.begin(), cfg.attacks.end(), *t) != cfg.attacks.end())
                        throw ConfigError("duplicate attack '" + token + "'");
                    cfg.attacks.push_back(*t);
                }
            }
        } else if (section == "compose") {
            check_known_keys(section, kv, {"tau", "subsets"});
            if (kv.count("tau")) cfg.tau = parse_int("tau", kv.at("tau"));
            if (kv.count("subsets") && kv.at("subsets") != "all")
                cfg.subset_labels = split_list(kv.at("subsets"));
        } else if (section == "predict") {
            check_known_keys(section, kv, {"parallel", "confidence"});
            if (kv.count("parallel")) cfg.parallelism = parse_int("parallel", kv.at("parallel"));
            if (kv.count("confidence"))
                cfg.confidence = parse_double("confidence", kv.at("confidence"));
        } else if (section == "metrics") {
            check_known_keys(section, kv, {"near_zero_cutoff", "jump_cutoff"});
            if (kv.count("near_zero_cutoff"))
                cfg.near_zero_cutoff = parse_double("near_zero_cutoff", kv.at("near_zero_cutoff"));
            if (kv.count("jump_cutoff"))
                cfg.jump_cutoff = parse_double("jump_cutoff", kv.at("jump_cutoff"));
        } else if (section == "report") {
            check_known_keys(section, kv, {"formats", "sections"});
            if (kv.count("formats")) cfg.report_formats = split_list(kv.at("formats"));
            if (kv.count("sections")) cfg.report_sections = split_list(kv.at("sections"));
        } else if (section.rfind("model.", 0) == 0) {
            check_known_keys(section, kv,
                             {"kind", "base_url", "model_name", "api_key_env", "path", "command",
                              "timeout_s", "requests_per_second"});
            ModelDescriptor m;
            m.id = section.substr(6);
            if (m.id.empty()) throw ConfigError("model section needs an id: [model.<id>]");
            if (kv.count("kind")) {
                auto kind = parse_model_kind(kv.at("kind"));
                if (!kind) throw ConfigError("unknown model kind '" + kv.at("kind") + "'");
                m.kind = *kind;
            }
            if (kv.count("base_url")) m.base_url = kv.at("base_url");
            if (kv.count("model_name")) m.model_name = kv.at("model_name");
            if (kv.count("api_key_env")) m.api_key_env = kv.at("api_key_env");
            if (kv.count("command")) m.command = kv.at("command");
            if (kv.count("timeout_s")) m.timeout_s = parse_double("timeout_s", kv.at("timeout_s"));
            if (kv.count("requests_per_second"))
                m.requests_per_second =
                    parse_double("requests_per_second", kv.at("requests_per_second"));
            if (m.kind == ModelDescriptor::Kind::RemoteVlm && m.base_url.empty())
                throw ConfigError("model '" + m.id + "': remote_vlm requires base_url");
            if (m.kind == ModelDescriptor::Kind::LocalAdapter && m.command.empty())
                throw ConfigError("model '" + m.id + "': local_adapter requires command");
            cfg.models.push_back(std::move(m));
        } else {
            throw ConfigError("unknown section [" + section + "]");
        }
    }

    if (cfg.corpus_manifest.empty()) throw ConfigError("missing [corpus] manifest");
    if (cfg.tau <= 0) throw ConfigError("tau must be positive");
    if (cfg.parallelism < 1) throw ConfigError("parallel must be at least 1");
    if (cfg.confidence <= 0.0 || cfg.confidence >= 1.0)
        throw ConfigError("confidence must lie in (0,1)");
    if (cfg.retry_attempts < 1) throw ConfigError("retry_attempts must be at least 1");
    if (cfg.retry_initial_ms < 0) throw ConfigError("retry_initial_ms must be nonnegative");
    if (cfg.models.empty()) throw ConfigError("at least one [model.<id>] section is required");
    if (cfg.editor.kind == EditorConfig::Kind::Http && cfg.editor.base_url.empty())
        throw ConfigError("http editor requires base_url");
    std::set<std::string> ids;
    for (const auto& m : cfg.models)
        if (!ids.insert(m.id).second) throw ConfigError("duplicate model id '" + m.id + "'");
    for (const auto& fmt : cfg.report_formats)
        if (fmt != "markdown" && fmt != "csv" && fmt != "svg")
            throw ConfigError("unknown report format '" + fmt + "'");
    const std::set<std::string> known_sections{"table2",       "table3",    "table4",
                                               "table6",       "trajectories", "stratified",
                                               "distributions"};
    for (const auto& s : cfg.report_sections)
        if (!known_sections.count(s)) throw ConfigError("unknown report section '" + s + "'");
    cfg.subsets();  // validates labels
    // resolve the manifest relative to the config file
    if (cfg.corpus_manifest.is_relative())
        cfg.corpus_manifest = path.parent_path() / cfg.corpus_manifest;
    return cfg;
}

}  // namespace agebench
