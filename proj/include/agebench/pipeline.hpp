#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agebench/clients.hpp"
#include "agebench/compose.hpp"
#include "agebench/config.hpp"
#include "agebench/corpus.hpp"
#include "agebench/editor.hpp"
#include "agebench/estimator.hpp"
#include "agebench/fixtures.hpp"
#include "agebench/metrics.hpp"
#include "agebench/parallel.hpp"
#include "agebench/report.hpp"

namespace agebench {

struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest",  "generate", "compose",
                                                   "predict", "evaluate", "report"};
    return names;
}

struct RunPaths {
    std::filesystem::path root;
    // standalone stage invocations may redirect the attack cache and the
    // composed-image tree away from the run directory
    std::optional<std::filesystem::path> cache_override;
    std::optional<std::filesystem::path> composed_override;

    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path corpus_json() const { return root / "corpus.json"; }
    std::filesystem::path cache_dir() const { return cache_override.value_or(root / "cache"); }
    std::filesystem::path prediction_cache_dir() const { return cache_dir() / "predictions"; }
    std::filesystem::path composed_dir() const {
        return composed_override.value_or(root / "composed");
    }
    std::filesystem::path compositions_csv() const { return composed_dir() / "compositions.csv"; }
    std::filesystem::path predictions_csv() const { return root / "predictions.csv"; }
    std::filesystem::path metrics_dir() const { return root / "metrics"; }
    std::filesystem::path report_dir() const { return root / "report"; }
};

// Persistent record of what a run has produced so far. A stage counts as done
// only while its recorded outputs still exist with matching digests.
struct RunManifest {
    std::string run_id;
    std::string created_utc;
    std::string corpus_digest;
    int tau = 15;
    std::string editor_id;
    std::vector<std::string> model_ids;
    std::map<std::string, std::string> prompt_hashes;
    struct Stage {
        bool completed = false;
        std::map<std::string, std::string> outputs;  // path relative to run dir -> sha256
    };
    std::map<std::string, Stage> stages;
    std::map<std::string, int> exclusion_counts;  // "<model>/<condition>" -> dropped

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["run_id"] = run_id;
        j["created_utc"] = created_utc;
        j["corpus_digest"] = corpus_digest;
        j["tau"] = tau;
        j["editor_id"] = editor_id;
        j["model_ids"] = model_ids;
        j["prompt_hashes"] = prompt_hashes;
        j["stages"] = nlohmann::ordered_json::object();
        for (const auto& name : stage_names()) {
            auto it = stages.find(name);
            nlohmann::ordered_json s;
            s["completed"] = it != stages.end() && it->second.completed;
            s["outputs"] = it != stages.end() ? it->second.outputs
                                              : std::map<std::string, std::string>{};
            j["stages"][name] = std::move(s);
        }
        j["exclusion_counts"] = exclusion_counts;
        return j;
    }

    void save(const std::filesystem::path& path) const {
        write_file_text(path, to_json().dump(2) + "\n");
    }

    static RunManifest load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
        nlohmann::json j = nlohmann::json::parse(in);
        RunManifest m;
        m.run_id = j.value("run_id", "");
        m.created_utc = j.value("created_utc", "");
        m.corpus_digest = j.value("corpus_digest", "");
        m.tau = j.value("tau", 15);
        m.editor_id = j.value("editor_id", "");
        if (j.contains("model_ids")) m.model_ids = j["model_ids"].get<std::vector<std::string>>();
        if (j.contains("prompt_hashes"))
            m.prompt_hashes = j["prompt_hashes"].get<std::map<std::string, std::string>>();
        if (j.contains("stages")) {
            for (auto& [name, s] : j["stages"].items()) {
                Stage stage;
                stage.completed = s.value("completed", false);
                if (s.contains("outputs"))
                    stage.outputs = s["outputs"].get<std::map<std::string, std::string>>();
                m.stages[name] = std::move(stage);
            }
        }
        if (j.contains("exclusion_counts"))
            m.exclusion_counts = j["exclusion_counts"].get<std::map<std::string, int>>();
        return m;
    }
};

// Full-precision evaluation products; the CSV files round per the reporting
// rules but these values do not.
struct EvaluationResult {
    struct StratifiedOut {
        std::string model_id;
        std::string condition;
        std::string binning;  // "age" or "group"
        metrics::StratifiedRow row;
    };
    struct BimodalityOut {
        std::string model_id;  // "(pooled)" rows merge all models
        std::string condition;
        metrics::BimodalitySummary summary;
    };

    std::vector<metrics::MetricsRow> rows;
    std::vector<StratifiedOut> stratified;
    std::vector<BimodalityOut> bimodality;
    std::vector<std::string> combo_labels;                           // all 15
    std::vector<std::string> combo_models;
    std::map<std::string, std::map<std::string, std::optional<double>>> combo_shift;
    std::vector<RefusalStats> refusal_attacks;
    std::vector<RefusalStats> refusal_sets;
    std::map<std::string, int> exclusion_counts;

    const metrics::MetricsRow* find_row(const std::string& model,
                                        const std::string& condition) const {
        for (const auto& r : rows)
            if (r.model_id == model && r.condition == condition) return &r;
        return nullptr;
    }
};

namespace detail {

inline std::string utc_now_iso() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string fmt_decimals(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double rounded = std::floor(v * scale + 0.5) / scale;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int decimals) {
    return v ? fmt_decimals(*v, decimals) : "";
}

}  // namespace detail

inline std::shared_ptr<EditorClient> make_editor_client(const EditorConfig& cfg) {
    switch (cfg.kind) {
        case EditorConfig::Kind::Synthetic:
            return std::make_shared<SyntheticEditorClient>();
        case EditorConfig::Kind::Http:
            return std::make_shared<HttpEditorClient>(cfg.id, cfg.base_url, cfg.api_key_env,
                                                      cfg.path, cfg.timeout_s);
    }
    throw std::logic_error("make_editor_client: bad kind");
}

inline std::shared_ptr<EstimatorClient> make_estimator_client(const ModelDescriptor& m) {
    switch (m.kind) {
        case ModelDescriptor::Kind::Synthetic:
            return std::make_shared<SyntheticEstimatorClient>(m.id);
        case ModelDescriptor::Kind::RemoteVlm:
            return std::make_shared<HttpVlmEstimatorClient>(m.id, m.base_url, m.model_name,
                                                            m.api_key_env, "/predict",
                                                            m.timeout_s);
        case ModelDescriptor::Kind::LocalAdapter:
            return std::make_shared<SubprocessAdapterClient>(m.id, m.command);
    }
    throw std::logic_error("make_estimator_client: bad kind");
}

struct CompositionEntry {
    std::string image_id;
    std::string set_label;
    bool valid = false;
    std::string output_digest;  // composed file (multi) or cached single
};

class Pipeline {
  public:
    Pipeline(RunConfig config, std::filesystem::path run_dir)
        : Pipeline(std::move(config), RunPaths{std::move(run_dir), {}, {}}) {}

    Pipeline(RunConfig config, RunPaths paths)
        : cfg_(std::move(config)), paths_(std::move(paths)) {
        std::filesystem::create_directories(paths_.root);
        if (std::filesystem::exists(paths_.manifest())) {
            manifest_ = RunManifest::load(paths_.manifest());
        } else {
            manifest_.run_id = cfg_.run_id;
            manifest_.created_utc = detail::utc_now_iso();
        }
        manifest_.tau = cfg_.tau;
        manifest_.editor_id = cfg_.editor.id;
        manifest_.model_ids.clear();
        for (const auto& m : cfg_.models) manifest_.model_ids.push_back(m.id);
        for (AttackType t : cfg_.attacks)
            manifest_.prompt_hashes[attack_token(t)] = sha256_hex(render_prompt(t));
        manifest_.prompt_hashes["age_prompt"] = sha256_hex(std::string(kAgePrompt));
    }

    // Test seam: replace the configured clients with instrumented ones.
    void set_editor_client(std::shared_ptr<EditorClient> client) {
        editor_client_ = std::move(client);
    }
    void set_estimator_client(const std::string& model_id,
                              std::shared_ptr<EstimatorClient> client) {
        estimator_overrides_[model_id] = std::move(client);
    }

    const RunPaths& paths() const { return paths_; }
    const RunManifest& manifest() const { return manifest_; }
    const RunConfig& config() const { return cfg_; }
    const EvaluationResult& evaluation() const {
        if (!evaluation_) throw std::logic_error("evaluate stage has not run");
        return *evaluation_;
    }

    void run_all() {
        for (const auto& name : stage_names()) run_stage(name);
    }

    void run_stage(const std::string& name) {
        try {
            if (name == "ingest") stage_ingest();
            else if (name == "generate") stage_generate();
            else if (name == "compose") stage_compose();
            else if (name == "predict") stage_predict();
            else if (name == "evaluate") stage_evaluate();
            else if (name == "report") stage_report();
            else throw std::invalid_argument("unknown stage '" + name + "'");
        } catch (const StageError&) {
            manifest_.save(paths_.manifest());
            throw;
        } catch (const std::exception& e) {
            manifest_.save(paths_.manifest());
            throw StageError("stage " + name + " failed: " + e.what());
        }
    }

    // All conditions the run evaluates, in canonical order: baseline first,
    // then every requested subset by size and priority.
    std::vector<std::string> conditions() const {
        std::vector<std::string> out{"baseline"};
        for (const auto& set : cfg_.subsets()) out.push_back(set.label());
        return out;
    }

  private:
    bool stage_done(const std::string& name) {
        auto it = manifest_.stages.find(name);
        if (it == manifest_.stages.end() || !it->second.completed) return false;
        for (const auto& [rel, digest] : it->second.outputs) {
            const auto p = paths_.root / rel;
            if (!std::filesystem::exists(p) || sha256_hex_file(p) != digest) {
                it->second.completed = false;  // invariant broken, redo the stage
                return false;
            }
        }
        return true;
    }

    void mark_done(const std::string& name, const std::vector<std::filesystem::path>& outputs) {
        RunManifest::Stage stage;
        stage.completed = true;
        for (const auto& p : outputs) {
            const auto rel = std::filesystem::relative(p, paths_.root).string();
            stage.outputs[rel] = sha256_hex_file(p);
        }
        manifest_.stages[name] = std::move(stage);
        manifest_.save(paths_.manifest());
    }

    // ---- ingest -----------------------------------------------------------

    void stage_ingest() {
        if (stage_done("ingest")) {
            load_corpus();
            return;
        }
        Corpus corpus = ingest_manifest(cfg_.corpus_manifest, cfg_.parallelism);
        write_corpus_json(corpus, paths_.corpus_json());
        manifest_.corpus_digest = sha256_hex_file(paths_.corpus_json());
        corpus_ = filter_eligible(corpus);
        mark_done("ingest", {paths_.corpus_json()});
    }

    void load_corpus() {
        if (!corpus_) corpus_ = filter_eligible(read_corpus_json(paths_.corpus_json()));
        if (manifest_.corpus_digest.empty())
            manifest_.corpus_digest = sha256_hex_file(paths_.corpus_json());
    }

    // ---- generate ---------------------------------------------------------

    EditorClient& editor_client() {
        if (!editor_client_) editor_client_ = make_editor_client(cfg_.editor);
        return *editor_client_;
    }

    RetryPolicy retry_policy() const {
        RetryPolicy p;
        p.max_attempts = cfg_.retry_attempts;
        p.initial_backoff = std::chrono::milliseconds(cfg_.retry_initial_ms);
        return p;
    }

    EditorSession& editor_session() {
        if (!session_)
            session_ = std::make_unique<EditorSession>(editor_client(), paths_.cache_dir(),
                                                       retry_policy(),
                                                       cfg_.editor.requests_per_second);
        return *session_;
    }

    void stage_generate() {
        load_corpus();
        EditorSession& session = editor_session();
        if (stage_done("generate")) return;  // session loaded the ledger already

        std::vector<std::string> order;
        for (const auto& rec : corpus_->records) order.push_back(rec.id);
        parallel_for(corpus_->records.size(), cfg_.parallelism, [&](std::size_t i) {
            const ImageRecord& rec = corpus_->records[i];
            std::optional<Image> original;  // decoded once, only on a cache miss
            for (AttackType t : cfg_.attacks) {
                if (session.cached(rec.id, t)) continue;
                if (!original) original = load_image(rec.path);
                session.generate_attack(rec, *original, t);
            }
        });
        session.save_ledger(order);
        mark_done("generate", {session.ledger_path()});
    }

    // ---- compose ----------------------------------------------------------

    void stage_compose() {
        load_corpus();
        EditorSession& session = editor_session();
        if (stage_done("compose")) {
            load_compositions();
            return;
        }
        std::filesystem::create_directories(paths_.composed_dir());
        const auto outcomes = session.outcomes();
        const auto subsets = cfg_.subsets();
        compositions_.clear();

        struct PerImage {
            std::vector<CompositionEntry> entries;
        };
        std::vector<PerImage> results(corpus_->records.size());
        parallel_for(corpus_->records.size(), cfg_.parallelism, [&](std::size_t i) {
            const ImageRecord& rec = corpus_->records[i];
            std::optional<Image> original;
            AttackDeltas deltas;
            auto ensure_delta = [&](AttackType t) {
                if (deltas.count(t)) return;
                if (!original) original = load_image(rec.path);
                const auto path = session.attack_image_path(rec.digest, t);
                deltas[t] = compute_delta(*original, decode_image(read_file_bytes(path)));
            };
            for (const AttackSet& set : subsets) {
                CompositionEntry entry;
                entry.image_id = rec.id;
                entry.set_label = set.label();
                entry.valid = true;
                for (AttackType t : set.members()) {
                    auto it = outcomes.find({rec.id, t});
                    if (it == outcomes.end() || it->second.status != EditStatus::Success) {
                        entry.valid = false;
                        break;
                    }
                }
                if (entry.valid) {
                    if (set.size() == 1) {
                        // singleton conditions use the raw single-attack image
                        AttackType t = set.members()[0];
                        entry.output_digest =
                            outcomes.at({rec.id, t}).output_digest.value_or("");
                    } else {
                        for (AttackType t : set.members()) ensure_delta(t);
                        Image combo = compose_attacks(*original, deltas, set, Tau(cfg_.tau));
                        const auto bytes = encode_png(combo);
                        const auto dir = paths_.composed_dir() / rec.digest;
                        std::filesystem::create_directories(dir);
                        write_file_bytes(dir / (set.label() + ".png"), bytes);
                        entry.output_digest = sha256_hex(bytes);
                    }
                }
                results[i].entries.push_back(std::move(entry));
            }
        });
        for (auto& per : results)
            for (auto& e : per.entries) compositions_.push_back(std::move(e));
        save_compositions();
        mark_done("compose", {paths_.compositions_csv()});
    }

    void save_compositions() {
        std::string out = "image_id,set_label,valid,output_digest\n";
        for (const auto& e : compositions_) {
            out += csv_join({e.image_id, e.set_label, e.valid ? "1" : "0", e.output_digest});
            out += '\n';
        }
        write_file_text(paths_.compositions_csv(), out);
    }

    void load_compositions() {
        if (!compositions_.empty()) return;
        if (!std::filesystem::exists(paths_.compositions_csv())) return;
        auto rows = read_csv_file(paths_.compositions_csv().string());
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() != 4) continue;
            compositions_.push_back(
                {rows[i][0], rows[i][1], rows[i][2] == "1", rows[i][3]});
        }
    }

    // ---- predict ----------------------------------------------------------

    EstimatorClient& estimator_for(const ModelDescriptor& m) {
        auto it = estimator_overrides_.find(m.id);
        if (it != estimator_overrides_.end()) return *it->second;
        auto built = estimators_.find(m.id);
        if (built == estimators_.end())
            built = estimators_.emplace(m.id, make_estimator_client(m)).first;
        return *built->second;
    }

    // Valid image ids per condition, from the outcome and composition ledgers.
    std::map<std::string, std::set<std::string>> validity() {
        std::map<std::string, std::set<std::string>> valid;
        for (const auto& rec : corpus_->records) valid["baseline"].insert(rec.id);
        for (const auto& e : compositions_)
            if (e.valid) valid[e.set_label].insert(e.image_id);
        return valid;
    }

    // Where the bytes for (condition, record) live on disk.
    std::filesystem::path condition_image_path(const ImageRecord& rec,
                                               const std::string& condition) {
        if (condition == "baseline") return rec.path;
        auto set = AttackSet::parse(condition);
        if (!set) throw std::invalid_argument("bad condition label '" + condition + "'");
        if (set->size() == 1)
            return editor_session().attack_image_path(rec.digest, set->members()[0]);
        return paths_.composed_dir() / rec.digest / (condition + ".png");
    }

    void stage_predict() {
        load_corpus();
        load_compositions();
        editor_session();  // materialize before the parallel region below
        predictions_ = PredictionStore::load_csv(paths_.predictions_csv());
        if (stage_done("predict")) return;
        std::filesystem::create_directories(paths_.prediction_cache_dir());
        const auto valid = validity();
        const auto conds = conditions();
        const std::string prompt_tag = sha256_hex(std::string(kAgePrompt)).substr(0, 8);
        RetryPolicy retry = retry_policy();

        for (const auto& model : cfg_.models) {
            EstimatorClient& client = estimator_for(model);
            RateLimiter limiter(model.requests_per_second);
            const auto cache_dir = paths_.prediction_cache_dir() / model.id;
            std::filesystem::create_directories(cache_dir);
            for (const auto& cond : conds) {
                auto vit = valid.find(cond);
                if (vit == valid.end()) continue;
                std::vector<const ImageRecord*> todo;
                for (const auto& rec : corpus_->records) {
                    if (!vit->second.count(rec.id)) continue;
                    if (predictions_.contains(model.id, rec.id, cond)) continue;
                    todo.push_back(&rec);
                }
                parallel_for(todo.size(), cfg_.parallelism, [&](std::size_t i) {
                    const ImageRecord& rec = *todo[i];
                    const auto image_path = condition_image_path(rec, cond);
                    const auto bytes = read_file_bytes(image_path);
                    const auto cache_file =
                        cache_dir / (sha256_hex(bytes) + "-" + prompt_tag + ".json");
                    PredictionRow row;
                    row.model_id = model.id;
                    row.image_id = rec.id;
                    row.condition = cond;
                    if (std::filesystem::exists(cache_file)) {
                        std::ifstream in(cache_file);
                        nlohmann::json j = nlohmann::json::parse(in);
                        row.status = j.value("status", "transport_error");
                        if (j.contains("age")) row.predicted_age = j["age"].get<double>();
                    } else {
                        PredictionOutcome out = predict_age(client, bytes, retry, &limiter);
                        row.status = prediction_status_name(out.status);
                        row.predicted_age = out.age;
                        nlohmann::ordered_json j;
                        j["status"] = row.status;
                        if (out.age) j["age"] = *out.age;
                        if (!out.reason.empty()) j["reason"] = out.reason;
                        // write-then-rename so concurrent duplicates never
                        // expose a torn file
                        const auto tmp = cache_file.string() + ".tmp" + std::to_string(i);
                        write_file_text(tmp, j.dump() + "\n");
                        std::filesystem::rename(tmp, cache_file);
                    }
                    predictions_.add(std::move(row));
                });
            }
        }
        predictions_.save_csv(paths_.predictions_csv());
        mark_done("predict", {paths_.predictions_csv()});
    }

    // ---- evaluate ---------------------------------------------------------

    void stage_evaluate() {
        load_corpus();
        load_compositions();
        if (predictions_.size() == 0)
            predictions_ = PredictionStore::load_csv(paths_.predictions_csv());
        evaluation_ = compute_evaluation();
        if (stage_done("evaluate")) return;
        std::filesystem::create_directories(paths_.metrics_dir());
        const auto files = write_metrics_files(*evaluation_);
        manifest_.exclusion_counts = evaluation_->exclusion_counts;
        mark_done("evaluate", files);
    }

    metrics::PredMap prediction_map(const std::string& model, const std::string& cond) const {
        metrics::PredMap out;
        for (const auto& rec : corpus_->records) {
            auto row = predictions_.get(model, rec.id, cond);
            if (row && row->predicted_age && row->status == "ok")
                out[rec.id] = *row->predicted_age;
        }
        return out;
    }

    EvaluationResult compute_evaluation() {
        EvaluationResult ev;
        const auto valid = validity();
        const auto conds = conditions();
        metrics::AgeMap truths;
        for (const auto& rec : corpus_->records) truths[rec.id] = rec.true_age;

        for (const auto& set : enumerate_subsets()) ev.combo_labels.push_back(set.label());
        for (const auto& m : cfg_.models) ev.combo_models.push_back(m.id);

        std::map<std::string, metrics::PredMap> pooled_base, pooled_atk;  // per condition

        for (const auto& model : cfg_.models) {
            const metrics::PredMap base_all = prediction_map(model.id, "baseline");

            for (const auto& cond : conds) {
                auto vit = valid.find(cond);
                const std::set<std::string> valid_ids =
                    vit == valid.end() ? std::set<std::string>{} : vit->second;

                metrics::MetricsRow row;
                row.model_id = model.id;
                row.condition = cond;

                if (cond == "baseline") {
                    metrics::PredMap preds = base_all;
                    row.n_images = static_cast<int>(preds.size());
                    row.n_base_minor = static_cast<int>(metrics::baseline_minor_set(preds).size());
                    row.excluded_missing = static_cast<int>(valid_ids.size() - preds.size());
                    if (row.n_images > 0)
                        row.pct_base_minor = 100.0 * row.n_base_minor / row.n_images;
                    row.mae_years = metrics::mae(preds, truths);
                    ev.rows.push_back(row);
                    ev.exclusion_counts[model.id + "/" + cond] = row.excluded_missing;
                    continue;
                }

                const metrics::PredMap atk_all = prediction_map(model.id, cond);
                // pairwise exclusion: keep ids with both predictions and a
                // valid condition image
                metrics::PredMap base, atk;
                for (const auto& id : valid_ids) {
                    auto bi = base_all.find(id);
                    auto ai = atk_all.find(id);
                    if (bi == base_all.end() || ai == atk_all.end()) continue;
                    base[id] = bi->second;
                    atk[id] = ai->second;
                }
                row.n_images = static_cast<int>(base.size());
                row.excluded_missing = static_cast<int>(valid_ids.size() - base.size());
                const auto acr_res = metrics::acr(base, atk);
                row.n_base_minor = acr_res.denominator;
                if (row.n_images > 0)
                    row.pct_base_minor = 100.0 * row.n_base_minor / row.n_images;
                row.acr_percent = acr_res.percent;
                if (acr_res.percent) {
                    auto ci = metrics::wilson_ci_integer_percent(
                        *acr_res.percent / 100.0, acr_res.denominator, cfg_.confidence);
                    if (ci) {
                        row.ci_low_percent = ci->first;
                        row.ci_high_percent = ci->second;
                    }
                }
                row.mean_shift_years = metrics::mean_age_shift(base, atk);
                metrics::PredMap base_minors_true, atk_minors_true;
                for (const auto& [id, b] : base) {
                    if (truths.at(id) < kAdultThresholdYears) {
                        base_minors_true[id] = b;
                        atk_minors_true[id] = atk.at(id);
                    }
                }
                row.mean_shift_minor_years =
                    metrics::mean_age_shift(base_minors_true, atk_minors_true);
                row.mae_years = metrics::mae(atk, truths);
                ev.rows.push_back(row);
                ev.exclusion_counts[model.id + "/" + cond] = row.excluded_missing;

                ev.combo_shift[cond][model.id] = row.mean_shift_years;

                for (const auto& [binning, bins] :
                     {std::pair{std::string("age"), metrics::integer_age_bins()},
                      std::pair{std::string("group"), metrics::coarse_age_bins()}}) {
                    for (auto& srow : metrics::stratify_by_true_age(base, atk, truths, bins))
                        ev.stratified.push_back({model.id, cond, binning, std::move(srow)});
                }

                auto bim = metrics::bimodality_summary(base, atk, cfg_.near_zero_cutoff,
                                                       cfg_.jump_cutoff);
                if (bim) ev.bimodality.push_back({model.id, cond, *bim});

                for (const auto& [id, b] : base) {
                    pooled_base[cond][model.id + ":" + id] = b;
                    pooled_atk[cond][model.id + ":" + id] = atk.at(id);
                }
            }
        }

        for (const auto& cond : conds) {
            if (cond == "baseline") continue;
            auto bim = metrics::bimodality_summary(pooled_base[cond], pooled_atk[cond],
                                                   cfg_.near_zero_cutoff, cfg_.jump_cutoff);
            if (bim) ev.bimodality.push_back({"(pooled)", cond, *bim});
        }

        const auto outcomes = editor_session().outcomes();
        ev.refusal_attacks = refusal_bias(outcomes, *corpus_);
        ev.refusal_sets = refusal_bias_for_sets(outcomes, *corpus_, cfg_.subsets());
        return ev;
    }

    std::vector<std::filesystem::path> write_metrics_files(const EvaluationResult& ev) {
        using detail::fmt_decimals;
        using detail::fmt_opt;
        const auto dir = paths_.metrics_dir();
        std::vector<std::filesystem::path> files;

        {
            std::string out =
                "model_id,condition,n_images,n_base_minor,pct_base_minor,acr_percent,"
                "ci_low_percent,ci_high_percent,mean_shift_years,mean_shift_minor_years,"
                "mae_years,excluded_missing\n";
            for (const auto& r : ev.rows) {
                out += csv_join(
                    {r.model_id, r.condition, std::to_string(r.n_images),
                     std::to_string(r.n_base_minor), fmt_opt(r.pct_base_minor, 1),
                     fmt_opt(r.acr_percent, 1),
                     r.ci_low_percent ? std::to_string(*r.ci_low_percent) : "",
                     r.ci_high_percent ? std::to_string(*r.ci_high_percent) : "",
                     fmt_opt(r.mean_shift_years, 1), fmt_opt(r.mean_shift_minor_years, 1),
                     fmt_opt(r.mae_years, 2), std::to_string(r.excluded_missing)});
                out += '\n';
            }
            files.push_back(dir / "metrics.csv");
            write_file_text(files.back(), out);
        }
        {
            std::string out =
                "model_id,condition,binning,bin,member_count,base_minor_count,"
                "crossing_count,mean_shift_years,crossing_rate_percent\n";
            for (const auto& s : ev.stratified) {
                out += csv_join({s.model_id, s.condition, s.binning, s.row.bin_label,
                                 std::to_string(s.row.member_count),
                                 std::to_string(s.row.base_minor_count),
                                 std::to_string(s.row.crossing_count),
                                 fmt_opt(s.row.mean_shift, 1),
                                 fmt_opt(s.row.crossing_rate_percent, 1)});
                out += '\n';
            }
            files.push_back(dir / "stratified.csv");
            write_file_text(files.back(), out);
        }
        {
            std::string out =
                "model_id,condition,n,frac_near_zero,frac_large_jump,jumper_mean_baseline\n";
            for (const auto& b : ev.bimodality) {
                out += csv_join({b.model_id, b.condition, std::to_string(b.summary.n),
                                 fmt_opt(b.summary.frac_near_zero, 3),
                                 fmt_opt(b.summary.frac_large_jump, 3),
                                 fmt_opt(b.summary.jumper_mean_baseline, 1)});
                out += '\n';
            }
            files.push_back(dir / "bimodality.csv");
            write_file_text(files.back(), out);
        }
        {
            std::string out = "condition";
            for (const auto& m : ev.combo_models) out += "," + csv_escape(m);
            out += '\n';
            for (const auto& label : ev.combo_labels) {
                out += csv_escape(label);
                auto row = ev.combo_shift.find(label);
                for (const auto& m : ev.combo_models) {
                    std::optional<double> cell;
                    if (row != ev.combo_shift.end()) {
                        auto it = row->second.find(m);
                        if (it != row->second.end()) cell = it->second;
                    }
                    out += "," + fmt_opt(cell, 1);
                }
                out += '\n';
            }
            files.push_back(dir / "combo_matrix.csv");
            write_file_text(files.back(), out);
        }
        {
            std::string out =
                "attack_or_set,dropped_count,dropped_minor_fraction,corpus_minor_fraction\n";
            auto emit = [&](const RefusalStats& s) {
                out += csv_join({s.attack_or_set, std::to_string(s.dropped_count),
                                 fmt_opt(s.dropped_minor_fraction, 3),
                                 fmt_decimals(s.corpus_minor_fraction, 3)});
                out += '\n';
            };
            for (const auto& s : ev.refusal_attacks) emit(s);
            for (const auto& s : ev.refusal_sets)
                if (AttackSet::parse(s.attack_or_set)->size() > 1) emit(s);
            files.push_back(dir / "refusal_bias.csv");
            write_file_text(files.back(), out);
        }
        {
            nlohmann::ordered_json j;
            j["run_id"] = manifest_.run_id;
            j["corpus_digest"] = manifest_.corpus_digest;
            j["tau"] = cfg_.tau;
            j["confidence"] = cfg_.confidence;
            j["editor_id"] = cfg_.editor.id;
            j["model_ids"] = manifest_.model_ids;
            j["prompt_hashes"] = manifest_.prompt_hashes;
            j["exclusion_counts"] = ev.exclusion_counts;
            j["cells"] = nlohmann::ordered_json::array();
            for (const auto& r : ev.rows) {
                nlohmann::ordered_json cell;
                cell["model_id"] = r.model_id;
                cell["condition"] = r.condition;
                cell["n_images"] = r.n_images;
                cell["n_base_minor"] = r.n_base_minor;
                if (r.acr_percent) cell["acr_percent"] = *r.acr_percent;
                if (r.ci_low_percent) cell["ci_low_percent"] = *r.ci_low_percent;
                if (r.ci_high_percent) cell["ci_high_percent"] = *r.ci_high_percent;
                if (r.mean_shift_years) cell["mean_shift_years"] = *r.mean_shift_years;
                if (r.mean_shift_minor_years)
                    cell["mean_shift_minor_years"] = *r.mean_shift_minor_years;
                if (r.mae_years) cell["mae_years"] = *r.mae_years;
                j["cells"].push_back(std::move(cell));
            }
            files.push_back(dir / "summary.json");
            write_file_text(files.back(), j.dump(2) + "\n");
        }
        return files;
    }

    // ---- report -----------------------------------------------------------

    void stage_report() {
        load_corpus();
        load_compositions();
        if (predictions_.size() == 0)
            predictions_ = PredictionStore::load_csv(paths_.predictions_csv());
        if (stage_done("report")) return;
        std::filesystem::create_directories(paths_.report_dir());
        ReportSpec spec;
        spec.out_dir = paths_.report_dir();
        spec.formats.clear();
        for (const auto& f : cfg_.report_formats) spec.formats.insert(f);
        spec.sections.clear();
        for (const auto& s : cfg_.report_sections) spec.sections.insert(s);
        last_report_ = render_report(spec);
        for (const auto& n : last_report_.notices) std::cerr << "report: " << n << "\n";
        mark_done("report", last_report_.files);
    }

  public:
    const ReportOutput& last_report() const { return last_report_; }

    // Renders the configured sections from the metrics CSVs (tables copy the
    // already-rounded strings; plots draw from the prediction ledger).
    ReportOutput render_report(const ReportSpec& spec) {
        using report_detail::CsvTable;
        using report_detail::load_table;
        load_corpus();
        load_compositions();
        if (predictions_.size() == 0 && std::filesystem::exists(paths_.predictions_csv()))
            predictions_ = PredictionStore::load_csv(paths_.predictions_csv());
        ReportOutput out;
        std::filesystem::create_directories(spec.out_dir);
        const CsvTable metrics_csv = load_table(paths_.metrics_dir() / "metrics.csv");
        const CsvTable stratified_csv = load_table(paths_.metrics_dir() / "stratified.csv");
        const CsvTable bimodality_csv = load_table(paths_.metrics_dir() / "bimodality.csv");
        const CsvTable combo_csv = load_table(paths_.metrics_dir() / "combo_matrix.csv");

        auto write_table = [&](const std::string& name, const std::vector<std::string>& header,
                               const std::vector<std::vector<std::string>>& rows) {
            if (rows.empty()) {
                out.notices.push_back("section " + name + " skipped: no rows");
                return;
            }
            if (spec.formats.count("markdown")) {
                auto p = spec.out_dir / (name + ".md");
                write_file_text(p, report_detail::markdown_table(header, rows));
                out.files.push_back(p);
            }
            if (spec.formats.count("csv")) {
                auto p = spec.out_dir / (name + ".csv");
                write_file_text(p, report_detail::csv_table(header, rows));
                out.files.push_back(p);
            }
        };

        auto metric_rows = [&](const std::string& condition) {
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : metrics_csv.rows)
                if (r[metrics_csv.col("condition")] == condition) rows.push_back(r);
            return rows;
        };
        auto cell = [&](const std::vector<std::string>& row, const char* col) -> std::string {
            const int i = metrics_csv.col(col);
            return i < 0 ? "" : row[i];
        };
        const std::string quad_label = AttackSet(0xF).label();

        if (spec.sections.count("table2")) {
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : metric_rows("baseline")) {
                rows.push_back({cell(r, "model_id"), cell(r, "mae_years"),
                                cell(r, "n_base_minor"),
                                cell(r, "pct_base_minor") + "%"});
            }
            write_table("table2", {"Model", "Clean MAE", "N_base<18", "% of corpus"}, rows);
        }

        if (spec.sections.count("table3")) {
            std::vector<std::string> header{"Model"};
            const std::vector<AttackType> order{AttackType::Beard, AttackType::GreyHair,
                                                AttackType::Makeup, AttackType::Wrinkles};
            for (AttackType t : order) {
                header.push_back(std::string(attack_display_name(t)) + " Shift");
                header.push_back(std::string(attack_display_name(t)) + " ACR");
            }
            std::vector<std::vector<std::string>> rows;
            for (const auto& m : cfg_.models) {
                std::vector<std::string> row{m.id};
                bool any = false;
                for (AttackType t : order) {
                    std::string shift, acr;
                    for (const auto& r : metric_rows(attack_token(t))) {
                        if (cell(r, "model_id") != m.id) continue;
                        shift = cell(r, "mean_shift_years");
                        acr = cell(r, "acr_percent");
                        any = true;
                    }
                    row.push_back(shift);
                    row.push_back(acr.empty() ? "" : acr + "%");
                }
                if (any) rows.push_back(std::move(row));
            }
            write_table("table3", header, rows);
        }

        if (spec.sections.count("table4")) {
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : metric_rows(quad_label)) {
                const std::string lo = cell(r, "ci_low_percent");
                const std::string hi = cell(r, "ci_high_percent");
                const std::string ci = lo.empty() ? "" : "[" + lo + "-" + hi + "%]";
                const std::string acr = cell(r, "acr_percent");
                rows.push_back({cell(r, "model_id"), cell(r, "n_base_minor"),
                                acr.empty() ? "" : acr + "%", ci,
                                cell(r, "mean_shift_years"), cell(r, "mae_years")});
            }
            write_table("table4",
                        {"Model", "N_base<18", "ACR", "95% CI", "Mean shift (yr)", "MAE"}, rows);
        }

        if (spec.sections.count("table6")) {
            if (combo_csv.rows.empty()) {
                out.notices.push_back("section table6 skipped: no combo matrix");
            } else {
                write_table("table6", combo_csv.header, combo_csv.rows);
            }
        }

        if (spec.sections.count("distributions")) {
            write_table("distributions", bimodality_csv.header, bimodality_csv.rows);
        }

        if (spec.sections.count("trajectories") && spec.formats.count("svg")) {
            const auto valid = validity();
            int emitted = 0;
            for (const auto& model : cfg_.models) {
                const metrics::PredMap base_all = prediction_map(model.id, "baseline");
                for (const auto& cond : conditions()) {
                    if (cond == "baseline") continue;
                    auto vit = valid.find(cond);
                    if (vit == valid.end()) continue;
                    const metrics::PredMap atk_all = prediction_map(model.id, cond);
                    metrics::PredMap base, atk;
                    for (const auto& id : vit->second) {
                        auto bi = base_all.find(id);
                        auto ai = atk_all.find(id);
                        if (bi == base_all.end() || ai == atk_all.end()) continue;
                        base[id] = bi->second;
                        atk[id] = ai->second;
                    }
                    if (base.empty()) continue;
                    std::string acr_text = "n/a";
                    for (const auto& r : metric_rows(cond))
                        if (cell(r, "model_id") == model.id && !cell(r, "acr_percent").empty())
                            acr_text = cell(r, "acr_percent") + "%";
                    const auto crossers = metrics::threshold_crossers(base, atk);
                    auto p = spec.out_dir / ("trajectory_" + model.id + "_" + cond + ".svg");
                    emit_trajectory_plot(model.id + " / " + cond, base, atk, crossers, acr_text,
                                         p);
                    out.files.push_back(p);
                    ++emitted;
                }
            }
            if (emitted == 0) out.notices.push_back("section trajectories skipped: no pairs");
        }

        if (spec.sections.count("stratified") && spec.formats.count("svg")) {
            int emitted = 0;
            const int c_model = stratified_csv.col("model_id");
            const int c_cond = stratified_csv.col("condition");
            const int c_binning = stratified_csv.col("binning");
            const int c_bin = stratified_csv.col("bin");
            const int c_shift = stratified_csv.col("mean_shift_years");
            const int c_rate = stratified_csv.col("crossing_rate_percent");
            for (const auto& model : cfg_.models) {
                for (const auto& cond : conditions()) {
                    if (cond == "baseline") continue;
                    std::vector<report_detail::StratifiedSvg::Bin> bins;
                    for (const auto& r : stratified_csv.rows) {
                        if (r[c_model] != model.id || r[c_cond] != cond || r[c_binning] != "age")
                            continue;
                        report_detail::StratifiedSvg::Bin bin;
                        bin.label = r[c_bin];
                        if (!r[c_shift].empty()) bin.mean_shift = std::stod(r[c_shift]);
                        if (!r[c_rate].empty()) bin.crossing_rate = std::stod(r[c_rate]);
                        bins.push_back(std::move(bin));
                    }
                    if (bins.empty()) continue;
                    auto p = spec.out_dir / ("stratified_" + model.id + "_" + cond + ".svg");
                    emit_stratified_plot(model.id + " / " + cond, bins, p);
                    out.files.push_back(p);
                    ++emitted;
                }
            }
            if (emitted == 0) out.notices.push_back("section stratified skipped: no rows");
        }

        return out;
    }

  private:
    RunConfig cfg_;
    RunPaths paths_;
    RunManifest manifest_;
    std::optional<Corpus> corpus_;
    std::unique_ptr<EditorSession> session_;
    std::shared_ptr<EditorClient> editor_client_;
    std::map<std::string, std::shared_ptr<EstimatorClient>> estimators_;
    std::map<std::string, std::shared_ptr<EstimatorClient>> estimator_overrides_;
    std::vector<CompositionEntry> compositions_;
    PredictionStore predictions_;
    std::optional<EvaluationResult> evaluation_;
    ReportOutput last_report_;
};

}  // namespace agebench
