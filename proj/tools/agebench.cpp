// Batch harness for measuring facial age estimator robustness against
// simulated cosmetic attacks: single-attack generation through an image
// editor client, priority-weighted multi-attack composition, age prediction
// collection, and the full metric/report suite.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "agebench/config.hpp"
#include "agebench/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitStageFailure = 2;

struct GlobalOpts {
    std::string config_path;
    std::string run_dir = "runs/default";
    int parallel = 0;  // 0 = use config value
    bool dry_run = false;
};

struct StageOverrides {
    std::string corpus;
    std::string attacks;
    std::string editor;
    std::string attacks_dir;   // where generated single attacks live
    std::string composed_out;  // where composed images go
    std::string subsets;
    int tau = 0;
    std::string sections;
    std::string formats;
};

void apply_overrides(agebench::RunConfig& cfg, const GlobalOpts& global,
                     const StageOverrides& ov) {
    using namespace agebench;
    if (global.parallel > 0) cfg.parallelism = global.parallel;
    if (!ov.corpus.empty()) cfg.corpus_manifest = ov.corpus;
    if (!ov.editor.empty()) cfg.editor.id = ov.editor;
    if (!ov.attacks.empty()) {
        cfg.attacks.clear();
        for (const auto& token : config_split_list(ov.attacks)) {
            auto t = parse_attack_token(token);
            if (!t) throw ConfigError("unknown attack '" + token + "'");
            cfg.attacks.push_back(*t);
        }
    }
    if (ov.tau > 0) cfg.tau = ov.tau;
    if (!ov.subsets.empty() && ov.subsets != "all")
        cfg.subset_labels = config_split_list(ov.subsets);
    if (!ov.subsets.empty() && ov.subsets == "all") cfg.subset_labels.clear();
    if (!ov.sections.empty() && ov.sections != "all")
        cfg.report_sections = config_split_list(ov.sections);
    if (!ov.formats.empty() && ov.formats != "all")
        cfg.report_formats = config_split_list(ov.formats);
    cfg.subsets();  // validate any new labels
}

int run_stages(const GlobalOpts& global, const StageOverrides& ov,
               const std::vector<std::string>& stages) {
    using namespace agebench;
    RunConfig cfg;
    try {
        if (!global.config_path.empty()) {
            cfg = validate_config(global.config_path);
        } else if (!ov.corpus.empty()) {
            // minimal synthetic-run defaults when no config file is given
            cfg.corpus_manifest = ov.corpus;
            ModelDescriptor m;
            m.id = "synthetic";
            m.kind = ModelDescriptor::Kind::Synthetic;
            cfg.models.push_back(std::move(m));
        } else {
            std::cerr << "error: --config (or --corpus) is required\n";
            return kExitValidation;
        }
        apply_overrides(cfg, global, ov);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    }

    if (global.dry_run) {
        std::cout << "run dir: " << global.run_dir << "\n";
        std::cout << "corpus manifest: " << cfg.corpus_manifest.string() << "\n";
        std::cout << "editor: " << cfg.editor.id << ", tau: " << cfg.tau
                  << ", parallel: " << cfg.parallelism << "\n";
        std::cout << "models:";
        for (const auto& m : cfg.models) std::cout << " " << m.id;
        std::cout << "\nstages:";
        for (const auto& s : stages) std::cout << " " << s;
        std::cout << "\n";
        return kExitOk;
    }

    try {
        RunPaths paths{global.run_dir, {}, {}};
        if (!ov.attacks_dir.empty()) paths.cache_override = ov.attacks_dir;
        if (!ov.composed_out.empty()) paths.composed_override = ov.composed_out;
        Pipeline pipeline(cfg, paths);
        for (const auto& stage : stages) {
            std::cout << "[" << stage << "] running\n";
            pipeline.run_stage(stage);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStageFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStageFailure;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"age estimator robustness harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalOpts global;
    app.add_option("--config", global.config_path, "run config file (TOML-style)");
    app.add_option("--run-dir", global.run_dir, "run directory")
        ->capture_default_str();
    app.add_option("--parallel", global.parallel, "max in-flight client requests");
    app.add_flag("--dry-run", global.dry_run, "validate and print the plan, touch nothing");

    StageOverrides ov;
    std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"ingest", {"ingest"}},
        {"generate", {"ingest", "generate"}},
        {"compose", {"ingest", "generate", "compose"}},
        {"predict", {"ingest", "generate", "compose", "predict"}},
        {"evaluate", {"ingest", "generate", "compose", "predict", "evaluate"}},
        {"report", {"ingest", "generate", "compose", "predict", "evaluate", "report"}},
        {"run", {"ingest", "generate", "compose", "predict", "evaluate", "report"}},
    };
    const std::map<std::string, std::string> descriptions = {
        {"ingest", "read the corpus manifest and apply eligibility filters"},
        {"generate", "produce single-attack images through the editor client"},
        {"compose", "build multi-attack images with pixel-delta blending"},
        {"predict", "collect age predictions for every model and condition"},
        {"evaluate", "compute the metric suite from the ledgers"},
        {"report", "render tables and plots from the metrics"},
        {"run", "run all stages"},
    };

    int rc = kExitOk;
    for (auto& [name, stages] : commands) {
        auto* sub = app.add_subcommand(name, descriptions.at(name));
        if (name == "generate" || name == "run" || name == "ingest" || name == "predict" ||
            name == "evaluate" || name == "compose") {
            sub->add_option("--corpus", ov.corpus, "corpus manifest CSV");
        }
        if (name == "generate" || name == "run") {
            sub->add_option("--attacks", ov.attacks, "comma-separated attack tokens");
            sub->add_option("--editor", ov.editor, "editor client id");
        }
        if (name == "compose" || name == "run") {
            sub->add_option("--subsets", ov.subsets, "all or comma-separated subset labels");
            sub->add_option("--tau", ov.tau, "pixel-delta ownership threshold");
        }
        if (name == "compose") {
            sub->add_option("--attacks-dir", ov.attacks_dir,
                            "directory holding the generated single attacks");
            sub->add_option("--out", ov.composed_out, "composed-image output directory");
        }
        if (name == "generate") {
            sub->add_option("--out", ov.attacks_dir,
                            "attack cache directory (defaults to <run-dir>/cache)");
        }
        if (name == "report") {
            sub->add_option("--run", global.run_dir, "run directory");
            sub->add_option("--sections", ov.sections, "comma-separated report sections");
            sub->add_option("--formats", ov.formats, "comma-separated formats");
        }
        const std::vector<std::string> stage_list = stages;
        sub->callback([&global, &ov, stage_list, &rc] {
            rc = run_stages(global, ov, stage_list);
        });
    }

    CLI11_PARSE(app, argc, argv);
    return rc;
}
