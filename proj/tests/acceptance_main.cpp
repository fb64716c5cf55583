// Acceptance suite: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "agebench/compose.hpp"
#include "agebench/metrics.hpp"
#include "agebench/pipeline.hpp"
#include "fixture_corpus.hpp"
#include "test_util.hpp"

using namespace agebench;

namespace {

struct Check {
    std::string description;
    std::function<bool(std::string&)> run;
};

Image random_image(std::mt19937& rng, int w, int h) {
    Image img(w, h);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

// Independent per-pixel priority scan straight off the raw images.
Image oracle_compose(const Image& original, const std::map<AttackType, Image>& attacked,
                     const AttackSet& set, int tau) {
    Image out = original;
    for (int y = 0; y < original.height; ++y) {
        for (int x = 0; x < original.width; ++x) {
            for (AttackType t : kAllAttacks) {
                if (!set.contains(t)) continue;
                const Image& img = attacked.at(t);
                bool claims = false;
                for (int c = 0; c < 3; ++c) {
                    int d = static_cast<int>(img.at(x, y, c)) - original.at(x, y, c);
                    if (d < 0) d = -d;
                    if (d > tau) claims = true;
                }
                if (claims) {
                    for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
                    break;
                }
            }
        }
    }
    return out;
}

struct RandomTable {
    metrics::PredMap base, atk;
    std::map<std::string, int> truths;
};

RandomTable random_table(std::mt19937& rng, int max_images = 50) {
    RandomTable t;
    const int n = 1 + static_cast<int>(rng() % max_images);
    for (int i = 0; i < n; ++i) {
        std::string id = "img" + std::to_string(i);
        t.base[id] = static_cast<double>(rng() % 121) / 4.0;
        t.atk[id] = static_cast<double>(rng() % 121) / 4.0;
        t.truths[id] = 10 + static_cast<int>(rng() % 12);
    }
    return t;
}

bool check_wilson(std::string& detail) {
    const auto started = std::chrono::steady_clock::now();
    struct Row {
        int n;
        double acr;
        int lo, hi;
    };
    const Row rows[] = {
        {92, 72.8, 63, 81}, {77, 75.3, 65, 84}, {58, 67.2, 54, 78}, {68, 63.2, 51, 74},
        {41, 82.9, 69, 92}, {80, 60.0, 49, 70}, {85, 70.6, 60, 79}, {64, 59.4, 47, 71},
    };
    for (const auto& row : rows) {
        auto ci = metrics::wilson_ci_integer_percent(row.acr / 100.0, row.n);
        if (!ci || ci->first != row.lo || ci->second != row.hi) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "(%d, %.1f%%) gave [%d-%d], expected [%d-%d]", row.n,
                          row.acr, ci ? ci->first : -1, ci ? ci->second : -1, row.lo, row.hi);
            detail = buf;
            return false;
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed >= 1.0) {
        detail = "took " + std::to_string(elapsed) + " s, budget 1 s";
        return false;
    }
    detail = "8 published (N, ACR) pairs reproduced";
    return true;
}

bool check_acr(std::string& detail) {
    metrics::PredMap base, atk;
    for (int i = 0; i < 92; ++i) {
        std::string id = "m" + std::to_string(i);
        base[id] = 15.0;
        atk[id] = i < 67 ? 20.0 : 16.0;
    }
    auto res = metrics::acr(base, atk);
    if (!res.percent || std::abs(*res.percent - 72.8) > 0.05) {
        detail = "acr(67/92) off";
        return false;
    }
    std::mt19937 rng(2001);
    for (int iter = 0; iter < 1000; ++iter) {
        RandomTable t = random_table(rng);
        auto r = metrics::acr(t.base, t.atk);
        auto crossers = metrics::threshold_crossers(t.base, t.atk);
        auto minors = metrics::baseline_minor_set(t.base);
        if (r.numerator != static_cast<int>(crossers.size()) ||
            r.denominator != static_cast<int>(minors.size())) {
            detail = "count identity broke at iteration " + std::to_string(iter);
            return false;
        }
        if (!minors.empty() &&
            *r.percent != 100.0 * static_cast<double>(crossers.size()) / minors.size()) {
            detail = "ratio identity broke at iteration " + std::to_string(iter);
            return false;
        }
    }
    detail = "72.8% reproduced; identity held on 1000 random tables";
    return true;
}

bool check_compose_oracle(std::string& detail) {
    const auto started = std::chrono::steady_clock::now();
    std::mt19937 rng(777);
    for (int iter = 0; iter < 1000; ++iter) {
        const int w = 1 + static_cast<int>(rng() % 16);
        const int h = 1 + static_cast<int>(rng() % 16);
        Image orig = random_image(rng, w, h);
        std::map<AttackType, Image> attacked;
        AttackDeltas deltas;
        for (AttackType t : kAllAttacks) {
            attacked[t] = random_image(rng, w, h);
            deltas[t] = compute_delta(orig, attacked[t]);
        }
        const AttackSet set(1 + rng() % 15);
        for (int tau : {1, 15, 254}) {
            if (!(compose_attacks(orig, deltas, set, Tau(tau)) ==
                  oracle_compose(orig, attacked, set, tau))) {
                detail = "mismatch at iteration " + std::to_string(iter) + ", tau " +
                         std::to_string(tau);
                return false;
            }
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed >= 10.0) {
        detail = "took " + std::to_string(elapsed) + " s, budget 10 s";
        return false;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "1000 random images x tau {1,15,254} bit-identical (%.2f s)",
                  elapsed);
    detail = buf;
    return true;
}

bool check_subsets(std::string& detail) {
    auto subsets = enumerate_subsets();
    int by_size[5] = {0, 0, 0, 0, 0};
    for (const auto& s : subsets) ++by_size[s.size()];
    if (subsets.size() != 15 || by_size[1] != 4 || by_size[2] != 6 || by_size[3] != 4 ||
        by_size[4] != 1) {
        detail = "got " + std::to_string(subsets.size()) + " subsets";
        return false;
    }
    detail = "15 subsets sized (4,6,4,1)";
    return true;
}

bool check_fixture_end_to_end(std::string& detail) {
    const auto started = std::chrono::steady_clock::now();
    TempDir dir("acceptance-e2e");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 50);
    RunConfig cfg = fixture_run_config(manifest);
    Pipeline p(cfg, dir.path / "run");
    p.run_all();
    const auto& ev = p.evaluation();

    // closed forms: singles shift by brightness/4/5; composed sets keep only
    // beard (+40) and grey (+25); beard flips exactly the 25 L=80 images
    const std::vector<std::tuple<std::string, double, double>> expected = {
        {"beard", 2.0, 50.0},
        {"grey", 1.25, 0.0},
        {"wrinkles", 0.75, 0.0},
        {"makeup", 0.25, 0.0},
        {"beard+grey", 3.25, 50.0},
        {"wrinkles+makeup", 0.0, 0.0},
        {"beard+grey+wrinkles+makeup", 3.25, 50.0},
    };
    for (const auto& [cond, shift, acr] : expected) {
        const auto* row = ev.find_row("synth", cond);
        if (!row || !row->mean_shift_years || *row->mean_shift_years != shift) {
            detail = cond + ": shift " +
                     (row && row->mean_shift_years ? std::to_string(*row->mean_shift_years)
                                                   : "absent") +
                     ", expected " + std::to_string(shift);
            return false;
        }
        if (!row->acr_percent || *row->acr_percent != acr) {
            detail = cond + ": acr mismatch";
            return false;
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed >= 30.0) {
        detail = "took " + std::to_string(elapsed) + " s, budget 30 s";
        return false;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "50-image offline run matched closed forms exactly (%.2f s)", elapsed);
    detail = buf;
    return true;
}

bool check_acr_decomposition(std::string& detail) {
    std::mt19937 rng(4242);
    for (int iter = 0; iter < 200; ++iter) {
        RandomTable t = random_table(rng);
        std::vector<metrics::AgeBin> bins;
        int lo = 10;
        while (lo <= 21) {
            int hi = std::min<int>(21, lo + static_cast<int>(rng() % 4));
            bins.push_back({lo, hi, std::to_string(lo)});
            lo = hi + 1;
        }
        auto rows = metrics::stratify_by_true_age(t.base, t.atk, t.truths, bins);
        long long minors = 0, crossers = 0;
        for (const auto& row : rows) {
            minors += row.base_minor_count;
            crossers += row.crossing_count;
        }
        auto res = metrics::acr(t.base, t.atk);
        // weighted mean of bin rates = sum(crossers_b) / sum(minors_b); compare
        // as cross-multiplied integers, no floating point involved
        if (minors != res.denominator || crossers != res.numerator ||
            crossers * res.denominator != static_cast<long long>(res.numerator) * minors) {
            detail = "decomposition broke at iteration " + std::to_string(iter);
            return false;
        }
    }
    detail = "count-weighted bin rates recompose ACR on 200 random partitions";
    return true;
}

bool check_population_agnosticism(std::string& detail) {
    std::mt19937 rng(5150);
    for (int iter = 0; iter < 200; ++iter) {
        RandomTable t = random_table(rng);
        auto before = metrics::acr(t.base, t.atk);
        for (int i = 0; i < 100; ++i) {
            std::string id = "adult" + std::to_string(i);
            t.base[id] = 18.0 + static_cast<double>(rng() % 40) / 4.0;
            t.atk[id] = static_cast<double>(rng() % 121) / 4.0;
        }
        auto after = metrics::acr(t.base, t.atk);
        if (before.numerator != after.numerator || before.denominator != after.denominator ||
            before.percent != after.percent) {
            detail = "acr moved at iteration " + std::to_string(iter);
            return false;
        }
    }
    detail = "appending adult-baseline images left ACR fixed on 200 tables";
    return true;
}

bool check_resumability(std::string& detail) {
    TempDir dir("acceptance-resume");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 12);
    RunConfig cfg = fixture_run_config(manifest);
    {
        Pipeline full(cfg, dir.path / "full");
        full.run_all();
    }
    {
        Pipeline interrupted(cfg, dir.path / "resumed");
        interrupted.run_stage("ingest");
        interrupted.run_stage("generate");
        interrupted.run_stage("compose");
    }
    {
        Pipeline resumed(cfg, dir.path / "resumed");
        resumed.run_all();
    }
    for (const char* name : {"metrics.csv", "stratified.csv", "bimodality.csv",
                             "combo_matrix.csv", "refusal_bias.csv", "summary.json"}) {
        if (read_file_bytes(dir.path / "full" / "metrics" / name) !=
            read_file_bytes(dir.path / "resumed" / "metrics" / name)) {
            detail = std::string(name) + " differs after resume";
            return false;
        }
    }
    detail = "metrics files byte-identical after an interrupt at compose";
    return true;
}

bool check_report_golden(std::string& detail) {
    TempDir dir("acceptance-report");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 10);
    RunConfig cfg = fixture_run_config(manifest);
    Pipeline p(cfg, dir.path / "run");
    p.run_all();

    ReportSpec spec;
    spec.out_dir = dir.path / "a";
    auto a = p.render_report(spec);
    spec.out_dir = dir.path / "b";
    auto b = p.render_report(spec);
    if (a.files.empty() || a.files.size() != b.files.size()) {
        detail = "render produced " + std::to_string(a.files.size()) + " vs " +
                 std::to_string(b.files.size()) + " files";
        return false;
    }
    bool has_table = false, has_trajectory = false, has_stratified = false;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        if (read_file_bytes(a.files[i]) != read_file_bytes(b.files[i])) {
            detail = a.files[i].filename().string() + " not byte-identical";
            return false;
        }
        const auto name = a.files[i].filename().string();
        if (name.rfind("table", 0) == 0) has_table = true;
        if (name.rfind("trajectory_", 0) == 0) has_trajectory = true;
        if (name.rfind("stratified_", 0) == 0) has_stratified = true;
    }
    if (!has_table || !has_trajectory || !has_stratified) {
        detail = "missing an emitter family in the output";
        return false;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu report files byte-identical across two renders",
                  a.files.size());
    detail = buf;
    return true;
}

}  // namespace

int main() {
    const std::vector<Check> checks = {
        {"Wilson CI reproduction (published pairs)", check_wilson},
        {"ACR consistency and crossers identity", check_acr},
        {"compose vs priority-scan oracle", check_compose_oracle},
        {"subset enumeration (15 = 4+6+4+1)", check_subsets},
        {"fixture end-to-end closed forms", check_fixture_end_to_end},
        {"ACR decomposition over random bins", check_acr_decomposition},
        {"ACR population-agnosticism", check_population_agnosticism},
        {"resumability after interrupt at compose", check_resumability},
        {"report golden-file determinism", check_report_golden},
    };
    int failures = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = checks[i].run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %zu. %s%s%s\n", ok ? "PASS" : "FAIL", i + 1,
                    checks[i].description.c_str(), detail.empty() ? "" : " — ",
                    detail.c_str());
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d of %zu criteria failed\n", failures, checks.size());
    else std::printf("all %zu criteria passed\n", checks.size());
    return failures == 0 ? 0 : 1;
}
