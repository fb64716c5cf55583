#include "agebench/report.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <string>

#include "agebench/pipeline.hpp"
#include "fixture_corpus.hpp"
#include "test_util.hpp"

using namespace agebench;

namespace {

int count_occurrences(const std::string& haystack, const std::string& needle) {
    int n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

std::string slurp(const std::filesystem::path& p) {
    auto bytes = read_file_bytes(p);
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace

TEST_CASE("trajectory plot marks crossers, threshold, and acr annotation") {
    TempDir dir("traj");
    metrics::PredMap base{{"a", 15.0}, {"b", 16.0}, {"c", 19.0}};
    metrics::PredMap atk{{"a", 19.0}, {"b", 17.0}, {"c", 25.0}};
    const auto crossers = metrics::threshold_crossers(base, atk);
    REQUIRE(crossers.size() == 1);
    auto path = emit_trajectory_plot("m / beard", base, atk, crossers, "50.0%",
                                     dir.path / "t.svg");
    const std::string svg = slurp(path);
    REQUIRE(count_occurrences(svg, "class=\"crosser\"") == 1);
    REQUIRE(count_occurrences(svg, "class=\"subject\"") == 2);
    REQUIRE(count_occurrences(svg, "class=\"threshold\"") == 1);
    // 18 yr maps to y = 390 - (18/60) * 360 = 282
    REQUIRE(svg.find("y1=\"282.00\"") != std::string::npos);
    REQUIRE(svg.find("ACR 50.0%") != std::string::npos);
    REQUIRE(svg.find("stroke-dasharray") != std::string::npos);
}

TEST_CASE("trajectory plot with zero crossers annotates 0.0%") {
    TempDir dir("traj0");
    metrics::PredMap base{{"a", 15.0}};
    metrics::PredMap atk{{"a", 16.0}};
    auto path = emit_trajectory_plot("m / makeup", base, atk, {}, "0.0%", dir.path / "t.svg");
    const std::string svg = slurp(path);
    REQUIRE(count_occurrences(svg, "class=\"crosser\"") == 0);
    REQUIRE(svg.find("ACR 0.0%") != std::string::npos);
}

TEST_CASE("stratified plot draws the 50 percent rule and leaves gaps for absent bins") {
    TempDir dir("strat");
    std::vector<report_detail::StratifiedSvg::Bin> bins;
    bins.push_back({"10", 1.5, 20.0});
    bins.push_back({"11", -0.5, std::nullopt});  // no baseline minors: gap
    bins.push_back({"12", 3.0, 75.0});
    auto path = emit_stratified_plot("m / beard", bins, dir.path / "s.svg");
    const std::string svg = slurp(path);
    REQUIRE(count_occurrences(svg, "class=\"rule50\"") == 1);
    REQUIRE(count_occurrences(svg, "class=\"rate\"") == 2);   // absent bin rendered as gap
    REQUIRE(count_occurrences(svg, "class=\"shift\"") == 3);
    // single-bin input renders one bar pair
    auto single = emit_stratified_plot("m / grey", {{"15", 2.0, 40.0}}, dir.path / "one.svg");
    const std::string one = slurp(single);
    REQUIRE(count_occurrences(one, "class=\"rate\"") == 1);
    REQUIRE(count_occurrences(one, "class=\"shift\"") == 1);
}

TEST_CASE("report renders tables from the metrics csv strings") {
    TempDir dir("tables");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 10);
    RunConfig cfg = fixture_run_config(manifest);
    Pipeline p(cfg, dir.path / "run");
    p.run_all();

    const auto report_dir = p.paths().report_dir();
    REQUIRE(std::filesystem::exists(report_dir / "table2.md"));
    REQUIRE(std::filesystem::exists(report_dir / "table4.csv"));
    const std::string table4 = slurp(report_dir / "table4.md");
    REQUIRE(table4.find("| Model | N_base<18 | ACR | 95% CI | Mean shift (yr) | MAE |") !=
            std::string::npos);
    REQUIRE(table4.find("50.0%") != std::string::npos);
    const std::string table2 = slurp(report_dir / "table2.md");
    REQUIRE(table2.find("% of corpus") != std::string::npos);
    REQUIRE(table2.find("100.0%") != std::string::npos);
    const std::string table6 = slurp(report_dir / "table6.csv");
    REQUIRE(count_occurrences(table6, "\n") == 16);  // header + 15 subsets

    // every cell in table4 appears verbatim in metrics.csv (no re-rounding)
    const std::string metrics_csv = slurp(p.paths().metrics_dir() / "metrics.csv");
    REQUIRE(metrics_csv.find("3.3") != std::string::npos);
    REQUIRE(table6.find("3.3") != std::string::npos);
}

TEST_CASE("report output is byte-identical across renders") {
    TempDir dir("golden");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 10);
    RunConfig cfg = fixture_run_config(manifest);
    Pipeline p(cfg, dir.path / "run");
    p.run_all();

    ReportSpec spec;
    spec.out_dir = dir.path / "render_a";
    auto a = p.render_report(spec);
    spec.out_dir = dir.path / "render_b";
    auto b = p.render_report(spec);
    REQUIRE(a.files.size() == b.files.size());
    REQUIRE_FALSE(a.files.empty());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        INFO(a.files[i].string());
        REQUIRE(read_file_bytes(a.files[i]) == read_file_bytes(b.files[i]));
    }
}

TEST_CASE("empty metrics produce notices instead of files") {
    TempDir dir("empty");
    auto manifest = write_fixture_corpus(dir.path / "corpus", 4);
    RunConfig cfg = fixture_run_config(manifest);
    Pipeline p(cfg, dir.path / "run");
    p.run_stage("ingest");  // no metrics yet

    ReportSpec spec;
    spec.out_dir = dir.path / "render";
    auto out = p.render_report(spec);
    REQUIRE(out.files.empty());
    REQUIRE_FALSE(out.notices.empty());
}
