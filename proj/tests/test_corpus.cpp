#include "agebench/corpus.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <fstream>

#include "agebench/image.hpp"
#include "test_util.hpp"

using namespace agebench;

namespace {

void write_manifest(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path);
    out << "id,path,true_age,source_dataset\n" << body;
}

// Non-gray solid color so the grayscale filter does not fire.
void write_image(const std::filesystem::path& path, int w, int h, int base = 80) {
    save_png(Image::solid(w, h, static_cast<std::uint8_t>(base - 1),
                          static_cast<std::uint8_t>(base), static_cast<std::uint8_t>(base + 1)),
             path);
}

}  // namespace

TEST_CASE("ingest reads dimensions and digest from the image bytes") {
    TempDir dir("ingest");
    write_image(dir.path / "a.png", 130, 140);
    write_image(dir.path / "b.png", 150, 150);
    write_image(dir.path / "c.png", 200, 120);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "b,b.png,17,utk\n"
                   "c,c.png,19,agedb\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records.size() == 3);
    REQUIRE(corpus.skips.empty());
    REQUIRE(corpus.records[0].id == "a");
    REQUIRE(corpus.records[0].width == 130);
    REQUIRE(corpus.records[0].height == 140);
    REQUIRE(corpus.records[0].digest.size() == 64);
    REQUIRE(corpus.records[2].true_age == 19);

    // same files ingested twice hash identically and keep row order
    Corpus again = ingest_manifest(dir.path / "corpus.csv");
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(again.records[i].id == corpus.records[i].id);
        REQUIRE(again.records[i].digest == corpus.records[i].digest);
    }
}

TEST_CASE("missing image becomes a skip entry, missing manifest is fatal") {
    TempDir dir("skips");
    write_image(dir.path / "a.png", 130, 130);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "gone,missing.png,13,utk\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records.size() == 1);
    REQUIRE(corpus.skips.size() == 1);
    REQUIRE(corpus.skips[0].id == "gone");

    REQUIRE_THROWS(ingest_manifest(dir.path / "nope.csv"));
}

TEST_CASE("malformed rows are skipped with reasons") {
    TempDir dir("malformed");
    write_image(dir.path / "a.png", 130, 130);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "b,a.png,not_a_number,utk\n"
                   "short,row\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records.size() == 1);
    REQUIRE(corpus.skips.size() == 2);
}

TEST_CASE("fractional ages floor to whole years") {
    TempDir dir("floor");
    write_image(dir.path / "a.png", 130, 130);
    write_manifest(dir.path / "corpus.csv", "a,a.png,17.8,utk\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records[0].true_age == 17);
}

TEST_CASE("filter removes low resolution, out-of-range ages, grayscale") {
    TempDir dir("filter");
    write_image(dir.path / "small.png", 119, 200);
    write_image(dir.path / "ok21.png", 120, 120);
    write_image(dir.path / "old.png", 500, 500);
    save_png(Image::solid(300, 300, 90, 90, 90), dir.path / "gray.png");
    write_manifest(dir.path / "corpus.csv",
                   "small,small.png,15,utk\n"
                   "ok21,ok21.png,21,utk\n"
                   "old,old.png,22,utk\n"
                   "gray,gray.png,15,utk\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records.size() == 4);
    Corpus kept = filter_eligible(corpus);
    REQUIRE(kept.records.size() == 1);
    REQUIRE(kept.records[0].id == "ok21");

    // idempotent
    Corpus twice = filter_eligible(kept);
    REQUIRE(twice.records.size() == kept.records.size());
    // all eligible -> identity on records
    REQUIRE(twice.records[0].id == kept.records[0].id);
}

TEST_CASE("external eligibility hook can reject records") {
    TempDir dir("hook");
    write_image(dir.path / "a.png", 130, 130);
    write_image(dir.path / "b.png", 130, 130);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "b,b.png,13,utk\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    Corpus kept = filter_eligible(corpus, [](const ImageRecord& r) { return r.id != "b"; });
    REQUIRE(kept.records.size() == 1);
    REQUIRE(kept.records[0].id == "a");
    REQUIRE(kept.skips.back().reason == "external predicate");
}

TEST_CASE("split_counts partitions at 18") {
    Corpus corpus;
    for (int age : {10, 17, 18, 21}) {
        ImageRecord r;
        r.id = "r" + std::to_string(age);
        r.true_age = age;
        r.width = r.height = 200;
        corpus.records.push_back(r);
    }
    auto [minors, adults] = split_counts(corpus);
    REQUIRE(minors == 2);
    REQUIRE(adults == 2);

    Corpus young;
    for (int i = 0; i < 5; ++i) {
        ImageRecord r;
        r.id = "m" + std::to_string(i);
        r.true_age = 11;
        young.records.push_back(r);
    }
    auto [m2, a2] = split_counts(young);
    REQUIRE(m2 == 5);
    REQUIRE(a2 == 0);

    auto filtered = filter_eligible(corpus);
    auto [fm, fa] = split_counts(filtered);
    REQUIRE(fm + fa == static_cast<int>(filtered.records.size()));
}

TEST_CASE("duplicate ids are rejected into skips") {
    TempDir dir("dup");
    write_image(dir.path / "a.png", 130, 130);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "a,a.png,13,utk\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    REQUIRE(corpus.records.size() == 1);
    REQUIRE(corpus.skips.size() == 1);
}

TEST_CASE("corpus json round trip preserves records and is deterministic") {
    TempDir dir("json");
    write_image(dir.path / "a.png", 130, 130);
    write_image(dir.path / "b.png", 119, 130);
    write_manifest(dir.path / "corpus.csv",
                   "a,a.png,12,utk\n"
                   "b,b.png,13,morph\n");
    Corpus corpus = ingest_manifest(dir.path / "corpus.csv");
    write_corpus_json(corpus, dir.path / "corpus.json");
    Corpus back = read_corpus_json(dir.path / "corpus.json");
    REQUIRE(back.records.size() == 2);
    REQUIRE(back.records[1].true_age == 13);
    REQUIRE(back.records[1].digest == corpus.records[1].digest);

    const std::string first = corpus_to_json(corpus).dump(2);
    const std::string second = corpus_to_json(ingest_manifest(dir.path / "corpus.csv")).dump(2);
    REQUIRE(first == second);
}
