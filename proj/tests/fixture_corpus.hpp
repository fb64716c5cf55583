#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "agebench/config.hpp"
#include "agebench/image.hpp"

// Writes a synthetic corpus of solid near-gray images. Luminance alternates
// 80/40 (multiples of 5 keep every fixture prediction a quarter-integer) and
// true ages cycle 10..21. Channels are (L-1, L, L+1) so the grayscale filter
// does not fire while the mean stays exactly L.
inline std::filesystem::path write_fixture_corpus(const std::filesystem::path& dir,
                                                  int count = 50) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream manifest(dir / "corpus.csv");
    manifest << "id,path,true_age,source_dataset\n";
    for (int i = 0; i < count; ++i) {
        const int lum = i % 2 == 0 ? 80 : 40;
        const int age = 10 + (i % 12);
        char name[32];
        std::snprintf(name, sizeof name, "img%03d", i);
        agebench::save_png(agebench::Image::solid(128, 128, static_cast<std::uint8_t>(lum - 1),
                                                  static_cast<std::uint8_t>(lum),
                                                  static_cast<std::uint8_t>(lum + 1)),
                           dir / "images" / (std::string(name) + ".png"));
        manifest << name << ",images/" << name << ".png," << age << ",fixture\n";
    }
    return dir / "corpus.csv";
}

inline agebench::RunConfig fixture_run_config(const std::filesystem::path& manifest) {
    agebench::RunConfig cfg;
    cfg.run_id = "fixture";
    cfg.corpus_manifest = manifest;
    cfg.retry_initial_ms = 0;
    agebench::ModelDescriptor m;
    m.id = "synth";
    m.kind = agebench::ModelDescriptor::Kind::Synthetic;
    cfg.models.push_back(std::move(m));
    return cfg;
}
