#include "agebench/compose.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <map>
#include <random>

using namespace agebench;

namespace {

// Independent oracle: at each pixel, scan member attacks in priority order
// and take the first whose raw image differs from the original by more than
// tau in any channel; otherwise keep the original pixel. Works directly on
// the images, bypassing PixelDelta/OwnershipMap.
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

Image random_image(std::mt19937& rng, int w, int h) {
    Image img(w, h);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

}  // namespace

TEST_CASE("compute_delta is componentwise subtraction") {
    Image orig = Image::solid(1, 1, 100, 100, 100);
    Image atk = Image::solid(1, 1, 130, 90, 100);
    PixelDelta d = compute_delta(orig, atk);
    REQUIRE(d.at(0, 0, 0) == 30);
    REQUIRE(d.at(0, 0, 1) == -10);
    REQUIRE(d.at(0, 0, 2) == 0);

    Image same = Image::solid(2, 2, 7, 8, 9);
    PixelDelta zero = compute_delta(same, same);
    for (auto v : zero.values) REQUIRE(v == 0);

    PixelDelta extreme = compute_delta(Image::solid(1, 1, 255, 255, 255), Image::solid(1, 1, 0, 0, 0));
    REQUIRE(extreme.at(0, 0, 0) == -255);
}

TEST_CASE("compute_delta rejects mismatched shapes naming both") {
    Image a(4, 4), b(4, 5);
    REQUIRE_THROWS_WITH(compute_delta(a, b),
                        Catch::Matchers::ContainsSubstring("4x4") &&
                            Catch::Matchers::ContainsSubstring("4x5"));
}

TEST_CASE("delta_magnitude is the max absolute channel delta") {
    PixelDelta d;
    d.width = 1;
    d.height = 1;
    d.values = {30, -10, 0};
    REQUIRE(delta_magnitude(d, 0, 0) == 30);
    d.values = {0, 0, 0};
    REQUIRE(delta_magnitude(d, 0, 0) == 0);
    d.values = {-16, 0, 0};
    REQUIRE(delta_magnitude(d, 0, 0) == 16);
    REQUIRE(delta_magnitude(d, 0, 0) > 15);  // claimable at default tau
}

TEST_CASE("ownership picks the highest-priority claimant above tau") {
    Image orig = Image::solid(1, 1, 100, 100, 100);
    AttackDeltas deltas;
    deltas[AttackType::Beard] = compute_delta(orig, Image::solid(1, 1, 130, 100, 100));
    deltas[AttackType::GreyHair] = compute_delta(orig, Image::solid(1, 1, 100, 120, 100));

    auto both = AttackSet::of({AttackType::Beard, AttackType::GreyHair});
    OwnershipMap owners = build_ownership(deltas, both, Tau(15));
    REQUIRE(owners.owner_at(0, 0) == AttackType::Beard);

    // composing applies only the owner's delta
    Image out = compose_attacks(orig, deltas, both, Tau(15));
    REQUIRE(out.at(0, 0, 0) == 130);
    REQUIRE(out.at(0, 0, 1) == 100);
    REQUIRE(out.at(0, 0, 2) == 100);
}

TEST_CASE("sole sub-priority claimant owns the pixel") {
    Image orig = Image::solid(1, 1, 100, 100, 100);
    AttackDeltas deltas;
    deltas[AttackType::Makeup] = compute_delta(orig, Image::solid(1, 1, 116, 100, 100));
    OwnershipMap owners =
        build_ownership(deltas, AttackSet::of({AttackType::Makeup}), Tau(15));
    REQUIRE(owners.owner_at(0, 0) == AttackType::Makeup);
}

TEST_CASE("deltas at or below tau never claim") {
    Image orig = Image::solid(1, 1, 100, 100, 100);
    AttackDeltas deltas;
    deltas[AttackType::Beard] = compute_delta(orig, Image::solid(1, 1, 115, 100, 100));
    deltas[AttackType::GreyHair] = compute_delta(orig, Image::solid(1, 1, 100, 110, 100));
    auto set = AttackSet::of({AttackType::Beard, AttackType::GreyHair});
    OwnershipMap owners = build_ownership(deltas, set, Tau(15));
    REQUIRE_FALSE(owners.owner_at(0, 0).has_value());
    REQUIRE(compose_attacks(orig, deltas, set, Tau(15)) == orig);
}

TEST_CASE("all-zero deltas compose to the original") {
    std::mt19937 rng(5);
    Image orig = random_image(rng, 6, 6);
    AttackDeltas deltas;
    for (AttackType t : kAllAttacks) deltas[t] = compute_delta(orig, orig);
    REQUIRE(compose_attacks(orig, deltas, AttackSet(0xF), Tau(15)) == orig);
}

TEST_CASE("build_ownership requires every member delta") {
    AttackDeltas deltas;
    REQUIRE_THROWS_AS(build_ownership(deltas, AttackSet::of({AttackType::Beard}), Tau(15)),
                      std::invalid_argument);
}

TEST_CASE("compose matches the per-pixel priority-scan oracle on random inputs") {
    std::mt19937 rng(20260811);
    for (int iter = 0; iter < 300; ++iter) {
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
            Image got = compose_attacks(orig, deltas, set, Tau(tau));
            Image expected = oracle_compose(orig, attacked, set, tau);
            REQUIRE(got == expected);
        }
    }
}

TEST_CASE("owner substitution: owned pixels equal the attacked image, others the original") {
    std::mt19937 rng(99);
    Image orig = random_image(rng, 12, 12);
    std::map<AttackType, Image> attacked;
    AttackDeltas deltas;
    for (AttackType t : kAllAttacks) {
        attacked[t] = random_image(rng, 12, 12);
        deltas[t] = compute_delta(orig, attacked[t]);
    }
    const AttackSet set(0xF);
    const Tau tau(15);
    OwnershipMap owners = build_ownership(deltas, set, tau);
    Image out = compose_attacks(orig, deltas, set, tau);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            auto owner = owners.owner_at(x, y);
            const Image& source = owner ? attacked.at(*owner) : orig;
            for (int c = 0; c < 3; ++c) REQUIRE(out.at(x, y, c) == source.at(x, y, c));
        }
    }
}

TEST_CASE("monotone coverage: enlarging the set never releases owned pixels") {
    std::mt19937 rng(41);
    for (int iter = 0; iter < 50; ++iter) {
        const int w = 1 + static_cast<int>(rng() % 12);
        const int h = 1 + static_cast<int>(rng() % 12);
        Image orig = random_image(rng, w, h);
        AttackDeltas deltas;
        for (AttackType t : kAllAttacks) deltas[t] = compute_delta(orig, random_image(rng, w, h));
        const unsigned small_mask = 1 + rng() % 15;
        unsigned big_mask = small_mask | (1 + rng() % 15);
        OwnershipMap small = build_ownership(deltas, AttackSet(small_mask), Tau(15));
        OwnershipMap big = build_ownership(deltas, AttackSet(big_mask), Tau(15));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (small.owner_at(x, y).has_value()) REQUIRE(big.owner_at(x, y).has_value());
    }
}

TEST_CASE("disjoint claim regions compose independently of membership") {
    // beard touches the left column, makeup the right column; supports disjoint
    Image orig = Image::solid(2, 1, 100, 100, 100);
    Image beard = orig, makeup = orig;
    for (int c = 0; c < 3; ++c) {
        beard.at(0, 0, c) = 140;
        makeup.at(1, 0, c) = 60;
    }
    AttackDeltas deltas;
    deltas[AttackType::Beard] = compute_delta(orig, beard);
    deltas[AttackType::Makeup] = compute_delta(orig, makeup);
    Image out =
        compose_attacks(orig, deltas, AttackSet::of({AttackType::Beard, AttackType::Makeup}),
                        Tau(15));
    REQUIRE(out.at(0, 0, 0) == 140);
    REQUIRE(out.at(1, 0, 0) == 60);
}
