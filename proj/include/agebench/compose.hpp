#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "agebench/attack.hpp"
#include "agebench/image.hpp"

namespace agebench {

// Channel-delta threshold separating meaningful edits from noise. A pixel is
// claimable only when some channel delta magnitude strictly exceeds the value.
struct Tau {
    int value = 15;
    Tau() = default;
    explicit Tau(int v) : value(v) {
        if (v <= 0) throw std::invalid_argument("tau must be positive");
    }
};

// Signed per-pixel, per-channel difference attacked - original, in [-255, 255].
struct PixelDelta {
    int width = 0;
    int height = 0;
    std::vector<std::int16_t> values;

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * Image::kChannels + c;
    }
    std::int16_t at(int x, int y, int c) const { return values[index(x, y, c)]; }
};

inline PixelDelta compute_delta(const Image& original, const Image& attacked) {
    if (original.width != attacked.width || original.height != attacked.height)
        throw std::invalid_argument(
            "compute_delta: dimension mismatch, original " + std::to_string(original.width) +
            "x" + std::to_string(original.height) + " vs attacked " +
            std::to_string(attacked.width) + "x" + std::to_string(attacked.height));
    PixelDelta d;
    d.width = original.width;
    d.height = original.height;
    d.values.resize(original.pixels.size());
    for (std::size_t i = 0; i < original.pixels.size(); ++i)
        d.values[i] = static_cast<std::int16_t>(static_cast<int>(attacked.pixels[i]) -
                                                static_cast<int>(original.pixels[i]));
    return d;
}

// L-inf across channels: the largest absolute channel delta at the pixel.
inline int delta_magnitude(const PixelDelta& delta, int x, int y) {
    int mag = 0;
    for (int c = 0; c < Image::kChannels; ++c)
        mag = std::max(mag, std::abs(static_cast<int>(delta.at(x, y, c))));
    return mag;
}

using AttackDeltas = std::map<AttackType, PixelDelta>;

// Per-pixel owner: the highest-priority member attack whose delta magnitude
// strictly exceeds tau, or absent when none qualifies.
struct OwnershipMap {
    static constexpr std::int8_t kNone = -1;
    int width = 0;
    int height = 0;
    std::vector<std::int8_t> owner;  // priority rank or kNone

    std::optional<AttackType> owner_at(int x, int y) const {
        std::int8_t v = owner[static_cast<std::size_t>(y) * width + x];
        if (v == kNone) return std::nullopt;
        return static_cast<AttackType>(v);
    }
};

inline OwnershipMap build_ownership(const AttackDeltas& deltas, const AttackSet& set, Tau tau) {
    const std::vector<AttackType> members = set.members();
    int width = -1, height = -1;
    for (AttackType t : members) {
        auto it = deltas.find(t);
        if (it == deltas.end())
            throw std::invalid_argument(std::string("build_ownership: missing delta for ") +
                                        attack_token(t));
        if (width < 0) {
            width = it->second.width;
            height = it->second.height;
        } else if (it->second.width != width || it->second.height != height) {
            throw std::invalid_argument("build_ownership: delta dimensions differ");
        }
    }
    OwnershipMap map;
    map.width = width;
    map.height = height;
    map.owner.assign(static_cast<std::size_t>(width) * height, OwnershipMap::kNone);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (AttackType t : members) {  // priority order
                if (delta_magnitude(deltas.at(t), x, y) > tau.value) {
                    map.owner[static_cast<std::size_t>(y) * width + x] =
                        static_cast<std::int8_t>(priority_rank(t));
                    break;
                }
            }
        }
    }
    return map;
}

// Priority-weighted pixel-delta blend: owned pixels take the owning attack's
// delta (reconstructing that attacked image bit-exactly there), unowned pixels
// keep the original. No clamping is needed because each delta was derived from
// a real 8-bit image.
inline Image compose_attacks(const Image& original, const AttackDeltas& deltas,
                             const AttackSet& set, Tau tau) {
    OwnershipMap owners = build_ownership(deltas, set, tau);
    if (owners.width != original.width || owners.height != original.height)
        throw std::invalid_argument("compose_attacks: deltas do not match original dimensions");
    Image out = original;
    for (int y = 0; y < original.height; ++y) {
        for (int x = 0; x < original.width; ++x) {
            auto owner = owners.owner_at(x, y);
            if (!owner) continue;
            const PixelDelta& d = deltas.at(*owner);
            for (int c = 0; c < Image::kChannels; ++c)
                out.at(x, y, c) = static_cast<std::uint8_t>(
                    static_cast<int>(original.at(x, y, c)) + d.at(x, y, c));
        }
    }
    return out;
}

}  // namespace agebench
