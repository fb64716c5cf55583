#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace agebench {

// Declared in priority order: when attacks compete for a pixel, the lowest
// rank wins (beard > grey hair > wrinkles > makeup).
enum class AttackType { Beard = 0, GreyHair = 1, Wrinkles = 2, Makeup = 3 };

inline constexpr std::array<AttackType, 4> kAllAttacks = {
    AttackType::Beard, AttackType::GreyHair, AttackType::Wrinkles, AttackType::Makeup};

inline int priority_rank(AttackType t) { return static_cast<int>(t); }

inline const char* attack_token(AttackType t) {
    switch (t) {
        case AttackType::Beard: return "beard";
        case AttackType::GreyHair: return "grey";
        case AttackType::Wrinkles: return "wrinkles";
        case AttackType::Makeup: return "makeup";
    }
    throw std::logic_error("attack_token: bad enum");
}

inline const char* attack_display_name(AttackType t) {
    switch (t) {
        case AttackType::Beard: return "Beard";
        case AttackType::GreyHair: return "Grey Hair";
        case AttackType::Wrinkles: return "Wrinkles";
        case AttackType::Makeup: return "Makeup";
    }
    throw std::logic_error("attack_display_name: bad enum");
}

inline std::optional<AttackType> parse_attack_token(const std::string& s) {
    for (AttackType t : kAllAttacks)
        if (s == attack_token(t)) return t;
    return std::nullopt;
}

// Nonempty subset of the four attack types. Canonical label joins member
// tokens in priority order with '+'.
class AttackSet {
  public:
    explicit AttackSet(unsigned mask) : mask_(mask & 0xF) {
        if (mask_ == 0) throw std::invalid_argument("AttackSet must be nonempty");
    }

    static AttackSet of(std::initializer_list<AttackType> members) {
        unsigned mask = 0;
        for (AttackType t : members) mask |= 1u << priority_rank(t);
        return AttackSet(mask);
    }

    static std::optional<AttackSet> parse(const std::string& label) {
        unsigned mask = 0;
        std::size_t pos = 0;
        while (pos <= label.size()) {
            std::size_t next = label.find('+', pos);
            std::string token = label.substr(pos, next == std::string::npos ? next : next - pos);
            auto t = parse_attack_token(token);
            if (!t) return std::nullopt;
            mask |= 1u << priority_rank(*t);
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (mask == 0) return std::nullopt;
        return AttackSet(mask);
    }

    bool contains(AttackType t) const { return mask_ & (1u << priority_rank(t)); }
    int size() const { return __builtin_popcount(mask_); }
    unsigned mask() const { return mask_; }

    std::vector<AttackType> members() const {
        std::vector<AttackType> out;
        for (AttackType t : kAllAttacks)
            if (contains(t)) out.push_back(t);
        return out;
    }

    std::string label() const {
        std::string out;
        for (AttackType t : members()) {
            if (!out.empty()) out += '+';
            out += attack_token(t);
        }
        return out;
    }

    bool operator==(const AttackSet& o) const { return mask_ == o.mask_; }
    bool operator<(const AttackSet& o) const { return mask_ < o.mask_; }

  private:
    unsigned mask_;
};

// All 15 nonempty subsets: 4 singletons, 6 pairs, 4 triples, 1 quad, ordered
// by size then priority-lexicographically over the member sequence.
inline std::vector<AttackSet> enumerate_subsets() {
    std::vector<AttackSet> out;
    for (int size = 1; size <= 4; ++size) {
        std::vector<int> idx(size);
        for (int i = 0; i < size; ++i) idx[i] = i;
        while (true) {
            unsigned mask = 0;
            for (int i : idx) mask |= 1u << i;
            out.push_back(AttackSet(mask));
            int i = size - 1;
            while (i >= 0 && idx[i] == 4 - size + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return out;
}

}  // namespace agebench
