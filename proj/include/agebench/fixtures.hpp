#pragma once

#include <algorithm>
#include <cstdio>

#include "agebench/attack.hpp"
#include "agebench/editor.hpp"
#include "agebench/estimator.hpp"
#include "agebench/image.hpp"

namespace agebench {

// Deterministic offline stand-ins for the editor and estimator. Each attack
// brightens one quadrant by a fixed amount, and the estimator maps mean
// luminance to age, so whole-pipeline results have closed forms. Makeup's +5
// sits below the default tau and wrinkles' +15 sits exactly on it, so neither
// survives composition: the ownership floor is exercised from both sides.

inline int synthetic_attack_brightness(AttackType t) {
    switch (t) {
        case AttackType::Beard: return 40;
        case AttackType::GreyHair: return 25;
        case AttackType::Wrinkles: return 15;
        case AttackType::Makeup: return 5;
    }
    throw std::logic_error("synthetic_attack_brightness: bad enum");
}

// Quadrants: beard bottom-left, grey hair top-left, wrinkles top-right,
// makeup bottom-right. Splits at floor(w/2), floor(h/2).
inline Image synthetic_attack_image(const Image& src, AttackType attack) {
    Image out = src;
    const int mid_x = src.width / 2;
    const int mid_y = src.height / 2;
    const int delta = synthetic_attack_brightness(attack);
    const bool left = attack == AttackType::Beard || attack == AttackType::GreyHair;
    const bool top = attack == AttackType::GreyHair || attack == AttackType::Wrinkles;
    const int x0 = left ? 0 : mid_x;
    const int x1 = left ? mid_x : src.width;
    const int y0 = top ? 0 : mid_y;
    const int y1 = top ? mid_y : src.height;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < Image::kChannels; ++c)
                out.at(x, y, c) = static_cast<std::uint8_t>(
                    std::min(255, static_cast<int>(src.at(x, y, c)) + delta));
    return out;
}

// age = mean luminance / 5, so an all-white image reads 51 years.
inline double synthetic_age(const Image& img) { return mean_luminance(img) / 5.0; }

class SyntheticEditorClient : public EditorClient {
  public:
    std::string id() const override { return "synthetic"; }

    EditorResponse edit(const std::vector<std::uint8_t>& image_png,
                        const std::string& prompt) override {
        EditorResponse resp;
        Image img;
        try {
            img = decode_image(image_png);
        } catch (const std::exception& e) {
            resp.kind = EditorResponse::Kind::Refused;
            resp.reason = e.what();
            return resp;
        }
        auto attack = attack_from_prompt(prompt);
        if (!attack) {
            resp.kind = EditorResponse::Kind::Refused;
            resp.reason = "unrecognized prompt";
            return resp;
        }
        resp.kind = EditorResponse::Kind::Edited;
        resp.image_bytes = encode_png(synthetic_attack_image(img, *attack));
        return resp;
    }

    static std::optional<AttackType> attack_from_prompt(const std::string& prompt) {
        for (AttackType t : kAllAttacks)
            if (prompt == render_prompt(t)) return t;
        return std::nullopt;
    }
};

class SyntheticEstimatorClient : public EstimatorClient {
  public:
    explicit SyntheticEstimatorClient(std::string id = "synthetic") : id_(std::move(id)) {}

    std::string id() const override { return id_; }

    EstimatorResponse predict(const std::vector<std::uint8_t>& image_bytes) override {
        EstimatorResponse resp;
        Image img;
        try {
            img = decode_image(image_bytes);
        } catch (const std::exception& e) {
            resp.kind = EstimatorResponse::Kind::Refused;
            resp.reason = e.what();
            return resp;
        }
        const double age = synthetic_age(img);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", age);
        resp.kind = EstimatorResponse::Kind::Answered;
        resp.text = buf;
        resp.direct_age = age;
        return resp;
    }

  private:
    std::string id_;
};

}  // namespace agebench
