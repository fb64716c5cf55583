#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "agebench/image.hpp"

namespace agebench {

inline int round_half_up(double x) {
    return static_cast<int>(std::floor(x + 0.5));
}

// Box-filter downscale: each output pixel is the area-weighted mean of the
// source region it covers. Accumulates in double, rounds half-up to 8 bit.
inline Image resize_area(const Image& src, int target_w, int target_h) {
    if (target_w <= 0 || target_h <= 0)
        throw std::invalid_argument("resize_area: target dimensions must be positive");
    Image dst(target_w, target_h);
    const double sx = static_cast<double>(src.width) / target_w;
    const double sy = static_cast<double>(src.height) / target_h;
    for (int oy = 0; oy < target_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int ry0 = static_cast<int>(std::floor(y0));
        const int ry1 = std::min(src.height, static_cast<int>(std::ceil(y1)));
        for (int ox = 0; ox < target_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int rx0 = static_cast<int>(std::floor(x0));
            const int rx1 = std::min(src.width, static_cast<int>(std::ceil(x1)));
            double acc[Image::kChannels] = {0, 0, 0};
            double area = 0.0;
            for (int y = ry0; y < ry1; ++y) {
                const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                for (int x = rx0; x < rx1; ++x) {
                    const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    const double w = wx * wy;
                    for (int c = 0; c < Image::kChannels; ++c)
                        acc[c] += w * src.at(x, y, c);
                    area += w;
                }
            }
            for (int c = 0; c < Image::kChannels; ++c)
                dst.at(ox, oy, c) = static_cast<std::uint8_t>(
                    std::clamp(round_half_up(acc[c] / area), 0, 255));
        }
    }
    return dst;
}

// Pixel-center-aligned bilinear interpolation, rounded half-up.
inline Image resize_bilinear(const Image& src, int target_w, int target_h) {
    if (target_w <= 0 || target_h <= 0)
        throw std::invalid_argument("resize_bilinear: target dimensions must be positive");
    Image dst(target_w, target_h);
    const double sx = static_cast<double>(src.width) / target_w;
    const double sy = static_cast<double>(src.height) / target_h;
    for (int oy = 0; oy < target_h; ++oy) {
        const double gy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(std::floor(gy));
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fy = gy - y0;
        for (int ox = 0; ox < target_w; ++ox) {
            const double gx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
            const int x0 = static_cast<int>(std::floor(gx));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double fx = gx - x0;
            for (int c = 0; c < Image::kChannels; ++c) {
                const double top = src.at(x0, y0, c) * (1 - fx) + src.at(x1, y0, c) * fx;
                const double bot = src.at(x0, y1, c) * (1 - fx) + src.at(x1, y1, c) * fx;
                dst.at(ox, oy, c) = static_cast<std::uint8_t>(
                    std::clamp(round_half_up(top * (1 - fy) + bot * fy), 0, 255));
            }
        }
    }
    return dst;
}

// Downscaling uses area averaging. A target larger than the source falls back
// to bilinear and warns: the normal pipeline never upscales (editor output is
// larger than any eligible original).
inline Image normalize_resolution(const Image& edited, int target_w, int target_h) {
    if (edited.empty()) throw std::invalid_argument("normalize_resolution: empty image");
    if (target_w == edited.width && target_h == edited.height) return edited;
    if (target_w > edited.width || target_h > edited.height) {
        std::cerr << "warning: normalize_resolution upscaling " << edited.width << "x"
                  << edited.height << " -> " << target_w << "x" << target_h << "\n";
        return resize_bilinear(edited, target_w, target_h);
    }
    return resize_area(edited, target_w, target_h);
}

}  // namespace agebench
