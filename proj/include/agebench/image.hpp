#pragma once

#include <cstddef>
#include <cstdio>

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "agebench/digest.hpp"

namespace agebench {

// Interleaved 8-bit RGB. Every decoded image is expanded to three channels;
// grayscale/palette/alpha inputs are converted on load.
struct Image {
    static constexpr int kChannels = 3;

    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, 0) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
    }

    bool empty() const { return pixels.empty(); }

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
    }
    std::uint8_t& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

    static Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        Image img(w, h);
        for (std::size_t i = 0; i < img.pixels.size(); i += kChannels) {
            img.pixels[i] = r;
            img.pixels[i + 1] = g;
            img.pixels[i + 2] = b;
        }
        return img;
    }

    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

inline bool looks_like_png(const std::uint8_t* data, std::size_t len) {
    static const std::uint8_t sig[4] = {0x89, 'P', 'N', 'G'};
    return len >= 4 && std::memcmp(data, sig, 4) == 0;
}

inline bool looks_like_jpeg(const std::uint8_t* data, std::size_t len) {
    return len >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF;
}

namespace detail {

inline Image decode_png(const std::uint8_t* data, std::size_t len) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, data, len))
        throw std::runtime_error(std::string("png decode: ") + png.message);
    png.format = PNG_FORMAT_RGB;
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw std::runtime_error("png decode: " + msg);
    }
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

inline Image decode_jpeg(const std::uint8_t* data, std::size_t len) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    Image img;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error(std::string("jpeg decode: ") + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(len));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    const std::size_t stride = static_cast<std::size_t>(img.width) * Image::kChannels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace detail

inline Image decode_image(const std::uint8_t* data, std::size_t len) {
    if (looks_like_png(data, len)) return detail::decode_png(data, len);
    if (looks_like_jpeg(data, len)) return detail::decode_jpeg(data, len);
    throw std::runtime_error("decode: not a PNG or JPEG stream");
}

inline Image decode_image(const std::vector<std::uint8_t>& bytes) {
    return decode_image(bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.empty()) throw std::invalid_argument("encode_png: empty image");
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
        throw std::runtime_error(std::string("png encode: ") + png.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
        throw std::runtime_error(std::string("png encode: ") + png.message);
    out.resize(size);
    return out;
}

inline Image load_image(const std::filesystem::path& path) {
    return decode_image(read_file_bytes(path));
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
    write_file_bytes(path, encode_png(img));
}

// Mean over every channel of every pixel, in [0, 255].
inline double mean_luminance(const Image& img) {
    if (img.empty()) throw std::invalid_argument("mean_luminance: empty image");
    double sum = 0.0;
    for (std::uint8_t v : img.pixels) sum += v;
    return sum / static_cast<double>(img.pixels.size());
}

// True when R = G = B at every pixel (grayscale stored as RGB).
inline bool channels_identical(const Image& img) {
    for (std::size_t i = 0; i < img.pixels.size(); i += Image::kChannels) {
        if (img.pixels[i] != img.pixels[i + 1] || img.pixels[i] != img.pixels[i + 2])
            return false;
    }
    return true;
}

}  // namespace agebench
