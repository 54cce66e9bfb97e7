// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/image.hpp"

namespace splatkit {

inline constexpr std::uint16_t kPngUnlabeled = 65535;  // label-map sentinel

namespace detail {

template <typename T>
void write_png_impl(const std::string& path, const Image<T>& img, int bit_depth,
                    int color_type, int channels) {
    if (img.empty() || img.channels() != channels)
        throw ValidationError("PNG write: bad image shape for " + path);
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    for (int y = 0; y < img.height(); ++y)
        rows[static_cast<std::size_t>(y)] =
            reinterpret_cast<png_bytep>(const_cast<T*>(&img.at(0, y, 0)));
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ValidationError("PNG write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // host is little-endian
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

template <typename T>
Image<T> read_png_impl(const std::string& path, int want_depth, int want_color_type,
                       int channels) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw ValidationError("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    Image<T> img;
    std::vector<png_bytep> rows;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("PNG read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != want_depth || color != want_color_type) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("PNG has unexpected bit depth or color type: " + path);
    }
    if (depth == 16) png_set_swap(png);
    img = Image<T>(static_cast<int>(png_get_image_width(png, info)),
                   static_cast<int>(png_get_image_height(png, info)), channels);
    rows.resize(static_cast<std::size_t>(img.height()));
    for (int y = 0; y < img.height(); ++y)
        rows[static_cast<std::size_t>(y)] = reinterpret_cast<png_bytep>(&img.at(0, y, 0));
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

// Color/alpha export: values clamped to [0, 1] and quantized to 8 bits.
inline void write_png_rgb8(const std::string& path, const ImageF& img) {
    if (img.channels() != 3) throw ValidationError("write_png_rgb8 expects 3 channels");
    Image<std::uint8_t> q(img.width(), img.height(), 3);
    for (std::size_t i = 0; i < img.raw().size(); ++i)
        q.raw()[i] = detail::to_u8(img.raw()[i]);
    detail::write_png_impl(path, q, 8, PNG_COLOR_TYPE_RGB, 3);
}

inline ImageF read_png_rgb8(const std::string& path) {
    const auto q = detail::read_png_impl<std::uint8_t>(path, 8, PNG_COLOR_TYPE_RGB, 3);
    ImageF img(q.width(), q.height(), 3);
    for (std::size_t i = 0; i < q.raw().size(); ++i) img.raw()[i] = q.raw()[i] / 255.0;
    return img;
}

inline void write_png_gray8(const std::string& path, const ImageF& img) {
    if (img.channels() != 1) throw ValidationError("write_png_gray8 expects 1 channel");
    Image<std::uint8_t> q(img.width(), img.height(), 1);
    for (std::size_t i = 0; i < img.raw().size(); ++i)
        q.raw()[i] = detail::to_u8(img.raw()[i]);
    detail::write_png_impl(path, q, 8, PNG_COLOR_TYPE_GRAY, 1);
}

inline ImageF read_png_gray8(const std::string& path) {
    const auto q = detail::read_png_impl<std::uint8_t>(path, 8, PNG_COLOR_TYPE_GRAY, 1);
    ImageF img(q.width(), q.height(), 1);
    for (std::size_t i = 0; i < q.raw().size(); ++i) img.raw()[i] = q.raw()[i] / 255.0;
    return img;
}

inline void write_png_gray16(const std::string& path, const Image<std::uint16_t>& img) {
    detail::write_png_impl(path, img, 16, PNG_COLOR_TYPE_GRAY, 1);
}

inline Image<std::uint16_t> read_png_gray16(const std::string& path) {
    return detail::read_png_impl<std::uint16_t>(path, 16, PNG_COLOR_TYPE_GRAY, 1);
}

// Depth export: finite values are affinely mapped onto [0, 65534] and the
// range is recorded in a JSON sidecar; 65535 encodes +inf (background).
inline void write_depth_png16(const std::string& png_path, const std::string& json_path,
                              const ImageF& depth) {
    if (depth.channels() != 1) throw ValidationError("depth image must have 1 channel");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const double d : depth.raw()) {
        if (std::isfinite(d)) {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi <= lo) hi = lo + 1.0;

    Image<std::uint16_t> q(depth.width(), depth.height(), 1);
    for (std::size_t i = 0; i < depth.raw().size(); ++i) {
        const double d = depth.raw()[i];
        q.raw()[i] = std::isfinite(d)
                         ? static_cast<std::uint16_t>(
                               std::lround((d - lo) / (hi - lo) * 65534.0))
                         : std::uint16_t{65535};
    }
    write_png_gray16(png_path, q);

    const nlohmann::json meta = {{"kind", "depth16"},
                                 {"min_depth", lo},
                                 {"max_depth", hi},
                                 {"infinite_value", 65535}};
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot open for writing: " + json_path);
    out << meta.dump(2) << "\n";
}

inline ImageF read_depth_png16(const std::string& png_path, const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open: " + json_path);
    const nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.value("kind", "") != "depth16")
        throw ValidationError("not a depth16 sidecar: " + json_path);
    const double lo = meta.at("min_depth").get<double>();
    const double hi = meta.at("max_depth").get<double>();

    const auto q = read_png_gray16(png_path);
    ImageF depth(q.width(), q.height(), 1);
    for (std::size_t i = 0; i < q.raw().size(); ++i) {
        depth.raw()[i] = q.raw()[i] == 65535
                             ? std::numeric_limits<double>::infinity()
                             : lo + q.raw()[i] / 65534.0 * (hi - lo);
    }
    return depth;
}

// Label maps as 16-bit PNG: pixel value = label, 65535 = unlabeled.
inline void write_label_png16(const std::string& path, const LabelImage& labels) {
    Image<std::uint16_t> q(labels.width(), labels.height(), 1);
    for (std::size_t i = 0; i < labels.raw().size(); ++i) {
        const std::int32_t v = labels.raw()[i];
        if (v > 65534) throw ValidationError("label too large for 16-bit PNG export");
        q.raw()[i] = v < 0 ? kPngUnlabeled : static_cast<std::uint16_t>(v);
    }
    write_png_gray16(path, q);
}

inline LabelImage read_label_png16(const std::string& path) {
    const auto q = read_png_gray16(path);
    LabelImage labels(q.width(), q.height(), 1);
    for (std::size_t i = 0; i < q.raw().size(); ++i)
        labels.raw()[i] = q.raw()[i] == kPngUnlabeled ? kNoInstance
                                                      : static_cast<std::int32_t>(q.raw()[i]);
    return labels;
}

}  // namespace splatkit
