// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splatkit/common.hpp"

namespace splatkit {

// Dense H x W x C raster, row-major, channel-interleaved.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width < 0 || height < 0 || channels <= 0) {
            throw ValidationError("Image: non-positive dimensions");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    bool same_shape(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

using ImageF = Image<double>;
using Mask = Image<std::uint8_t>;       // single channel, 0/1
using LabelImage = Image<std::int32_t>; // single channel, kNoInstance = unlabeled

inline std::size_t mask_area(const Mask& m) {
    std::size_t n = 0;
    for (const auto v : m.raw()) n += (v != 0);
    return n;
}

inline Mask mask_and(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ValidationError("mask_and: shape mismatch");
    Mask out(a.width(), a.height(), 1);
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        out.raw()[i] = (a.raw()[i] != 0 && b.raw()[i] != 0) ? 1 : 0;
    }
    return out;
}

// a AND NOT b
inline Mask mask_minus(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ValidationError("mask_minus: shape mismatch");
    Mask out(a.width(), a.height(), 1);
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        out.raw()[i] = (a.raw()[i] != 0 && b.raw()[i] == 0) ? 1 : 0;
    }
    return out;
}

inline bool mask_subset(const Mask& inner, const Mask& outer) {
    if (!inner.same_shape(outer)) throw ValidationError("mask_subset: shape mismatch");
    for (std::size_t i = 0; i < inner.raw().size(); ++i) {
        if (inner.raw()[i] != 0 && outer.raw()[i] == 0) return false;
    }
    return true;
}

// Bilinear resize with pixel-center mapping; resizing to the source size is an
// exact identity.
inline ImageF resize_bilinear(const ImageF& src, int out_w, int out_h) {
    if (src.empty()) throw ValidationError("resize_bilinear: empty image");
    if (out_w < 1 || out_h < 1) throw ValidationError("resize_bilinear: bad target size");
    ImageF out(out_w, out_h, src.channels());
    const double sx = static_cast<double>(src.width()) / out_w;
    const double sy = static_cast<double>(src.height()) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.channels(); ++c) {
                const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                const double bot = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                out.at(x, y, c) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

}  // namespace splatkit
