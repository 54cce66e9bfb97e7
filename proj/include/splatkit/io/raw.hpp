// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/image.hpp"

namespace splatkit {

// Raw little-endian tensors: a flat binary blob next to a JSON header giving
// dtype and row-major shape. Used for feature planes, label grids, and voxel
// volumes.

namespace detail {

inline std::size_t shape_volume(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (const int d : shape) {
        if (d <= 0) throw ValidationError("raw tensor shape must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline void write_raw_header(const std::string& json_path, const std::string& dtype,
                             const std::vector<int>& shape) {
    const nlohmann::json meta = {{"dtype", dtype}, {"shape", shape}, {"layout", "row-major"}};
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot open for writing: " + json_path);
    out << meta.dump(2) << "\n";
}

inline std::vector<int> read_raw_header(const std::string& json_path,
                                        const std::string& want_dtype) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open: " + json_path);
    const nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.at("dtype").get<std::string>() != want_dtype)
        throw ValidationError("raw tensor dtype mismatch in " + json_path);
    return meta.at("shape").get<std::vector<int>>();
}

template <typename T>
void write_blob(const std::string& path, const std::vector<T>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!out) throw ValidationError("write failed: " + path);
}

template <typename T>
std::vector<T> read_blob(const std::string& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ValidationError("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T))
        throw ValidationError("raw tensor size does not match its header: " + path);
    in.seekg(0);
    std::vector<T> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw ValidationError("read failed: " + path);
    return values;
}

}  // namespace detail

inline void write_raw_f32(const std::string& data_path, const std::string& json_path,
                          const std::vector<int>& shape, const std::vector<double>& values) {
    if (values.size() != detail::shape_volume(shape))
        throw ValidationError("raw tensor value count does not match shape");
    std::vector<float> f(values.begin(), values.end());
    detail::write_blob(data_path, f);
    detail::write_raw_header(json_path, "float32", shape);
}

inline std::pair<std::vector<int>, std::vector<double>> read_raw_f32(
    const std::string& data_path, const std::string& json_path) {
    const std::vector<int> shape = detail::read_raw_header(json_path, "float32");
    const auto f = detail::read_blob<float>(data_path, detail::shape_volume(shape));
    return {shape, std::vector<double>(f.begin(), f.end())};
}

inline void write_raw_u8(const std::string& data_path, const std::string& json_path,
                         const std::vector<int>& shape, const std::vector<std::uint8_t>& values) {
    if (values.size() != detail::shape_volume(shape))
        throw ValidationError("raw tensor value count does not match shape");
    detail::write_blob(data_path, values);
    detail::write_raw_header(json_path, "uint8", shape);
}

inline std::pair<std::vector<int>, std::vector<std::uint8_t>> read_raw_u8(
    const std::string& data_path, const std::string& json_path) {
    const std::vector<int> shape = detail::read_raw_header(json_path, "uint8");
    return {shape, detail::read_blob<std::uint8_t>(data_path, detail::shape_volume(shape))};
}

inline void write_raw_i32(const std::string& data_path, const std::string& json_path,
                          const std::vector<int>& shape,
                          const std::vector<std::int32_t>& values) {
    if (values.size() != detail::shape_volume(shape))
        throw ValidationError("raw tensor value count does not match shape");
    detail::write_blob(data_path, values);
    detail::write_raw_header(json_path, "int32", shape);
}

inline std::pair<std::vector<int>, std::vector<std::int32_t>> read_raw_i32(
    const std::string& data_path, const std::string& json_path) {
    const std::vector<int> shape = detail::read_raw_header(json_path, "int32");
    return {shape, detail::read_blob<std::int32_t>(data_path, detail::shape_volume(shape))};
}

// Image wrappers: shape is [height, width, channels].
inline void write_raw_image(const std::string& data_path, const std::string& json_path,
                            const ImageF& img) {
    if (img.empty()) throw ValidationError("cannot write an empty image");
    write_raw_f32(data_path, json_path, {img.height(), img.width(), img.channels()}, img.raw());
}

inline ImageF read_raw_image(const std::string& data_path, const std::string& json_path) {
    const auto [shape, values] = read_raw_f32(data_path, json_path);
    if (shape.size() != 3) throw ValidationError("raw image header must have 3 dims");
    ImageF img(shape[1], shape[0], shape[2]);
    img.raw() = values;
    return img;
}

inline void write_raw_labels(const std::string& data_path, const std::string& json_path,
                             const LabelImage& labels) {
    if (labels.empty()) throw ValidationError("cannot write an empty label map");
    write_raw_i32(data_path, json_path, {labels.height(), labels.width(), 1}, labels.raw());
}

inline LabelImage read_raw_labels(const std::string& data_path, const std::string& json_path) {
    const auto [shape, values] = read_raw_i32(data_path, json_path);
    if (shape.size() != 3 || shape[2] != 1)
        throw ValidationError("raw label header must be [height, width, 1]");
    LabelImage labels(shape[1], shape[0], 1);
    labels.raw() = values;
    return labels;
}

}  // namespace splatkit
