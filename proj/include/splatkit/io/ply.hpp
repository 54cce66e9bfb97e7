// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "splatkit/gaussian.hpp"

namespace splatkit {

static_assert(std::endian::native == std::endian::little,
              "PLY IO assumes a little-endian host");

// On-disk convention shared with common gaussian-splat tooling: opacity is
// stored as a logit, scales as logs, and colors as zeroth-order spherical
// harmonic coefficients. Extension properties carry the per-gaussian feature
// vector and instance label.
inline constexpr double kShC0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))

namespace detail {

inline float opacity_to_logit(double p) {
    const double c = std::clamp(p, 1e-7, 1.0 - 1e-7);
    return static_cast<float>(std::log(c / (1.0 - c)));
}

inline double logit_to_opacity(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct PlyProperty {
    std::string name;
    int size = 0;         // bytes
    bool is_float = false;
    bool is_signed = false;
    std::size_t offset = 0;
};

inline int ply_type_size(const std::string& t, bool& is_float, bool& is_signed) {
    is_float = (t == "float" || t == "float32" || t == "double" || t == "float64");
    is_signed = (t == "char" || t == "int8" || t == "short" || t == "int16" || t == "int" ||
                 t == "int32");
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

inline double read_ply_value(const char* p, const PlyProperty& prop) {
    if (prop.is_float) {
        if (prop.size == 4) {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        }
        double v;
        std::memcpy(&v, p, 8);
        return v;
    }
    std::int64_t out = 0;
    if (prop.is_signed) {
        if (prop.size == 1) { std::int8_t v; std::memcpy(&v, p, 1); out = v; }
        else if (prop.size == 2) { std::int16_t v; std::memcpy(&v, p, 2); out = v; }
        else { std::int32_t v; std::memcpy(&v, p, 4); out = v; }
    } else {
        if (prop.size == 1) { std::uint8_t v; std::memcpy(&v, p, 1); out = v; }
        else if (prop.size == 2) { std::uint16_t v; std::memcpy(&v, p, 2); out = v; }
        else { std::uint32_t v; std::memcpy(&v, p, 4); out = v; }
    }
    return static_cast<double>(out);
}

}  // namespace detail

inline void write_ply(const GaussianScene& scene, const std::string& path) {
    scene.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n";
    header << "comment splatkit background " << scene.background.x() << " "
           << scene.background.y() << " " << scene.background.z() << "\n";
    header << "element vertex " << scene.size() << "\n";
    for (const char* n : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                          "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"})
        header << "property float " << n << "\n";
    for (int k = 0; k < kFeatureDim; ++k) header << "property float feature_" << k << "\n";
    header << "property int instance_id\nend_header\n";
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));

    for (const Gaussian& g : scene.gaussians) {
        float row[14 + kFeatureDim];
        int i = 0;
        for (int k = 0; k < 3; ++k) row[i++] = static_cast<float>(g.position[k]);
        for (int k = 0; k < 3; ++k)
            row[i++] = static_cast<float>((g.color[k] - 0.5) / kShC0);
        row[i++] = detail::opacity_to_logit(g.opacity);
        for (int k = 0; k < 3; ++k) row[i++] = static_cast<float>(std::log(g.scale[k]));
        row[i++] = static_cast<float>(g.rotation.w());
        row[i++] = static_cast<float>(g.rotation.x());
        row[i++] = static_cast<float>(g.rotation.y());
        row[i++] = static_cast<float>(g.rotation.z());
        for (int k = 0; k < kFeatureDim; ++k) row[i++] = static_cast<float>(g.feature[k]);
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
        const std::int32_t inst = g.instance;
        out.write(reinterpret_cast<const char*>(&inst), sizeof(inst));
    }
    if (!out) throw ValidationError("write failed: " + path);
}

// Binary little-endian reader; property order is immaterial and unknown
// properties are skipped, so files from other splat tools load as long as the
// standard fields are present.
inline GaussianScene read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);

    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw ValidationError("not a PLY file: " + path);

    GaussianScene scene;
    std::vector<detail::PlyProperty> props;
    std::size_t stride = 0;
    long long count = -1;
    bool in_vertex = false;
    bool format_ok = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "end_header") break;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw ValidationError("unsupported PLY format (want binary_little_endian): " + fmt);
            format_ok = true;
        } else if (tok == "comment") {
            std::string word;
            ls >> word;
            if (word == "splatkit") {
                ls >> word;
                if (word == "background")
                    ls >> scene.background.x() >> scene.background.y() >> scene.background.z();
            }
        } else if (tok == "element") {
            std::string name;
            long long n = 0;
            ls >> name >> n;
            in_vertex = (name == "vertex");
            if (in_vertex) count = n;
        } else if (tok == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            if (type == "list")
                throw ValidationError("list properties are not supported in vertex element");
            detail::PlyProperty p;
            p.name = name;
            p.size = detail::ply_type_size(type, p.is_float, p.is_signed);
            if (p.size == 0) throw ValidationError("unknown PLY property type: " + type);
            p.offset = stride;
            stride += static_cast<std::size_t>(p.size);
            props.push_back(p);
        }
    }
    if (!format_ok || count < 0)
        throw ValidationError("malformed PLY header (missing format or vertex element): " + path);

    const auto find = [&](const std::string& name) -> const detail::PlyProperty* {
        for (const auto& p : props)
            if (p.name == name) return &p;
        return nullptr;
    };
    const auto require = [&](const std::string& name) -> const detail::PlyProperty& {
        const auto* p = find(name);
        if (!p) throw ValidationError("PLY missing required property: " + name);
        return *p;
    };

    const detail::PlyProperty* pos[3] = {&require("x"), &require("y"), &require("z")};
    const detail::PlyProperty* dc[3] = {&require("f_dc_0"), &require("f_dc_1"),
                                        &require("f_dc_2")};
    const detail::PlyProperty& opacity = require("opacity");
    const detail::PlyProperty* scale[3] = {&require("scale_0"), &require("scale_1"),
                                           &require("scale_2")};
    const detail::PlyProperty* rot[4] = {&require("rot_0"), &require("rot_1"), &require("rot_2"),
                                         &require("rot_3")};
    const detail::PlyProperty* features[kFeatureDim] = {};
    bool has_features = true;
    for (int k = 0; k < kFeatureDim; ++k) {
        features[k] = find("feature_" + std::to_string(k));
        has_features = has_features && features[k] != nullptr;
    }
    const detail::PlyProperty* instance = find("instance_id");

    scene.has_features = has_features;
    scene.gaussians.resize(static_cast<std::size_t>(count));
    std::vector<char> row(stride);
    for (long long i = 0; i < count; ++i) {
        in.read(row.data(), static_cast<std::streamsize>(stride));
        if (!in) throw ValidationError("truncated PLY payload: " + path);
        Gaussian& g = scene.gaussians[static_cast<std::size_t>(i)];
        for (int k = 0; k < 3; ++k) {
            g.position[k] = detail::read_ply_value(row.data() + pos[k]->offset, *pos[k]);
            g.color[k] = std::clamp(
                detail::read_ply_value(row.data() + dc[k]->offset, *dc[k]) * kShC0 + 0.5, 0.0,
                1.0);
            g.scale[k] =
                std::exp(detail::read_ply_value(row.data() + scale[k]->offset, *scale[k]));
        }
        g.opacity = detail::logit_to_opacity(
            detail::read_ply_value(row.data() + opacity.offset, opacity));
        Eigen::Vector4d q;
        for (int k = 0; k < 4; ++k)
            q[k] = detail::read_ply_value(row.data() + rot[k]->offset, *rot[k]);
        const double n = q.norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw ValidationError("PLY gaussian has a degenerate rotation quaternion");
        q /= n;
        g.rotation = Quat(q[0], q[1], q[2], q[3]);  // w, x, y, z
        if (has_features)
            for (int k = 0; k < kFeatureDim; ++k)
                g.feature[k] =
                    detail::read_ply_value(row.data() + features[k]->offset, *features[k]);
        if (instance) {
            const double v = detail::read_ply_value(row.data() + instance->offset, *instance);
            g.instance = v < 0 ? kNoInstance : static_cast<int>(v);
        }
    }
    scene.validate();
    return scene;
}

}  // namespace splatkit
