// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/gaussian.hpp"
#include "splatkit/io/raw.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

// Binary occupancy over an axis-aligned box, the object-local unit cube by
// default. Cells are indexed x-fastest; cell (x, y, z) covers an equal
// subdivision of the domain and is sampled at its center.
struct VoxelGrid {
    int resolution = 0;  // cells per axis
    std::vector<std::uint8_t> occupancy;
    Vec3 domain_min = Vec3(-1.0, -1.0, -1.0);
    Vec3 domain_max = Vec3(1.0, 1.0, 1.0);

    VoxelGrid() = default;
    explicit VoxelGrid(int n) : resolution(n) {
        validate_resolution(n);
        occupancy.assign(static_cast<std::size_t>(n) * n * n, 0);
    }

    static void validate_resolution(int n) {
        if (n < 4) throw ValidationError("voxel grid resolution must be at least 4");
    }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * resolution + y) * resolution + x;
    }
    std::uint8_t& at(int x, int y, int z) { return occupancy[index(x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return occupancy[index(x, y, z)]; }

    Vec3 cell_center(int x, int y, int z) const {
        const Vec3 step = (domain_max - domain_min) / resolution;
        return domain_min + Vec3((x + 0.5) * step.x(), (y + 0.5) * step.y(), (z + 0.5) * step.z());
    }

    std::size_t occupied_count() const {
        std::size_t n = 0;
        for (const std::uint8_t v : occupancy) n += v != 0;
        return n;
    }
    double occupied_fraction() const {
        return occupancy.empty()
                   ? 0.0
                   : static_cast<double>(occupied_count()) / static_cast<double>(occupancy.size());
    }

    void validate() const {
        validate_resolution(resolution);
        if (occupancy.size() != static_cast<std::size_t>(resolution) * resolution * resolution)
            throw ValidationError("voxel occupancy size does not match the resolution");
        for (const std::uint8_t v : occupancy)
            if (v > 1) throw ValidationError("voxel occupancy must be binary");
        for (int k = 0; k < 3; ++k)
            if (!(domain_min[k] < domain_max[k]))
                throw ValidationError("voxel domain box is inverted or empty");
    }
};

// Real-valued feature grid at a coarser resolution; the compressed form the
// flow model works in. Channel layout is fixed by encode_structure.
struct LatentGrid {
    int resolution = 0;  // cells per axis
    int channels = 0;
    std::vector<double> values;

    LatentGrid() = default;
    LatentGrid(int d, int c) : resolution(d), channels(c) {
        if (d < 1 || c < 1) throw ValidationError("latent grid dimensions must be positive");
        values.assign(static_cast<std::size_t>(d) * d * d * c, 0.0);
    }

    std::size_t index(int x, int y, int z, int c) const {
        return ((static_cast<std::size_t>(z) * resolution + y) * resolution + x) * channels + c;
    }
    double& at(int x, int y, int z, int c) { return values[index(x, y, z, c)]; }
    double at(int x, int y, int z, int c) const { return values[index(x, y, z, c)]; }

    void validate() const {
        if (resolution < 1 || channels < 1)
            throw ValidationError("latent grid dimensions must be positive");
        if (values.size() !=
            static_cast<std::size_t>(resolution) * resolution * resolution * channels)
            throw ValidationError("latent value count does not match its shape");
        for (const double v : values)
            if (!std::isfinite(v)) throw ValidationError("latent grid holds non-finite values");
    }
};

// Occupancy by point-membership test at cell centers.
inline VoxelGrid voxelize(const std::function<bool(const Vec3&)>& inside, int n,
                          const Vec3& domain_min = Vec3(-1.0, -1.0, -1.0),
                          const Vec3& domain_max = Vec3(1.0, 1.0, 1.0)) {
    if (!inside) throw ValidationError("voxelize needs a shape membership function");
    VoxelGrid grid(n);
    grid.domain_min = domain_min;
    grid.domain_max = domain_max;
    grid.validate();
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (inside(grid.cell_center(x, y, z))) grid.at(x, y, z) = 1;
    return grid;
}

// Occupancy from splats: a cell is filled when its center lies within one
// standard deviation (Mahalanobis) of any gaussian. An empty scene yields an
// empty grid with a warning rather than an error, so partial segmentations
// still flow through.
inline VoxelGrid voxelize(const GaussianScene& scene, int n,
                          const Vec3& domain_min = Vec3(-1.0, -1.0, -1.0),
                          const Vec3& domain_max = Vec3(1.0, 1.0, 1.0)) {
    VoxelGrid grid(n);
    grid.domain_min = domain_min;
    grid.domain_max = domain_max;
    grid.validate();
    if (scene.gaussians.empty()) {
        std::cerr << "splatkit: voxelize called on an empty scene; producing an empty grid\n";
        return grid;
    }

    struct Body {
        Vec3 mean;
        Mat3 inv_cov;
        Vec3 box;  // axis-aligned half extent of the one-sigma ellipsoid
    };
    std::vector<Body> bodies;
    bodies.reserve(scene.gaussians.size());
    for (const Gaussian& g : scene.gaussians) {
        const Mat3 cov = g.covariance();
        Body b;
        b.mean = g.position;
        b.inv_cov = cov.inverse();
        b.box = cov.diagonal().cwiseSqrt();
        bodies.push_back(b);
    }

    for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const Vec3 c = grid.cell_center(x, y, z);
                for (const Body& b : bodies) {
                    const Vec3 d = c - b.mean;
                    if (std::abs(d.x()) > b.box.x() || std::abs(d.y()) > b.box.y() ||
                        std::abs(d.z()) > b.box.z())
                        continue;
                    if (d.dot(b.inv_cov * d) <= 1.0) {
                        grid.at(x, y, z) = 1;
                        break;
                    }
                }
            }
        }
    }
    return grid;
}

inline constexpr int kLatentChannels = 4;
inline constexpr int kLatentPool = 4;

// Average-pool occupancy into (N/pool)^3 cells and lift to 4 channels:
// channel 0 is the mean remapped to [-1, 1]; channels 1-3 hold the centroid
// offset of the occupied sub-cells within the pooled cell (zero when empty),
// expressed in the pooled cell's own unit frame.
inline LatentGrid encode_structure(const VoxelGrid& v, int pool = kLatentPool) {
    v.validate();
    if (pool < 1) throw ValidationError("pooling factor must be positive");
    if (v.resolution % pool != 0)
        throw ValidationError("pooling factor must divide the voxel resolution");
    const int d = v.resolution / pool;
    LatentGrid latent(d, kLatentChannels);
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < d; ++y) {
            for (int x = 0; x < d; ++x) {
                int count = 0;
                Vec3 centroid = Vec3::Zero();
                for (int dz = 0; dz < pool; ++dz)
                    for (int dy = 0; dy < pool; ++dy)
                        for (int dx = 0; dx < pool; ++dx)
                            if (v.at(x * pool + dx, y * pool + dy, z * pool + dz) != 0) {
                                ++count;
                                centroid += Vec3((dx + 0.5) / pool - 0.5, (dy + 0.5) / pool - 0.5,
                                                 (dz + 0.5) / pool - 0.5);
                            }
                const double total = pool * static_cast<double>(pool) * pool;
                latent.at(x, y, z, 0) = 2.0 * (count / total) - 1.0;
                if (count > 0) {
                    centroid /= count;
                    for (int c = 0; c < 3; ++c) latent.at(x, y, z, c + 1) = centroid[c];
                }
            }
        }
    }
    return latent;
}

// Threshold channel 0 at zero and fill each coarse cell's block of fine
// cells. Exact inverse of encode_structure at the pooled resolution.
inline VoxelGrid decode_structure(const LatentGrid& latent, int n) {
    latent.validate();
    VoxelGrid::validate_resolution(n);
    if (n % latent.resolution != 0)
        throw ValidationError("target resolution must be a multiple of the latent resolution");
    const int up = n / latent.resolution;
    VoxelGrid grid(n);
    for (int z = 0; z < latent.resolution; ++z)
        for (int y = 0; y < latent.resolution; ++y)
            for (int x = 0; x < latent.resolution; ++x) {
                if (latent.at(x, y, z, 0) <= 0.0) continue;
                for (int dz = 0; dz < up; ++dz)
                    for (int dy = 0; dy < up; ++dy)
                        for (int dx = 0; dx < up; ++dx)
                            grid.at(x * up + dx, y * up + dy, z * up + dz) = 1;
            }
    return grid;
}

inline double voxel_iou(const VoxelGrid& a, const VoxelGrid& b) {
    if (a.resolution != b.resolution)
        throw ValidationError("voxel grids have different resolutions");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
        const bool pa = a.occupancy[i] != 0, pb = b.occupancy[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline void write_voxel_grid(const VoxelGrid& v, const std::string& data_path,
                             const std::string& json_path) {
    v.validate();
    detail::write_blob(data_path, v.occupancy);
    const nlohmann::json meta = {
        {"dtype", "uint8"},
        {"shape", {v.resolution, v.resolution, v.resolution}},
        {"layout", "row-major"},
        {"domain_min", {v.domain_min.x(), v.domain_min.y(), v.domain_min.z()}},
        {"domain_max", {v.domain_max.x(), v.domain_max.y(), v.domain_max.z()}}};
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot open for writing: " + json_path);
    out << meta.dump(2) << "\n";
}

inline VoxelGrid read_voxel_grid(const std::string& data_path, const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open: " + json_path);
    const nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.at("dtype").get<std::string>() != "uint8")
        throw ValidationError("voxel grid file must be uint8");
    const auto shape = meta.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] != shape[1] || shape[1] != shape[2])
        throw ValidationError("voxel grid shape must be cubic");
    VoxelGrid grid(shape[0]);
    for (int k = 0; k < 3; ++k) {
        grid.domain_min[k] = meta.at("domain_min").at(k).get<double>();
        grid.domain_max[k] = meta.at("domain_max").at(k).get<double>();
    }
    grid.occupancy = detail::read_blob<std::uint8_t>(data_path, grid.occupancy.size());
    grid.validate();
    return grid;
}

inline void write_latent_grid(const LatentGrid& latent, const std::string& data_path,
                              const std::string& json_path) {
    latent.validate();
    write_raw_f32(data_path, json_path,
                  {latent.resolution, latent.resolution, latent.resolution, latent.channels},
                  latent.values);
}

inline LatentGrid read_latent_grid(const std::string& data_path, const std::string& json_path) {
    const auto [shape, values] = read_raw_f32(data_path, json_path);
    if (shape.size() != 4 || shape[0] != shape[1] || shape[1] != shape[2])
        throw ValidationError("latent grid shape must be cubic with a channel axis");
    LatentGrid latent(shape[0], shape[3]);
    latent.values = values;
    latent.validate();
    return latent;
}

}  // namespace splatkit
