// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "splatkit/camera.hpp"
#include "splatkit/gaussian.hpp"
#include "splatkit/image.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/projection.hpp"

namespace splatkit {

// Channel bitmask for selecting which output planes a render produces.
namespace channel {
inline constexpr unsigned kNone = 0u;
inline constexpr unsigned kColor = 1u << 0;
inline constexpr unsigned kDepth = 1u << 1;
inline constexpr unsigned kAlpha = 1u << 2;
inline constexpr unsigned kFeature = 1u << 3;
inline constexpr unsigned kInstance = 1u << 4;
inline constexpr unsigned kAll = kColor | kDepth | kAlpha | kFeature | kInstance;
}  // namespace channel

using ChannelSet = unsigned;

struct RenderOptions {
    ChannelSet channels = channel::kAll;
    int threads = 1;
};

// Output planes; unrequested channels stay empty.
struct RenderOutput {
    ImageF color;             // H x W x 3, background composited behind
    ImageF depth;             // H x W x 1, +inf where alpha = 0
    ImageF alpha;             // H x W x 1, in [0, 1]
    ImageF feature;           // H x W x 16, weighted sum of gaussian features
    LabelImage instance_map;  // H x W x 1, kNoInstance where alpha <= 0.5

    bool has_color() const { return !color.empty(); }
    bool has_depth() const { return !depth.empty(); }
    bool has_alpha() const { return !alpha.empty(); }
    bool has_feature() const { return !feature.empty(); }
    bool has_instance() const { return !instance_map.empty(); }
};

inline constexpr int kTileSize = 16;

// Rasterization cutoffs. Gaussians are evaluated inside their 3-sigma ellipse
// only; contributions with alpha < 1/255 are skipped; alpha is clamped to
// kAlphaMax; compositing stops once transmittance falls below kMinTransmit
// (the contribution that would cross the floor is itself dropped).
inline constexpr double kMaxMahalanobisSq = 9.0;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kAlphaMax = 0.999;
inline constexpr double kMinTransmit = 1e-4;

// Precomputed per-view rasterization state: projected gaussians plus per-tile
// index lists sorted front-to-back with a stable tie-break on input index.
// Geometry-only; colors/features are looked up in the scene at composite time,
// so one index serves both rendering and feature-gradient accumulation.
struct RenderIndex {
    struct Splat {
        Vec2 mean = Vec2::Zero();
        Mat2 inv_cov = Mat2::Identity();
        double depth = 0.0;
        double opacity = 0.0;
        std::int32_t index = 0;  // position in the source scene
    };

    int width = 0;
    int height = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<Splat> splats;
    std::vector<std::vector<std::int32_t>> bins;  // per-tile indices into splats

    int tile_count() const { return tiles_x * tiles_y; }
};

inline RenderIndex build_render_index(const GaussianScene& scene, const CameraPose& cam) {
    scene.validate();
    cam.validate();

    RenderIndex idx;
    idx.width = cam.width;
    idx.height = cam.height;
    idx.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    idx.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    idx.bins.resize(static_cast<std::size_t>(idx.tile_count()));

    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Projected2D p = project_gaussian(scene.gaussians[i], cam);
        if (p.culled || !p.mean.allFinite() || !p.cov.allFinite() || !std::isfinite(p.depth))
            continue;
        const double det = p.cov.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) continue;
        if (scene.gaussians[i].opacity < kMinAlpha) continue;

        const double rx = 3.0 * std::sqrt(p.cov(0, 0));
        const double ry = 3.0 * std::sqrt(p.cov(1, 1));
        const int tx0 = std::max(0, static_cast<int>(std::floor((p.mean.x() - rx) / kTileSize)));
        const int tx1 = std::min(idx.tiles_x - 1,
                                 static_cast<int>(std::floor((p.mean.x() + rx) / kTileSize)));
        const int ty0 = std::max(0, static_cast<int>(std::floor((p.mean.y() - ry) / kTileSize)));
        const int ty1 = std::min(idx.tiles_y - 1,
                                 static_cast<int>(std::floor((p.mean.y() + ry) / kTileSize)));
        if (tx0 > tx1 || ty0 > ty1) continue;

        RenderIndex::Splat s;
        s.mean = p.mean;
        s.inv_cov = p.cov.inverse();
        s.depth = p.depth;
        s.opacity = scene.gaussians[i].opacity;
        s.index = static_cast<std::int32_t>(i);
        const auto splat_id = static_cast<std::int32_t>(idx.splats.size());
        idx.splats.push_back(s);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                idx.bins[static_cast<std::size_t>(ty) * idx.tiles_x + tx].push_back(splat_id);
    }

    // Bins are filled in input order, so a stable sort on depth yields the
    // (depth, input index) ordering.
    for (auto& bin : idx.bins) {
        std::stable_sort(bin.begin(), bin.end(), [&](std::int32_t a, std::int32_t b) {
            return idx.splats[a].depth < idx.splats[b].depth;
        });
    }
    return idx;
}

// One accepted compositing term at a pixel.
struct Contribution {
    std::int32_t index = 0;  // gaussian position in the source scene
    double weight = 0.0;     // alpha * transmittance at entry
    double depth = 0.0;
};

// Front-to-back walk of one pixel's sorted splat list. Appends accepted
// contributions to `out` and returns the final transmittance.
inline double accumulate_pixel(const RenderIndex& idx, int px, int py,
                               std::vector<Contribution>& out) {
    const int tile = (py / kTileSize) * idx.tiles_x + (px / kTileSize);
    const Vec2 center(px + 0.5, py + 0.5);
    double transmit = 1.0;
    for (const std::int32_t sid : idx.bins[static_cast<std::size_t>(tile)]) {
        const RenderIndex::Splat& s = idx.splats[sid];
        const Vec2 d = center - s.mean;
        const double e = d.dot(s.inv_cov * d);
        if (!(e <= kMaxMahalanobisSq)) continue;
        const double alpha = std::min(s.opacity * std::exp(-0.5 * e), kAlphaMax);
        if (alpha < kMinAlpha) continue;
        const double next = transmit * (1.0 - alpha);
        if (next < kMinTransmit) break;
        out.push_back({s.index, alpha * transmit, s.depth});
        transmit = next;
    }
    return transmit;
}

inline RenderOutput render_with_index(const GaussianScene& scene, const RenderIndex& idx,
                                      const RenderOptions& opts = {}) {
    RenderOutput out;
    if (opts.channels == channel::kNone) return out;

    const int w = idx.width, h = idx.height;
    if (opts.channels & channel::kColor) out.color = ImageF(w, h, 3);
    if (opts.channels & channel::kDepth) out.depth = ImageF(w, h, 1);
    if (opts.channels & channel::kAlpha) out.alpha = ImageF(w, h, 1);
    if (opts.channels & channel::kFeature) out.feature = ImageF(w, h, kFeatureDim);
    if (opts.channels & channel::kInstance) out.instance_map = LabelImage(w, h, 1);

    parallel_for(static_cast<std::size_t>(idx.tile_count()), opts.threads, [&](std::size_t tile) {
        const int ty = static_cast<int>(tile) / idx.tiles_x;
        const int tx = static_cast<int>(tile) % idx.tiles_x;
        const int x0 = tx * kTileSize, x1 = std::min(w, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(h, y0 + kTileSize);
        std::vector<Contribution> contribs;
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                contribs.clear();
                const double transmit = accumulate_pixel(idx, px, py, contribs);
                const double final_alpha = 1.0 - transmit;

                if (out.has_color()) {
                    Vec3 c = Vec3::Zero();
                    for (const Contribution& t : contribs)
                        c += t.weight * scene.gaussians[t.index].color;
                    c += transmit * scene.background;
                    for (int k = 0; k < 3; ++k) out.color.at(px, py, k) = c[k];
                }
                if (out.has_feature()) {
                    FeatureVec f = FeatureVec::Zero();
                    for (const Contribution& t : contribs)
                        f += t.weight * scene.gaussians[t.index].feature;
                    for (int k = 0; k < kFeatureDim; ++k) out.feature.at(px, py, k) = f[k];
                }
                if (out.has_alpha()) out.alpha.at(px, py, 0) = final_alpha;
                if (out.has_depth()) {
                    // Depth of the splat at which accumulated alpha first
                    // exceeds half the final alpha (median-alpha depth).
                    double depth = std::numeric_limits<double>::infinity();
                    double acc = 0.0;
                    for (const Contribution& t : contribs) {
                        acc += t.weight;
                        if (acc > 0.5 * final_alpha) {
                            depth = t.depth;
                            break;
                        }
                    }
                    out.depth.at(px, py, 0) = depth;
                }
                if (out.has_instance()) {
                    // A pixel is attributed to the instance of its single
                    // largest contribution, but only where the surface is
                    // solid (alpha > 0.5); faint halos stay unlabeled.
                    std::int32_t label = kNoInstance;
                    if (final_alpha > 0.5) {
                        double best = 0.0;
                        for (const Contribution& t : contribs) {
                            if (t.weight > best) {
                                best = t.weight;
                                label = scene.gaussians[t.index].instance;
                            }
                        }
                    }
                    out.instance_map.at(px, py, 0) = label;
                }
            }
        }
    });
    return out;
}

inline RenderOutput render(const GaussianScene& scene, const CameraPose& cam,
                           const RenderOptions& opts = {}) {
    if (opts.channels == channel::kNone) {
        scene.validate();
        cam.validate();
        return {};
    }
    return render_with_index(scene, build_render_index(scene, cam), opts);
}

// Backward pass of the feature channel: the feature render is linear in the
// per-gaussian features, so dL/dh_g = sum over pixels of w_g(pixel) * dL/dF.
// `upstream` is H x W x 16. Walk order is fixed (tile-major, then pixel,
// then front-to-back), so results do not depend on worker count.
inline std::vector<FeatureVec> render_feature_grad_with_index(const GaussianScene& scene,
                                                              const RenderIndex& idx,
                                                              const ImageF& upstream) {
    if (upstream.width() != idx.width || upstream.height() != idx.height ||
        upstream.channels() != kFeatureDim)
        throw ValidationError("upstream gradient dimensions do not match the render");

    std::vector<FeatureVec> grads(scene.size(), FeatureVec::Zero());
    std::vector<Contribution> contribs;
    for (int tile = 0; tile < idx.tile_count(); ++tile) {
        const int ty = tile / idx.tiles_x;
        const int tx = tile % idx.tiles_x;
        const int x0 = tx * kTileSize, x1 = std::min(idx.width, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(idx.height, y0 + kTileSize);
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                const double* g = &upstream.at(px, py, 0);
                bool any = false;
                for (int k = 0; k < kFeatureDim; ++k) any = any || g[k] != 0.0;
                if (!any) continue;
                contribs.clear();
                accumulate_pixel(idx, px, py, contribs);
                const Eigen::Map<const FeatureVec> gv(g);
                for (const Contribution& t : contribs) grads[t.index] += t.weight * gv;
            }
        }
    }
    return grads;
}

inline std::vector<FeatureVec> render_feature_grad(const GaussianScene& scene,
                                                   const CameraPose& cam,
                                                   const ImageF& upstream) {
    return render_feature_grad_with_index(scene, build_render_index(scene, cam), upstream);
}

}  // namespace splatkit
