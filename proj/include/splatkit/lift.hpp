// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "splatkit/contrastive.hpp"
#include "splatkit/render.hpp"
#include "splatkit/rng.hpp"

namespace splatkit {

struct LiftConfig {
    int steps = 5000;
    double lr = 1.0;
    double momentum = 0.9;
    int batch_size = 1024;   // points sampled per step
    int probe_size = 256;    // held-out batch used to report progress
    std::uint64_t seed = 0;
};

struct LiftReport {
    int steps_run = 0;
    double initial_probe_loss = 0.0;
    double final_probe_loss = 0.0;
};

namespace detail {

// Drops labeled pixels that touch a differently-labeled 4-neighbor. Splat
// silhouettes are soft, so the raw instance render labels boundary pixels
// whose feature is a blend of two patches; eroding the rim keeps only
// decisive supervision, as an off-the-shelf 2D segmenter would provide.
inline void erode_labels(LabelImage& labels) {
    const LabelImage src = labels;
    const int w = src.width(), h = src.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t id = src.at(x, y, 0);
            if (id < 0) continue;
            const bool interior = x > 0 && x + 1 < w && y > 0 && y + 1 < h &&
                                  src.at(x - 1, y, 0) == id && src.at(x + 1, y, 0) == id &&
                                  src.at(x, y - 1, 0) == id && src.at(x, y + 1, 0) == id;
            if (!interior) labels.at(x, y, 0) = kNoInstance;
        }
    }
}

}  // namespace detail

// Builds 2D supervision from the scene's own instance renders. Instance ids
// are remapped per view so that each label map carries contiguous patch ids
// starting at 0 (patches are class-agnostic and per-view; no cross-view
// identity is needed by the loss). `erode` boundary-cleanup passes are
// applied first; a patch eroded away entirely simply disappears from that
// view's id range.
inline MaskSet masks_from_instance_renders(const GaussianScene& scene,
                                           const std::vector<CameraPose>& views,
                                           int threads = 1, int erode = 1) {
    MaskSet masks;
    masks.views = views;
    RenderOptions opts;
    opts.channels = channel::kInstance;
    opts.threads = threads;
    for (const CameraPose& cam : views) {
        LabelImage labels = render(scene, cam, opts).instance_map;
        for (int pass = 0; pass < erode; ++pass) detail::erode_labels(labels);
        std::map<std::int32_t, std::int32_t> remap;
        for (auto& v : labels.raw()) {
            if (v < 0) continue;
            auto [it, inserted] = remap.try_emplace(v, static_cast<std::int32_t>(remap.size()));
            v = it->second;
        }
        masks.labels.push_back(std::move(labels));
    }
    return masks;
}

namespace detail {

// Rendered pixel feature with everything needed to push a gradient back to
// the contributing gaussians through the L2 normalization.
struct LiftSample {
    FeatureVec unit = FeatureVec::Zero();
    FeatureVec raw = FeatureVec::Zero();
    double norm = 0.0;
    std::vector<Contribution> contribs;
};

inline LiftSample lift_sample(const GaussianScene& scene, const RenderIndex& index, int px,
                              int py) {
    LiftSample s;
    accumulate_pixel(index, px, py, s.contribs);
    for (const Contribution& c : s.contribs)
        s.raw += c.weight * scene.gaussians[static_cast<std::size_t>(c.index)].feature;
    s.norm = s.raw.norm();
    if (s.norm > 1e-12) s.unit = s.raw / s.norm;
    return s;
}

// d loss / d raw feature for a normalized sample: (I - u u^T) / |raw| applied
// to the upstream gradient. Degenerate (empty) pixels carry no gradient.
inline FeatureVec through_normalization(const LiftSample& s, const FeatureVec& upstream) {
    if (s.norm <= 1e-12) return FeatureVec::Zero();
    return (upstream - s.unit * s.unit.dot(upstream)) / s.norm;
}

inline double batch_loss(const GaussianScene& scene, const std::vector<RenderIndex>& indices,
                         const SampleBatch& batch) {
    std::vector<FeatureVec> feats;
    feats.reserve(batch.pixels.size());
    for (const auto& [px, py] : batch.pixels)
        feats.push_back(
            lift_sample(scene, indices[static_cast<std::size_t>(batch.view)], px, py).unit);
    std::vector<int> ids = batch.patch_ids;
    compress_ids(ids);
    return contrastive_loss(feats, ids).loss;
}

}  // namespace detail

// Optimizes the per-gaussian 16-d features so that, rendered into each view,
// pixels within one 2D patch agree and pixels across patches separate
// (contrastive clustering loss). Plain SGD with momentum on unit-normalized
// features; cluster statistics are recomputed per batch and treated as
// constants within the step.
inline LiftReport lift_features(GaussianScene& scene, const MaskSet& masks,
                                const LiftConfig& cfg = {}) {
    scene.validate();
    masks.validate();
    if (masks.size() == 0) throw ValidationError("feature lifting requires at least one view");
    if (cfg.steps < 0) throw ValidationError("negative step count");
    if (cfg.batch_size <= 1) throw ValidationError("batch size must exceed 1");

    Rng root(cfg.seed);
    Rng init_rng = root.fork("feature-init");
    if (!scene.has_features) {
        // Spatially smooth random init (random Fourier features of position):
        // neighboring gaussians start aligned, so weakly-observed ones ride
        // along with their object instead of starting from an isolated random
        // direction they may never leave, while regions far apart start
        // decorrelated. Length scale tied to the scene extent.
        const double len = std::max(0.4 * bounding_sphere(scene).radius, 1e-6);
        Eigen::Matrix<double, kFeatureDim, 3> freq;
        Eigen::Matrix<double, kFeatureDim, 1> phase;
        for (int r = 0; r < kFeatureDim; ++r) {
            for (int c = 0; c < 3; ++c) freq(r, c) = init_rng.normal() / len;
            phase[r] = init_rng.uniform(0.0, 2.0 * kPi);
        }
        for (Gaussian& g : scene.gaussians) {
            g.feature = ((freq * g.position + phase).array().cos()).matrix();
            const double n = g.feature.norm();
            g.feature = n > 1e-12 ? FeatureVec(g.feature / n) : FeatureVec::Unit(0);
        }
        scene.has_features = true;
    }

    std::vector<RenderIndex> indices;
    indices.reserve(masks.size());
    for (const CameraPose& cam : masks.views) indices.push_back(build_render_index(scene, cam));

    Rng probe_rng = root.fork("probe");
    const SampleBatch probe = sample_batch(masks, probe_rng, cfg.probe_size);

    LiftReport report;
    report.initial_probe_loss = detail::batch_loss(scene, indices, probe);

    std::vector<FeatureVec> velocity(scene.size(), FeatureVec::Zero());
    std::vector<FeatureVec> grads(scene.size(), FeatureVec::Zero());
    Rng train_rng = root.fork("train");
    for (int step = 0; step < cfg.steps; ++step) {
        SampleBatch batch = sample_batch(masks, train_rng, cfg.batch_size);
        compress_ids(batch.patch_ids);
        const RenderIndex& index = indices[static_cast<std::size_t>(batch.view)];

        std::vector<detail::LiftSample> samples;
        samples.reserve(batch.pixels.size());
        batch.features.clear();
        for (const auto& [px, py] : batch.pixels) {
            samples.push_back(detail::lift_sample(scene, index, px, py));
            batch.features.push_back(samples.back().unit);
        }

        const ContrastiveResult result = contrastive_loss(batch.features, batch.patch_ids);
        if (!std::isfinite(result.loss))
            throw StageError("segment",
                             "feature lifting diverged (non-finite loss) at step " +
                                 std::to_string(step));

        for (auto& g : grads) g.setZero();
        for (std::size_t j = 0; j < samples.size(); ++j) {
            const FeatureVec up = detail::through_normalization(samples[j], result.grads[j]);
            for (const Contribution& c : samples[j].contribs)
                grads[static_cast<std::size_t>(c.index)] += c.weight * up;
        }

        for (std::size_t i = 0; i < scene.size(); ++i) {
            velocity[i] = cfg.momentum * velocity[i] + grads[i];
            scene.gaussians[i].feature -= cfg.lr * velocity[i];
            if (!scene.gaussians[i].feature.allFinite())
                throw StageError("segment",
                                 "feature lifting diverged (non-finite features) at step " +
                                     std::to_string(step));
            const double n = scene.gaussians[i].feature.norm();
            if (n > 1e-12) scene.gaussians[i].feature /= n;
        }
        report.steps_run = step + 1;
    }

    report.final_probe_loss = detail::batch_loss(scene, indices, probe);
    return report;
}

}  // namespace splatkit
