// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "splatkit/camera.hpp"
#include "splatkit/image.hpp"
#include "splatkit/math.hpp"
#include "splatkit/rng.hpp"

namespace splatkit {

// Per-view 2D instance label maps bound to the cameras they were made from.
// Within one view, patch ids are contiguous from 0; ids are per-view (patch 2
// in view 0 and patch 2 in view 1 need not be the same object).
struct MaskSet {
    std::vector<CameraPose> views;
    std::vector<LabelImage> labels;

    std::size_t size() const { return views.size(); }

    void validate() const {
        if (views.size() != labels.size())
            throw ValidationError("mask set: one label map per view required");
        for (std::size_t v = 0; v < views.size(); ++v) {
            const auto& m = labels[v];
            if (m.width() != views[v].width || m.height() != views[v].height ||
                m.channels() != 1)
                throw ValidationError("mask set: label map " + std::to_string(v) +
                                      " does not match its view size");
            std::int32_t max_id = -1;
            for (const auto id : m.raw()) max_id = std::max(max_id, id);
            std::vector<bool> seen(static_cast<std::size_t>(max_id + 1), false);
            for (const auto id : m.raw())
                if (id >= 0) seen[static_cast<std::size_t>(id)] = true;
            for (std::size_t i = 0; i < seen.size(); ++i)
                if (!seen[i])
                    throw ValidationError("mask set: patch ids in view " + std::to_string(v) +
                                          " are not contiguous from 0");
        }
    }
};

struct SampleBatch {
    int view = 0;
    std::vector<std::pair<int, int>> pixels;  // (x, y)
    std::vector<int> patch_ids;
    std::vector<FeatureVec> features;  // rendered features, filled by the caller
};

// Picks a view uniformly at random, then samples n pixels uniformly (with
// replacement) from its labeled pixels.
inline SampleBatch sample_batch(const MaskSet& masks, Rng& rng, int n) {
    if (masks.size() == 0) throw ValidationError("mask set is empty");
    if (n <= 1) throw ValidationError("batch size must exceed 1");
    SampleBatch batch;
    batch.view = static_cast<int>(rng.uniform_index(masks.size()));
    const LabelImage& m = masks.labels[static_cast<std::size_t>(batch.view)];

    std::vector<std::pair<int, int>> labeled;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y, 0) >= 0) labeled.emplace_back(x, y);
    if (labeled.empty())
        throw ValidationError("view " + std::to_string(batch.view) + " has no labeled pixels");

    batch.pixels.reserve(static_cast<std::size_t>(n));
    batch.patch_ids.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto [x, y] = labeled[rng.uniform_index(labeled.size())];
        batch.pixels.emplace_back(x, y);
        batch.patch_ids.push_back(m.at(x, y, 0));
    }
    return batch;
}

// Remaps arbitrary non-negative ids onto 0..k-1 (numeric order preserved) and
// returns k. A sampled batch need not contain every patch of its view; the
// loss is taken over the clusters actually present in the batch.
inline int compress_ids(std::vector<int>& ids) {
    std::vector<int> distinct;
    for (const int id : ids) {
        if (id < 0) throw ValidationError("cluster ids must be non-negative");
        distinct.push_back(id);
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (int& id : ids)
        id = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), id) -
                              distinct.begin());
    return static_cast<int>(distinct.size());
}

// Frozen per-cluster statistics for the contrastive clustering loss: the mean
// feature of each cluster and a spread-based temperature
//   phi_i = (sum_j |f_j - mean_i|) / (n_i * log(n_i + alpha)),
// clamped below so that degenerate identical-feature clusters stay usable.
// Both are treated as constants (stop-gradient) within an optimization step.
struct ClusterStats {
    std::vector<FeatureVec> mean;
    std::vector<double> phi;
    std::vector<int> sizes;

    static constexpr double kSmoothing = 10.0;  // alpha in the temperature
    static constexpr double kPhiMin = 1e-2;

    int clusters() const { return static_cast<int>(mean.size()); }
};

inline ClusterStats cluster_stats(const std::vector<FeatureVec>& features,
                                  const std::vector<int>& ids) {
    if (features.empty() || features.size() != ids.size())
        throw ValidationError("cluster statistics need one id per feature");
    int k = 0;
    for (const int id : ids) {
        if (id < 0) throw ValidationError("cluster ids must be non-negative");
        k = std::max(k, id + 1);
    }
    ClusterStats stats;
    stats.mean.assign(static_cast<std::size_t>(k), FeatureVec::Zero());
    stats.phi.assign(static_cast<std::size_t>(k), 0.0);
    stats.sizes.assign(static_cast<std::size_t>(k), 0);
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (!features[j].allFinite()) throw ValidationError("non-finite feature in batch");
        stats.mean[static_cast<std::size_t>(ids[j])] += features[j];
        stats.sizes[static_cast<std::size_t>(ids[j])]++;
    }
    for (int c = 0; c < k; ++c) {
        if (stats.sizes[static_cast<std::size_t>(c)] == 0)
            throw ValidationError("cluster " + std::to_string(c) + " is empty");
        stats.mean[static_cast<std::size_t>(c)] /= stats.sizes[static_cast<std::size_t>(c)];
    }
    for (std::size_t j = 0; j < features.size(); ++j)
        stats.phi[static_cast<std::size_t>(ids[j])] +=
            (features[j] - stats.mean[static_cast<std::size_t>(ids[j])]).norm();
    for (int c = 0; c < k; ++c) {
        const double n = stats.sizes[static_cast<std::size_t>(c)];
        stats.phi[static_cast<std::size_t>(c)] =
            std::max(stats.phi[static_cast<std::size_t>(c)] /
                         (n * std::log(n + ClusterStats::kSmoothing)),
                     ClusterStats::kPhiMin);
    }
    return stats;
}

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<FeatureVec> grads;  // d loss / d feature, per sample
};

// Contrastive clustering loss over one batch:
//   L = -(1/K) sum_j log( exp(f_j . mean_c(j) / phi_c(j))
//                         / sum_k exp(f_j . mean_k / phi_k) )
// with K the cluster count and c(j) the sample's own cluster. The gradient is
// taken w.r.t. the sample features only; stats stay frozen.
inline ContrastiveResult contrastive_loss(const std::vector<FeatureVec>& features,
                                          const std::vector<int>& ids,
                                          const ClusterStats& stats) {
    if (features.empty()) throw ValidationError("empty batch");
    if (features.size() != ids.size())
        throw ValidationError("contrastive loss needs one id per feature");
    const int k = stats.clusters();
    if (k < 1) throw ValidationError("contrastive loss needs at least one cluster");

    ContrastiveResult out;
    out.grads.assign(features.size(), FeatureVec::Zero());
    std::vector<double> logits(static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (!features[j].allFinite()) throw ValidationError("non-finite feature in batch");
        if (ids[j] < 0 || ids[j] >= k)
            throw ValidationError("sample cluster id outside the statistics");

        double max_logit = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            logits[static_cast<std::size_t>(c)] =
                features[j].dot(stats.mean[static_cast<std::size_t>(c)]) /
                stats.phi[static_cast<std::size_t>(c)];
            max_logit = std::max(max_logit, logits[static_cast<std::size_t>(c)]);
        }
        double denom = 0.0;
        for (int c = 0; c < k; ++c)
            denom += std::exp(logits[static_cast<std::size_t>(c)] - max_logit);
        const double own = logits[static_cast<std::size_t>(ids[j])] - max_logit;
        out.loss += -(own - std::log(denom)) / k;

        FeatureVec g = -stats.mean[static_cast<std::size_t>(ids[j])] /
                       stats.phi[static_cast<std::size_t>(ids[j])];
        for (int c = 0; c < k; ++c) {
            const double p = std::exp(logits[static_cast<std::size_t>(c)] - max_logit) / denom;
            g += p * stats.mean[static_cast<std::size_t>(c)] /
                 stats.phi[static_cast<std::size_t>(c)];
        }
        out.grads[j] = g / k;
    }
    return out;
}

inline ContrastiveResult contrastive_loss(const std::vector<FeatureVec>& features,
                                          const std::vector<int>& ids) {
    return contrastive_loss(features, ids, cluster_stats(features, ids));
}

}  // namespace splatkit
