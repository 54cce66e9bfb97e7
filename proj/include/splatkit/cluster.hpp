// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "splatkit/gaussian.hpp"

namespace splatkit {

struct ClusterResult {
    std::vector<int> labels;  // per gaussian, contiguous from 0
    int count = 0;
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    void merge(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace detail

// Groups gaussians into instances by single-linkage over a k-nearest-neighbor
// feature graph: two gaussians share an instance iff they are connected by a
// chain of neighbor links with cosine similarity >= the threshold. Labels are
// contiguous, ordered by the smallest gaussian index in each cluster.
inline ClusterResult cluster_instances(const GaussianScene& scene,
                                       double similarity_threshold = 0.9, int knn = 16) {
    if (!scene.has_features)
        throw ValidationError("instance clustering requires lifted features");
    if (scene.empty()) throw ValidationError("cannot cluster an empty scene");
    const std::size_t n = scene.size();

    std::vector<FeatureVec> unit(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = scene.gaussians[i].feature.norm();
        if (!(norm > 0.0))
            throw ValidationError("instance clustering requires non-zero features");
        unit[i] = scene.gaussians[i].feature / norm;
    }

    detail::UnionFind uf(n);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(knn), n - 1);
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t i = 0; i < n; ++i) {
        sims.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(unit[i].dot(unit[j]), j);
        }
        // Highest similarity first; ties broken toward the lower index for
        // a deterministic neighbor set.
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k),
                          sims.end(), [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (std::size_t t = 0; t < k; ++t)
            if (sims[t].first >= similarity_threshold) uf.merge(i, sims[t].second);
    }

    ClusterResult result;
    result.labels.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = uf.find(i);
        if (result.labels[root] < 0) result.labels[root] = result.count++;
        result.labels[i] = result.labels[root];
    }
    return result;
}

inline void apply_instance_labels(GaussianScene& scene, const std::vector<int>& labels) {
    if (labels.size() != scene.size())
        throw ValidationError("label count does not match the scene");
    for (std::size_t i = 0; i < scene.size(); ++i) scene.gaussians[i].instance = labels[i];
}

}  // namespace splatkit
