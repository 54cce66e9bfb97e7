// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "splatkit/common.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3::Ones();          // per-axis standard deviations, > 0
    Quat rotation = Quat::Identity();   // unit quaternion
    double opacity = 1.0;               // [0, 1]
    Vec3 color = Vec3::Ones();          // RGB in [0, 1]
    FeatureVec feature = FeatureVec::Zero();
    int instance = kNoInstance;

    bool has_instance() const { return instance >= 0; }
    Mat3 covariance() const { return covariance_from(rotation, scale); }
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    Vec3 background = Vec3::Zero();
    bool has_features = false;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    void validate() const {
        for (std::size_t i = 0; i < gaussians.size(); ++i) {
            const Gaussian& g = gaussians[i];
            const std::string at = " (gaussian " + std::to_string(i) + ")";
            if (!g.position.allFinite() || !g.scale.allFinite() ||
                !g.rotation.coeffs().allFinite() || !std::isfinite(g.opacity) ||
                !g.color.allFinite() || !g.feature.allFinite()) {
                throw ValidationError("scene contains non-finite values" + at);
            }
            if ((g.scale.array() <= 0.0).any()) {
                throw ValidationError("gaussian scale must be positive" + at);
            }
            if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
                throw ValidationError("gaussian rotation must be a unit quaternion" + at);
            }
            if (g.opacity < 0.0 || g.opacity > 1.0) {
                throw ValidationError("gaussian opacity must be in [0, 1]" + at);
            }
        }
        if (!background.allFinite()) throw ValidationError("non-finite background color");
    }

    // Highest instance label present, or kNoInstance.
    int max_instance() const {
        int m = kNoInstance;
        for (const Gaussian& g : gaussians) m = std::max(m, g.instance);
        return m;
    }

    bool has_instances() const { return max_instance() >= 0; }
};

// Remaps instance labels onto {0..K-1} in order of first appearance; unlabeled
// gaussians stay unlabeled. Returns K.
inline int relabel_contiguous(GaussianScene& scene) {
    std::map<int, int> remap;
    for (Gaussian& g : scene.gaussians) {
        if (!g.has_instance()) continue;
        auto [it, inserted] = remap.try_emplace(g.instance, static_cast<int>(remap.size()));
        g.instance = it->second;
    }
    return static_cast<int>(remap.size());
}

inline GaussianScene filter_by_instance(const GaussianScene& scene, int instance) {
    GaussianScene out;
    out.background = scene.background;
    out.has_features = scene.has_features;
    for (const Gaussian& g : scene.gaussians) {
        if (g.instance == instance) out.gaussians.push_back(g);
    }
    return out;
}

inline Bounds3 position_bounds(const GaussianScene& scene) {
    Bounds3 b;
    for (const Gaussian& g : scene.gaussians) b.expand(g.position);
    return b;
}

struct BoundingSphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
};

// Sphere over gaussian centers expanded by each gaussian's largest 1-sigma axis.
inline BoundingSphere bounding_sphere(const GaussianScene& scene) {
    if (scene.empty()) return {};
    Bounds3 b = position_bounds(scene);
    BoundingSphere s;
    s.center = b.center();
    for (const Gaussian& g : scene.gaussians) {
        const double r = (g.position - s.center).norm() + g.scale.maxCoeff();
        s.radius = std::max(s.radius, r);
    }
    return s;
}

}  // namespace splatkit
