// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/gaussian.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

// Per-object placement: local geometry lives in [-1,1]^3 and maps into the
// scene as translate(position) . rotate(rotation) . scale(scale).
struct ObjectConfig {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
    std::string label = "unknown";

    void validate() const {
        if (!position.allFinite() || !scale.allFinite() ||
            !std::isfinite(rotation.norm()))
            throw ValidationError("object config has non-finite values");
        if (scale.minCoeff() <= 0.0)
            throw ValidationError("object config scale must be positive");
        if (std::abs(rotation.norm() - 1.0) > 1e-6)
            throw ValidationError("object config rotation must be a unit quaternion");
    }
};

struct ExtractedObject {
    GaussianScene object;  // local frame, positions within [-1,1]^3
    ObjectConfig config;
    int source_instance = kNoInstance;
};

namespace detail {

// Applies the linear map M to a gaussian's geometry: position and covariance
// (M Sigma M^T), re-decomposed into rotation + positive scale.
inline Gaussian transform_gaussian(const Gaussian& g, const Mat3& m, const Vec3& offset) {
    Gaussian out = g;
    out.position = m * g.position + offset;
    const Mat3 cov = m * g.covariance() * m.transpose();
    const QuatScale qs = decompose_covariance(cov);
    out.rotation = qs.rotation;
    out.scale = qs.scale;
    return out;
}

}  // namespace detail

// Re-expresses one labeled object in its local frame: position = centroid of
// the member gaussians, rotation = identity (no orientation estimator),
// scale = half-extents of the axis-aligned box about the centroid, so local
// positions land in [-1,1]^3 exactly.
inline ExtractedObject extract_object(const GaussianScene& scene, int instance,
                                      const std::string& label = "unknown") {
    const GaussianScene members = filter_by_instance(scene, instance);
    if (members.empty())
        throw ValidationError("no gaussians carry instance " + std::to_string(instance));

    ExtractedObject out;
    out.source_instance = instance;
    out.config.label = label;
    out.config.rotation = Quat::Identity();

    Vec3 centroid = Vec3::Zero();
    for (const Gaussian& g : members.gaussians) centroid += g.position;
    centroid /= static_cast<double>(members.size());
    out.config.position = centroid;

    Vec3 ext = Vec3::Zero();
    for (const Gaussian& g : members.gaussians)
        ext = ext.cwiseMax((g.position - centroid).cwiseAbs());
    out.config.scale = ext.cwiseMax(1e-9);

    const Mat3 inv_scale = out.config.scale.cwiseInverse().asDiagonal();
    out.object = members;
    for (Gaussian& g : out.object.gaussians)
        g = detail::transform_gaussian(g, inv_scale, -inv_scale * centroid);
    return out;
}

// Extracts every labeled object, ascending by instance id. Unlabeled
// gaussians are background and are left out. Labels may be supplied per id.
inline std::vector<ExtractedObject> extract_objects(
    const GaussianScene& scene, const std::map<int, std::string>& labels = {}) {
    scene.validate();
    std::map<int, int> counts;
    for (const Gaussian& g : scene.gaussians)
        if (g.has_instance()) counts[g.instance]++;
    if (counts.empty()) throw ValidationError("scene carries no instance labels");
    std::vector<ExtractedObject> out;
    out.reserve(counts.size());
    for (const auto& [id, n] : counts) {
        const auto it = labels.find(id);
        out.push_back(extract_object(scene, id, it == labels.end() ? "unknown" : it->second));
    }
    return out;
}

// Maps local-frame geometry into the scene: scale, then rotate, then
// translate.
inline GaussianScene place_object(const GaussianScene& object, const ObjectConfig& config) {
    config.validate();
    const Mat3 m = config.rotation.toRotationMatrix() * Mat3(config.scale.asDiagonal());
    GaussianScene out = object;
    for (Gaussian& g : out.gaussians) g = detail::transform_gaussian(g, m, config.position);
    return out;
}

// Inverse of place_object.
inline GaussianScene unplace_object(const GaussianScene& placed, const ObjectConfig& config) {
    config.validate();
    const Mat3 m = Mat3(config.scale.cwiseInverse().asDiagonal()) *
                   config.rotation.toRotationMatrix().transpose();
    GaussianScene out = placed;
    for (Gaussian& g : out.gaussians)
        g = detail::transform_gaussian(g, m, -(m * config.position));
    return out;
}

inline nlohmann::json object_config_to_json(const ObjectConfig& c) {
    return {{"position", {c.position.x(), c.position.y(), c.position.z()}},
            {"rotation_wxyz",
             {c.rotation.w(), c.rotation.x(), c.rotation.y(), c.rotation.z()}},
            {"scale", {c.scale.x(), c.scale.y(), c.scale.z()}},
            {"label", c.label}};
}

inline ObjectConfig object_config_from_json(const nlohmann::json& j) {
    ObjectConfig c;
    const auto& p = j.at("position");
    c.position = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    const auto& q = j.at("rotation_wxyz");
    c.rotation = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                      q.at(3).get<double>());
    const auto& s = j.at("scale");
    c.scale = Vec3(s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>());
    c.label = j.value("label", "unknown");
    c.validate();
    return c;
}

}  // namespace splatkit
