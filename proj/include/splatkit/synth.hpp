// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/gaussian.hpp"
#include "splatkit/math.hpp"
#include "splatkit/rng.hpp"

namespace splatkit {

// Procedural test scenes: primitive shells built from flattened surfel
// gaussians with exact ground-truth instance labels.
struct SynthObject {
    std::string shape = "box";  // box | sphere | ellipsoid
    int id = 0;
    std::string label = "unknown";
    Vec3 center = Vec3::Zero();
    Vec3 half_size = Vec3(0.25, 0.25, 0.25);  // sphere uses x as radius
    Quat rotation = Quat::Identity();
    Vec3 color = Vec3(0.7, 0.7, 0.7);
    double opacity = 0.7;
    double spacing = 0.06;       // surfel lattice pitch
    double surfel_scale = 0.04;  // tangential sigma; normal sigma is 1/5 of it
    // Surfels whose world-space outward normal has z below this are dropped.
    // Scan-style captures never observe undersides; -1 keeps everything.
    double min_normal_z = -1.0;
};

struct SynthSpec {
    std::vector<SynthObject> objects;
    Vec3 background = Vec3::Zero();
    double jitter = 0.0;  // optional positional noise as a fraction of spacing
};

namespace detail {

inline void add_surfel(GaussianScene& scene, const SynthObject& obj, const Vec3& local_pos,
                       const Vec3& local_normal, Rng& rng, double jitter) {
    if ((obj.rotation * local_normal).z() < obj.min_normal_z) return;
    Gaussian g;
    Vec3 p = local_pos;
    if (jitter > 0.0) {
        for (int k = 0; k < 3; ++k) p[k] += jitter * obj.spacing * rng.uniform(-0.5, 0.5);
    }
    g.position = obj.rotation * p + obj.center;
    const Quat align = Quat::FromTwoVectors(Vec3::UnitZ(), local_normal);
    g.rotation = (obj.rotation * align).normalized();
    g.scale = Vec3(obj.surfel_scale, obj.surfel_scale, obj.surfel_scale / 5.0);
    g.opacity = obj.opacity;
    g.color = obj.color;
    g.instance = obj.id;
    scene.gaussians.push_back(g);
}

inline void build_box(GaussianScene& scene, const SynthObject& obj, Rng& rng, double jitter) {
    const Vec3 h = obj.half_size;
    for (int axis = 0; axis < 3; ++axis) {
        const int u_axis = (axis + 1) % 3, v_axis = (axis + 2) % 3;
        const int nu = std::max(2, static_cast<int>(std::lround(2 * h[u_axis] / obj.spacing)) + 1);
        const int nv = std::max(2, static_cast<int>(std::lround(2 * h[v_axis] / obj.spacing)) + 1);
        for (int side = -1; side <= 1; side += 2) {
            for (int iu = 0; iu < nu; ++iu) {
                for (int iv = 0; iv < nv; ++iv) {
                    Vec3 p;
                    p[axis] = side * h[axis];
                    p[u_axis] = -h[u_axis] + 2 * h[u_axis] * iu / (nu - 1);
                    p[v_axis] = -h[v_axis] + 2 * h[v_axis] * iv / (nv - 1);
                    Vec3 n = Vec3::Zero();
                    n[axis] = side;
                    add_surfel(scene, obj, p, n, rng, jitter);
                }
            }
        }
    }
}

inline void build_sphere(GaussianScene& scene, const SynthObject& obj, Rng& rng, double jitter,
                         const Vec3& semi_axes) {
    const double mean_r = semi_axes.mean();
    const int n = std::max(
        8, static_cast<int>(std::ceil(4.0 * kPi * mean_r * mean_r /
                                      (obj.spacing * obj.spacing))));
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 unit(r * std::cos(phi), r * std::sin(phi), z);
        const Vec3 p = unit.cwiseProduct(semi_axes);
        // Outward surface normal of the ellipsoid at p.
        const Vec3 normal =
            Vec3(p.x() / (semi_axes.x() * semi_axes.x()), p.y() / (semi_axes.y() * semi_axes.y()),
                 p.z() / (semi_axes.z() * semi_axes.z()))
                .normalized();
        add_surfel(scene, obj, p, normal, rng, jitter);
    }
}

}  // namespace detail

inline GaussianScene synth_scene(const SynthSpec& spec, Rng& rng) {
    if (spec.objects.empty()) throw ValidationError("synthetic scene needs at least one object");
    std::set<int> ids;
    for (const SynthObject& obj : spec.objects) {
        if (obj.id < 0) throw ValidationError("synthetic object ids must be non-negative");
        if (!ids.insert(obj.id).second)
            throw ValidationError("duplicate object id " + std::to_string(obj.id));
    }

    GaussianScene scene;
    scene.background = spec.background;
    for (const SynthObject& obj : spec.objects) {
        if (obj.spacing <= 0.0 || obj.surfel_scale <= 0.0)
            throw ValidationError("surfel spacing and scale must be positive");
        if (obj.shape == "box") {
            detail::build_box(scene, obj, rng, spec.jitter);
        } else if (obj.shape == "sphere") {
            detail::build_sphere(scene, obj, rng, spec.jitter,
                                 Vec3::Constant(obj.half_size.x()));
        } else if (obj.shape == "ellipsoid") {
            detail::build_sphere(scene, obj, rng, spec.jitter, obj.half_size);
        } else {
            throw ValidationError("unknown synthetic shape: " + obj.shape);
        }
    }
    scene.validate();
    return scene;
}

// Four distinct objects, one per quadrant, floated above the ground plane
// and spread apart. Tuned so that multi-view segmentation recovers the
// instances cleanly: near-opaque surfels, lattice pitch equal to the surfel
// sigma (every surfel dominates a pixel somewhere), and undersides trimmed
// as a scanner would miss them.
inline SynthSpec room_spec() {
    SynthSpec spec;
    SynthObject box;
    box.shape = "box";
    box.id = 0;
    box.label = "crate";
    box.center = Vec3(-0.6, -0.6, 0.3);
    box.half_size = Vec3(0.2, 0.2, 0.2);
    box.color = Vec3(0.9, 0.3, 0.2);
    spec.objects.push_back(box);

    SynthObject sphere;
    sphere.shape = "sphere";
    sphere.id = 1;
    sphere.label = "ball";
    sphere.center = Vec3(0.6, -0.6, 0.32);
    sphere.half_size = Vec3(0.22, 0.22, 0.22);
    sphere.color = Vec3(0.2, 0.7, 0.3);
    spec.objects.push_back(sphere);

    SynthObject egg;
    egg.shape = "ellipsoid";
    egg.id = 2;
    egg.label = "egg";
    egg.center = Vec3(-0.6, 0.6, 0.26);
    egg.half_size = Vec3(0.24, 0.16, 0.16);
    egg.color = Vec3(0.25, 0.4, 0.9);
    spec.objects.push_back(egg);

    SynthObject plank;
    plank.shape = "box";
    plank.id = 3;
    plank.label = "plank";
    plank.center = Vec3(0.6, 0.6, 0.25);
    plank.half_size = Vec3(0.22, 0.13, 0.15);
    plank.rotation = Quat(Eigen::AngleAxisd(deg_to_rad(35.0), Vec3::UnitZ()));
    plank.color = Vec3(0.9, 0.8, 0.25);
    spec.objects.push_back(plank);

    for (SynthObject& obj : spec.objects) {
        obj.opacity = 0.95;
        obj.spacing = 0.05;
        obj.surfel_scale = 0.05;
        obj.min_normal_z = -0.05;
    }
    return spec;
}

// Target box (id 0) plus an equal-size occluder (id 1) placed nearer to a
// frontal camera on the +x axis and shifted sideways by `lateral_offset`:
// offset 0 hides the target completely, large offsets clear it entirely.
inline SynthSpec two_box_occlusion_spec(double lateral_offset) {
    SynthSpec spec;
    SynthObject target;
    target.shape = "box";
    target.id = 0;
    target.label = "target";
    target.center = Vec3(0.0, 0.0, 0.0);
    target.half_size = Vec3(0.3, 0.3, 0.3);
    target.color = Vec3(0.9, 0.2, 0.2);
    target.opacity = 0.95;
    target.spacing = 0.05;
    target.surfel_scale = 0.045;
    spec.objects.push_back(target);

    SynthObject occluder = target;
    occluder.id = 1;
    occluder.label = "occluder";
    occluder.center = Vec3(1.0, lateral_offset, 0.0);
    occluder.color = Vec3(0.2, 0.3, 0.9);
    spec.objects.push_back(occluder);
    return spec;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::json objects = nlohmann::json::array();
    for (const SynthObject& o : spec.objects) {
        objects.push_back({
            {"shape", o.shape},
            {"id", o.id},
            {"label", o.label},
            {"center", {o.center.x(), o.center.y(), o.center.z()}},
            {"half_size", {o.half_size.x(), o.half_size.y(), o.half_size.z()}},
            {"rotation_wxyz", {o.rotation.w(), o.rotation.x(), o.rotation.y(), o.rotation.z()}},
            {"color", {o.color.x(), o.color.y(), o.color.z()}},
            {"opacity", o.opacity},
            {"spacing", o.spacing},
            {"surfel_scale", o.surfel_scale},
            {"min_normal_z", o.min_normal_z},
        });
    }
    return {{"background", {spec.background.x(), spec.background.y(), spec.background.z()}},
            {"jitter", spec.jitter},
            {"objects", objects}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec spec;
    const auto vec3 = [](const nlohmann::json& a) {
        return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
    };
    if (j.contains("background")) spec.background = vec3(j.at("background"));
    spec.jitter = j.value("jitter", 0.0);
    for (const auto& o : j.at("objects")) {
        SynthObject obj;
        obj.shape = o.value("shape", "box");
        obj.id = o.at("id").get<int>();
        obj.label = o.value("label", "unknown");
        if (o.contains("center")) obj.center = vec3(o.at("center"));
        if (o.contains("half_size")) obj.half_size = vec3(o.at("half_size"));
        if (o.contains("rotation_wxyz")) {
            const auto& q = o.at("rotation_wxyz");
            obj.rotation = Quat(q.at(0).get<double>(), q.at(1).get<double>(),
                                q.at(2).get<double>(), q.at(3).get<double>())
                               .normalized();
        }
        if (o.contains("color")) obj.color = vec3(o.at("color"));
        obj.opacity = o.value("opacity", 0.7);
        obj.spacing = o.value("spacing", 0.06);
        obj.surfel_scale = o.value("surfel_scale", 0.04);
        obj.min_normal_z = o.value("min_normal_z", -1.0);
        spec.objects.push_back(obj);
    }
    return spec;
}

}  // namespace splatkit
