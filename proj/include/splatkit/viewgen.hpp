// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/camera.hpp"
#include "splatkit/gaussian.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

enum class ViewKind { kSceneFront, kSceneFull, kObjectRing };

inline std::string to_string(ViewKind k) {
    switch (k) {
        case ViewKind::kSceneFront: return "scene_front";
        case ViewKind::kSceneFull: return "scene_full";
        case ViewKind::kObjectRing: return "object_ring";
    }
    throw ValidationError("unknown view kind");
}

inline ViewKind view_kind_from_string(const std::string& s) {
    if (s == "scene_front") return ViewKind::kSceneFront;
    if (s == "scene_full") return ViewKind::kSceneFull;
    if (s == "object_ring") return ViewKind::kObjectRing;
    throw ValidationError("unknown view kind: " + s);
}

struct ViewGrid {
    ViewKind kind = ViewKind::kSceneFront;
    double radius = 1.0;
    std::vector<double> azimuths;    // radians
    std::vector<double> elevations;  // radians
    std::vector<CameraPose> poses;   // scene kinds: elevation-major, azimuth-minor
};

// Shared pose settings for generated grids. A non-positive ortho_half_height
// selects the automatic window: `radius` scene units for scene grids (covers
// a look_at-centered scene of that extent), 0.75 * radius for object rings
// (object fills most of the frame with margin for splat falloff).
struct ViewConfig {
    int width = 256;
    int height = 256;
    Projection projection = Projection::kOrthographic;
    double fov_y = deg_to_rad(50.0);
    double ortho_half_height = 0.0;
};

namespace detail {

inline CameraPose make_pose(ViewKind kind, double radius, double azimuth, double elevation,
                            const Vec3& look_at, const ViewConfig& cfg) {
    CameraPose cam;
    cam.projection = cfg.projection;
    cam.radius = radius;
    cam.azimuth = azimuth;
    // Guard against the rounded 90-degree conversion landing one ulp past
    // the pi/2 upper bound.
    cam.elevation = std::min(elevation, kPi / 2);
    cam.look_at = look_at;
    cam.width = cfg.width;
    cam.height = cfg.height;
    cam.fov_y = cfg.fov_y;
    if (cfg.ortho_half_height > 0.0) {
        cam.ortho_half_height = cfg.ortho_half_height;
    } else {
        cam.ortho_half_height = (kind == ViewKind::kObjectRing) ? 0.75 * radius : radius;
    }
    cam.validate();
    return cam;
}

}  // namespace detail

// Scene-level multi-view grids on a view sphere of the given radius.
//   scene_front: 8 azimuths uniform over [-5, 95] degrees (inclusive ends)
//                x 5 elevations uniform over [-10, 90] degrees (inclusive).
//   scene_full:  8 azimuths uniform over [0, 360) degrees (exclusive end)
//                x the same 5 elevations.
inline ViewGrid scene_viewpoints(ViewKind kind, double radius, const Vec3& look_at,
                                 const ViewConfig& cfg = {}) {
    if (!(radius > 0.0)) throw ValidationError("view radius must be positive");
    if (kind == ViewKind::kObjectRing)
        throw ValidationError("scene_viewpoints expects a scene grid kind");

    ViewGrid grid;
    grid.kind = kind;
    grid.radius = radius;
    constexpr int kAzimuthCount = 8;
    constexpr int kElevationCount = 5;
    for (int i = 0; i < kAzimuthCount; ++i) {
        const double deg = (kind == ViewKind::kSceneFront)
                               ? -5.0 + i * (100.0 / (kAzimuthCount - 1))
                               : i * (360.0 / kAzimuthCount);
        grid.azimuths.push_back(deg_to_rad(deg));
    }
    for (int j = 0; j < kElevationCount; ++j)
        grid.elevations.push_back(deg_to_rad(-10.0 + j * 25.0));
    for (const double elev : grid.elevations)
        for (const double az : grid.azimuths)
            grid.poses.push_back(detail::make_pose(kind, radius, az, elev, look_at, cfg));
    return grid;
}

// Object-centric ring: 16 poses at 30 degrees elevation, azimuth step 22.5.
inline ViewGrid object_viewpoints(const Vec3& center, double radius,
                                  const ViewConfig& cfg = {}) {
    if (!(radius > 0.0)) throw ValidationError("view radius must be positive");
    ViewGrid grid;
    grid.kind = ViewKind::kObjectRing;
    grid.radius = radius;
    grid.elevations.push_back(deg_to_rad(30.0));
    for (int i = 0; i < 16; ++i) {
        const double az = deg_to_rad(i * 22.5);
        grid.azimuths.push_back(az);
        grid.poses.push_back(detail::make_pose(grid.kind, radius, az, grid.elevations[0],
                                               center, cfg));
    }
    return grid;
}

// Ring with radius chosen from the object itself: 1.8x its bounding-sphere
// radius, which keeps the whole object inside the default orthographic window.
inline ViewGrid object_viewpoints_auto(const GaussianScene& object, const ViewConfig& cfg = {}) {
    if (object.empty()) throw ValidationError("cannot derive a view ring for an empty scene");
    const BoundingSphere s = bounding_sphere(object);
    const double radius = 1.8 * std::max(s.radius, 1e-6);
    return object_viewpoints(s.center, radius, cfg);
}

// Splits a 16-view ring into 4 quadrant regions; region k holds the views
// whose azimuth lies in [k*90, (k+1)*90) degrees. Returns pose indices.
inline std::array<std::vector<int>, 4> partition_regions(const ViewGrid& ring) {
    if (ring.kind != ViewKind::kObjectRing || ring.poses.size() != 16)
        throw ValidationError("region partition expects a 16-view object ring");
    std::array<std::vector<int>, 4> regions;
    for (int i = 0; i < 16; ++i) {
        double az = std::fmod(ring.poses[i].azimuth, 2 * kPi);
        if (az < 0.0) az += 2 * kPi;
        const int k = std::min(3, static_cast<int>(az / (kPi / 2)));
        regions[k].push_back(i);
    }
    return regions;
}

inline nlohmann::json camera_to_json(const CameraPose& cam) {
    return {
        {"projection", cam.projection == Projection::kOrthographic ? "orthographic" : "perspective"},
        {"radius", cam.radius},
        {"azimuth_rad", cam.azimuth},
        {"elevation_rad", cam.elevation},
        {"look_at", {cam.look_at.x(), cam.look_at.y(), cam.look_at.z()}},
        {"width", cam.width},
        {"height", cam.height},
        {"fov_y_rad", cam.fov_y},
        {"ortho_half_height", cam.ortho_half_height},
    };
}

inline CameraPose camera_from_json(const nlohmann::json& j) {
    CameraPose cam;
    const std::string proj = j.at("projection").get<std::string>();
    if (proj == "orthographic") {
        cam.projection = Projection::kOrthographic;
    } else if (proj == "perspective") {
        cam.projection = Projection::kPerspective;
    } else {
        throw ValidationError("unknown projection: " + proj);
    }
    cam.radius = j.at("radius").get<double>();
    cam.azimuth = j.at("azimuth_rad").get<double>();
    cam.elevation = j.at("elevation_rad").get<double>();
    const auto& la = j.at("look_at");
    cam.look_at = Vec3(la.at(0).get<double>(), la.at(1).get<double>(), la.at(2).get<double>());
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.fov_y = j.at("fov_y_rad").get<double>();
    cam.ortho_half_height = j.at("ortho_half_height").get<double>();
    cam.validate();
    return cam;
}

inline nlohmann::json view_grid_to_json(const ViewGrid& grid) {
    nlohmann::json poses = nlohmann::json::array();
    for (const CameraPose& cam : grid.poses) poses.push_back(camera_to_json(cam));
    return {
        {"kind", to_string(grid.kind)},
        {"radius", grid.radius},
        {"azimuths_rad", grid.azimuths},
        {"elevations_rad", grid.elevations},
        {"poses", poses},
    };
}

inline ViewGrid view_grid_from_json(const nlohmann::json& j) {
    ViewGrid grid;
    grid.kind = view_kind_from_string(j.at("kind").get<std::string>());
    grid.radius = j.at("radius").get<double>();
    grid.azimuths = j.at("azimuths_rad").get<std::vector<double>>();
    grid.elevations = j.at("elevations_rad").get<std::vector<double>>();
    for (const auto& p : j.at("poses")) grid.poses.push_back(camera_from_json(p));
    return grid;
}

}  // namespace splatkit
