// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "splatkit/common.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

enum class Projection { kOrthographic, kPerspective };

// Camera on a view sphere around `look_at`, at spherical coordinates
// (radius, azimuth, elevation). World up is +z; azimuth is measured from +x
// toward +y; elevation from the xy-plane. The camera frame follows the
// computer-vision convention: x right, y down, z forward (toward look_at).
struct CameraPose {
    Projection projection = Projection::kOrthographic;
    double radius = 1.0;
    double azimuth = 0.0;    // radians
    double elevation = 0.0;  // radians, in (-pi/2, pi/2]
    Vec3 look_at = Vec3::Zero();
    int width = 256;
    int height = 256;
    double fov_y = deg_to_rad(50.0);      // perspective only, radians
    double ortho_half_height = 1.0;       // orthographic only, scene units

    void validate() const {
        if (!std::isfinite(radius) || radius <= 0.0)
            throw ValidationError("camera radius must be positive");
        if (!std::isfinite(azimuth))
            throw ValidationError("camera azimuth must be finite");
        if (!std::isfinite(elevation) || elevation <= -kPi / 2 || elevation > kPi / 2)
            throw ValidationError("camera elevation must lie in (-pi/2, pi/2]");
        if (!look_at.allFinite())
            throw ValidationError("camera look_at must be finite");
        if (width < 1 || height < 1)
            throw ValidationError("camera image size must be at least 1x1");
        if (projection == Projection::kPerspective &&
            (!std::isfinite(fov_y) || fov_y <= 0.0 || fov_y >= kPi))
            throw ValidationError("camera fov_y must lie in (0, pi)");
        if (projection == Projection::kOrthographic &&
            (!std::isfinite(ortho_half_height) || ortho_half_height <= 0.0))
            throw ValidationError("camera ortho_half_height must be positive");
    }

    Vec3 eye() const {
        const double ct = std::cos(azimuth), st = std::sin(azimuth);
        const double cp = std::cos(elevation), sp = std::sin(elevation);
        return look_at + radius * Vec3(cp * ct, cp * st, sp);
    }

    // World-to-camera rotation; rows are the camera right/down/forward axes.
    // The right axis is horizontal (world xy-plane) and depends only on the
    // azimuth, so the frame stays well defined at elevation pi/2.
    Mat3 rotation() const {
        const double ct = std::cos(azimuth), st = std::sin(azimuth);
        const double cp = std::cos(elevation), sp = std::sin(elevation);
        const Vec3 forward = -Vec3(cp * ct, cp * st, sp);
        const Vec3 right(-st, ct, 0.0);
        const Vec3 down = forward.cross(right);
        Mat3 r;
        r.row(0) = right;
        r.row(1) = down;
        r.row(2) = forward;
        return r;
    }

    Vec3 to_camera(const Vec3& p_world) const { return rotation() * (p_world - eye()); }

    // Pixels per scene unit at the image plane (orthographic).
    double pixel_scale() const { return height / (2.0 * ortho_half_height); }
    // Focal length in pixels (perspective); square pixels, so fx = fy.
    double focal() const { return (height / 2.0) / std::tan(fov_y / 2.0); }

    double cx() const { return width / 2.0; }
    double cy() const { return height / 2.0; }

    // Continuous image coordinates: pixel (ix, iy) covers
    // [ix, ix+1) x [iy, iy+1) with its center at (ix+0.5, iy+0.5).
    // Returned depth is the camera-space forward (z) component.
    Vec3 project_point(const Vec3& p_world) const {
        const Vec3 pc = to_camera(p_world);
        if (projection == Projection::kOrthographic) {
            const double s = pixel_scale();
            return Vec3(cx() + s * pc.x(), cy() + s * pc.y(), pc.z());
        }
        const double f = focal();
        return Vec3(cx() + f * pc.x() / pc.z(), cy() + f * pc.y() / pc.z(), pc.z());
    }
};

}  // namespace splatkit
