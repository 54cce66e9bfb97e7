// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "splatkit/camera.hpp"
#include "splatkit/gaussian.hpp"
#include "splatkit/math.hpp"

namespace splatkit {

struct Projected2D {
    Vec2 mean = Vec2::Zero();   // continuous image coordinates
    Mat2 cov = Mat2::Identity();  // image-plane covariance, pixel units
    double depth = 0.0;           // camera-space forward component
    bool culled = false;          // behind the camera under perspective
};

// EWA splatting: maps a 3D gaussian to its image-plane footprint. The 3D
// covariance is pushed through the (locally affine) projection Jacobian:
// cov2d = J W Sigma W^T J^T with W the world-to-camera rotation.
inline Projected2D project_gaussian(const Gaussian& g, const CameraPose& cam) {
    Projected2D out;
    const Mat3 w = cam.rotation();
    const Vec3 pc = w * (g.position - cam.eye());
    const Mat3 cov_cam = w * g.covariance() * w.transpose();
    out.depth = pc.z();

    Eigen::Matrix<double, 2, 3> j;
    if (cam.projection == Projection::kOrthographic) {
        const double s = cam.pixel_scale();
        j << s, 0, 0,
             0, s, 0;
        out.mean = Vec2(cam.cx() + s * pc.x(), cam.cy() + s * pc.y());
    } else {
        if (pc.z() <= 0.0) {
            out.culled = true;
            return out;
        }
        const double f = cam.focal();
        const double tz = pc.z();
        j << f / tz, 0, -f * pc.x() / (tz * tz),
             0, f / tz, -f * pc.y() / (tz * tz);
        out.mean = Vec2(cam.cx() + f * pc.x() / tz, cam.cy() + f * pc.y() / tz);
    }
    out.cov = j * cov_cam * j.transpose();
    return out;
}

}  // namespace splatkit
