// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "splatkit/common.hpp"

namespace splatkit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using FeatureVec = Eigen::Matrix<double, kFeatureDim, 1>;

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// 3D covariance of a gaussian parameterized by rotation + per-axis scales.
inline Mat3 covariance_from(const Quat& rotation, const Vec3& scale) {
    const Mat3 r = rotation.toRotationMatrix();
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

struct QuatScale {
    Quat rotation;
    Vec3 scale;
};

// Decomposes a PSD covariance back into rotation + axis scales. The result is
// deterministic: eigenvalues ascending, right-handed basis, w >= 0 quaternion.
inline QuatScale decompose_covariance(const Mat3& cov) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 lam = es.eigenvalues().cwiseMax(0.0);
    Mat3 v = es.eigenvectors();
    if (v.determinant() < 0.0) v.col(2) *= -1.0;
    Quat q(v);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q, lam.cwiseSqrt()};
}

struct Bounds3 {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    bool valid() const { return (lo.array() <= hi.array()).all(); }
    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 half_size() const { return 0.5 * (hi - lo); }
    void expand(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
};

}  // namespace splatkit
