#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pvg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Quaternions are stored as (w, x, y, z) in a plain 4-vector so that the
// optimizer can treat them like any other parameter block.
using Quat = Vec4;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

}  // namespace pvg
