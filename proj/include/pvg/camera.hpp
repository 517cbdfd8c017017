#pragma once

#include <optional>
#include <string>

#include "pvg/image.hpp"
#include "pvg/types.hpp"

namespace pvg {

inline constexpr double kDefaultNearClip = 0.2;
/// Screen-space low-pass floor added to each projected covariance diagonal (px^2).
inline constexpr double kCovarianceDilation = 0.3;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const;
  /// Intrinsics for an image downsampled by an integer factor.
  CameraIntrinsics downsampled(int factor) const;
};

/// World-to-camera rigid transform, +z forward, +y down, image origin top-left.
struct CameraExtrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate(double tolerance = 1e-6) const;
  CameraExtrinsics inverse() const;
  Vec3 camera_center() const { return -rotation.transpose() * translation; }
  /// Extrinsics of a camera at `eye` looking at `target`.
  static CameraExtrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, -1, 0));
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
};

/// A training or evaluation view with its supervision.
struct CameraFrame {
  std::string name;
  int camera_id = 0;
  double timestamp = 0.0;
  Camera camera;
  ImageF image;             // H x W x 3 linear RGB
  ImageF sparse_inv_depth;  // H x W, 0 = no sample
  std::optional<ImageF> sky_mask;  // H x W, 1 = sky

  void validate() const;
};

Vec3 world_to_camera(const Vec3& x_world, const CameraExtrinsics& ext);

struct PixelProjection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Pinhole projection; nullopt when the point is not in front of the near plane.
std::optional<PixelProjection> project_point(const Vec3& x_cam, const CameraIntrinsics& intr,
                                             double near_clip = kDefaultNearClip);

/// Jacobian of the pinhole map (x, y, z) -> (u, v) evaluated at x_cam.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& x_cam, const CameraIntrinsics& intr);

Mat3 quat_to_rotation(const Quat& q);

/// R diag(s^2) R^T.
Mat3 build_covariance(const Vec3& scale, const Quat& rot);

/// J W cov W^T J^T plus `dilation` on the diagonal; nullopt behind the near plane.
std::optional<Mat2> project_covariance(const Mat3& cov, const Vec3& x_cam, const CameraIntrinsics& intr,
                                       const CameraExtrinsics& ext, double dilation = kCovarianceDilation,
                                       double near_clip = kDefaultNearClip);

/// Unit world-space ray direction through continuous pixel coordinates (u, v).
Vec3 pixel_ray(double u, double v, const Camera& cam);

}  // namespace pvg
