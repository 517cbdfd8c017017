#pragma once

#include <cmath>

#include "pvg/camera.hpp"
#include "pvg/rasterizer.hpp"
#include "pvg/scene_model.hpp"

namespace pvg::detail {

/// Per-view projection of one snapshot, in double precision. Shared by the
/// forward passes and the backward pass.
struct ProjectedSplat {
  Vec3 x_cam;
  Vec2 mean;
  Mat3 rot;    // rotation of the normalized snapshot quaternion
  Mat3 cov3;   // world covariance
  Mat2 cov2;   // projected covariance including dilation
  Mat2 conic;  // inverse of cov2
  int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
};

inline bool project_splat(const GaussianSnapshot& s, const Camera& cam, const RenderSettings& settings,
                          ProjectedSplat& p) {
  if (!(s.alpha0 >= settings.min_alpha0)) return false;
  p.x_cam = world_to_camera(s.center, cam.extrinsics);
  const auto proj = project_point(p.x_cam, cam.intrinsics, settings.near_clip);
  if (!proj) return false;
  p.mean = proj->pixel;
  p.rot = quat_to_rotation(s.cov_rot);
  const Mat3 M = p.rot * s.cov_scale.asDiagonal();
  p.cov3 = M * M.transpose();
  const auto cov2 = project_covariance(p.cov3, p.x_cam, cam.intrinsics, cam.extrinsics, settings.dilation,
                                       settings.near_clip);
  if (!cov2) return false;
  p.cov2 = *cov2;
  const double det = p.cov2.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return false;
  p.conic << p.cov2(1, 1) / det, -p.cov2(0, 1) / det, -p.cov2(1, 0) / det, p.cov2(0, 0) / det;

  // Pixel centers sit at integer + 0.5; widen a hair so binning stays a superset
  // of the per-pixel cutoff test.
  constexpr double kMargin = 1e-3;
  const double rx = settings.sigma_cutoff * std::sqrt(p.cov2(0, 0));
  const double ry = settings.sigma_cutoff * std::sqrt(p.cov2(1, 1));
  const double lo_x = std::ceil(p.mean.x() - rx - 0.5 - kMargin);
  const double hi_x = std::floor(p.mean.x() + rx - 0.5 + kMargin);
  const double lo_y = std::ceil(p.mean.y() - ry - 0.5 - kMargin);
  const double hi_y = std::floor(p.mean.y() + ry - 0.5 + kMargin);
  const double w = cam.intrinsics.width, h = cam.intrinsics.height;
  if (!(hi_x >= 0.0 && lo_x <= w - 1 && hi_y >= 0.0 && lo_y <= h - 1)) return false;
  p.x_min = static_cast<int>(std::max(lo_x, 0.0));
  p.x_max = static_cast<int>(std::min(hi_x, w - 1));
  p.y_min = static_cast<int>(std::max(lo_y, 0.0));
  p.y_max = static_cast<int>(std::min(hi_y, h - 1));
  return true;
}

template <typename Real>
SplatFragment<Real> to_fragment(const GaussianSnapshot& s, const ProjectedSplat& p, const Mat3& cam_rotation) {
  SplatFragment<Real> f;
  f.mean_x = static_cast<Real>(p.mean.x());
  f.mean_y = static_cast<Real>(p.mean.y());
  f.conic_a = static_cast<Real>(p.conic(0, 0));
  f.conic_b = static_cast<Real>(p.conic(0, 1));
  f.conic_c = static_cast<Real>(p.conic(1, 1));
  f.alpha0 = static_cast<Real>(s.alpha0);
  const Vec3 vcam = cam_rotation * s.avg_vel;
  for (int k = 0; k < 3; ++k) {
    f.color[k] = static_cast<Real>(s.color[k]);
    f.vel_cam[k] = static_cast<Real>(vcam[k]);
  }
  f.depth = static_cast<Real>(p.x_cam.z());
  f.source_index = s.source_index;
  f.x_min = p.x_min;
  f.x_max = p.x_max;
  f.y_min = p.y_min;
  f.y_max = p.y_max;
  return f;
}

}  // namespace pvg::detail
