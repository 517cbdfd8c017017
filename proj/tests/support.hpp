#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "pvg/backward.hpp"
#include "pvg/camera.hpp"
#include "pvg/cubemap.hpp"
#include "pvg/losses.hpp"
#include "pvg/rasterizer.hpp"
#include "pvg/scene_model.hpp"

namespace pvg::testing {

inline Camera small_camera(int w = 16, int h = 16, double focal = 16.0) {
  Camera cam;
  cam.intrinsics = {focal, focal, 0.5 * w, 0.5 * h, w, h};
  return cam;
}

inline Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

/// Points spread in front of an identity camera so most of them land on a
/// w x h image with focal length ~w.
inline std::vector<PvgPoint> random_points(std::mt19937_64& rng, int count, double t_center = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PvgPoint> pts(count);
  for (auto& p : pts) {
    const double z = 2.0 + 2.0 * u(rng);
    p.mu = Vec3((u(rng) - 0.5) * 0.8 * z, (u(rng) - 0.5) * 0.8 * z, z);
    p.rot = random_quat(rng) * (0.5 + u(rng));
    p.log_scale = Vec3(std::log(0.15 + 0.3 * u(rng)), std::log(0.15 + 0.3 * u(rng)), std::log(0.15 + 0.3 * u(rng)));
    p.opacity_logit = logit(0.25 + 0.45 * u(rng));
    p.color = Vec3(0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng));
    p.tau = t_center + (u(rng) - 0.5) * 0.1;
    p.log_beta = std::log(0.2 + 0.4 * u(rng));
    // One sign per axis keeps every rendered velocity component away from
    // zero, where the velocity loss has its kink.
    p.vel = Vec3(0.1 + 0.5 * u(rng), 0.1 + 0.5 * u(rng), 0.1 + 0.5 * u(rng));
  }
  return pts;
}

inline CubeMap random_cube(std::mt19937_64& rng, int resolution = 2) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  CubeMap cube(resolution);
  for (auto& v : cube.values()) v = u(rng);
  return cube;
}

/// Settings with every discontinuity of the forward pass pushed out of reach,
/// so the rendered channels are smooth functions of the parameters.
inline RenderSettings smooth_settings() {
  RenderSettings s;
  s.sigma_cutoff = 1e3;
  s.min_alpha0 = 0.0;
  s.min_transmittance = 0.0;
  return s;
}

/// Supervision built from a render so that every loss sits away from its
/// kinks: color offsets of at least 0.05, depth samples only where the
/// opacity is well away from the gate, velocity channel non-zero.
struct SmoothTargets {
  ImageF image, inv_depth, sky;

  Supervision supervision() const { return {&image, &inv_depth, &sky}; }
};

inline SmoothTargets smooth_targets(const RenderOutput<double>& out, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int h = out.height(), w = out.width();
  SmoothTargets tg{ImageF(h, w, 3), ImageF(h, w, 1), ImageF(h, w, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double off = (0.05 + 0.1 * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
        tg.image.at(y, x, c) = static_cast<float>(out.color.at(y, x, c) + off);
      }
      const double o = out.opacity.at(y, x);
      if (std::abs(o - kDepthOpacityGate) > 0.05 && u(rng) < 0.5) {
        const double inv = 1.0 / out.depth.at(y, x);
        const double off = (0.02 + 0.05 * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
        tg.inv_depth.at(y, x) = static_cast<float>(std::max(0.01, inv + off));
      }
      tg.sky.at(y, x) = u(rng) < 0.3 ? 1.0f : 0.0f;
    }
  return tg;
}

/// Brute force: every pixel tests every snapshot and composites them after
/// one global (depth, index) sort.
inline RenderOutput<double> brute_force(const std::vector<GaussianSnapshot>& snaps, const CubeMap* cube, const Camera& cam,
                                 const RenderSettings& st) {
  struct Item {
    double z;
    std::int64_t idx;
    Vec2 mean;
    Mat2 inv;
    double alpha0;
    Vec3 color, vel;
  };
  std::vector<Item> items;
  for (const auto& s : snaps) {
    if (s.alpha0 < st.min_alpha0) continue;
    const Vec3 xc = world_to_camera(s.center, cam.extrinsics);
    const auto p = project_point(xc, cam.intrinsics, st.near_clip);
    if (!p) continue;
    const auto c2 = project_covariance(build_covariance(s.cov_scale, s.cov_rot), xc, cam.intrinsics, cam.extrinsics,
                                       st.dilation, st.near_clip);
    if (!c2) continue;
    items.push_back({xc.z(), s.source_index, p->pixel, c2->inverse(), s.alpha0, s.color,
                     cam.extrinsics.rotation * s.avg_vel});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.z != b.z ? a.z < b.z : a.idx < b.idx;
  });
  const int h = cam.intrinsics.height, w = cam.intrinsics.width;
  RenderOutput<double> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double T = 1, o = 0, zs = 0;
      Vec3 c = Vec3::Zero(), v = Vec3::Zero();
      for (const auto& it : items) {
        const Vec2 d = Vec2(x + 0.5, y + 0.5) - it.mean;
        const double q = d.dot(it.inv * d);
        if (q > st.sigma_cutoff * st.sigma_cutoff) continue;
        const double a = std::min(st.alpha_clamp, it.alpha0 * std::exp(-0.5 * q));
        if (T * (1 - a) < st.min_transmittance) break;
        c += T * a * it.color;
        v += T * a * it.vel;
        o += T * a;
        zs += T * a * it.z;
        T *= 1 - a;
      }
      Vec3 sky = Vec3::Zero();
      if (cube) sky = sample_cubemap(*cube, pixel_ray(x + 0.5, y + 0.5, cam)).color;
      for (int ch = 0; ch < 3; ++ch) {
        out.color.at(y, x, ch) = c[ch] + (1 - o) * sky[ch];
        out.velocity.at(y, x, ch) = v[ch];
      }
      out.opacity.at(y, x) = o;
      out.depth.at(y, x) = o > 0 ? zs / o : 0;
    }
  return out;
}

inline double max_diff(const Image<double>& a, const Image<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace pvg::testing
