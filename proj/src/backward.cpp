#include "pvg/backward.hpp"

#include <algorithm>
#include <cmath>

#include "pvg/camera.hpp"
#include "pvg/detail/projection.hpp"

namespace pvg {

void GradientBuffer::reset(std::size_t point_count, std::int64_t texel_count) {
  points.assign(point_count, PointGradient{});
  cube.assign(static_cast<std::size_t>(texel_count) * 3, 0.0);
  view_grad_norm.assign(point_count, 0.0);
  visible.assign(point_count, 0);
}

bool GradientBuffer::all_finite() const {
  for (const auto& g : points)
    if (!g.mu.allFinite() || !g.rot.allFinite() || !g.log_scale.allFinite() || !std::isfinite(g.opacity_logit) ||
        !g.color.allFinite() || !std::isfinite(g.tau) || !std::isfinite(g.log_beta) || !g.vel.allFinite())
      return false;
  for (double v : cube)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

// dL/d(fragment attribute) for one bucket entry or one whole fragment.
struct FragmentGradient {
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // a, b, c of [[a, b], [b, c]]
  double alpha0 = 0;
  double color[3] = {0, 0, 0};
  double depth = 0;
  double vel_cam[3] = {0, 0, 0};

  FragmentGradient& operator+=(const FragmentGradient& o) {
    for (int k = 0; k < 2; ++k) mean[k] += o.mean[k];
    for (int k = 0; k < 3; ++k) {
      conic[k] += o.conic[k];
      color[k] += o.color[k];
      vel_cam[k] += o.vel_cam[k];
    }
    alpha0 += o.alpha0;
    depth += o.depth;
    return *this;
  }
};

template <typename Real>
void backward_tile(const Rasterization<Real>& raster, int tile_id, const RenderSettings& settings,
                   const RenderOutput<Real>& out, const PixelGradients<Real>& pg, const BackwardOptions& options,
                   std::vector<FragmentGradient>& entry_grads) {
  const TileBins& bins = raster.bins;
  const auto list = bins.tile(tile_id);
  if (list.empty()) return;
  FragmentGradient* slots = entry_grads.data() + bins.offsets[tile_id];
  const int ts = bins.tile_size;
  const int x0 = (tile_id % bins.tiles_x) * ts;
  const int y0 = (tile_id / bins.tiles_x) * ts;
  const int x1 = std::min(x0 + ts, out.width());
  const int y1 = std::min(y0 + ts, out.height());
  const Real cutoff2 = static_cast<Real>(settings.sigma_cutoff * settings.sigma_cutoff);
  const double clamp = settings.alpha_clamp;

  const int tw = x1 - x0;
  const int count = tw * (y1 - y0);
  if (count <= 0) return;

  // Per-pixel state for a fragment-major back-to-front walk. Every slot still
  // receives its pixel contributions in row-major order.
  struct PixelState {
    int consumed = 0;
    double g_color[3], g_vel[3], g_opacity, g_depth;
    double T;
    // Contributions of everything behind the current entry, relative to the
    // transmittance just behind it.
    double acc_color[3] = {0, 0, 0}, acc_vel[3] = {0, 0, 0};
    double acc_opacity = 0.0, acc_depth = 0.0;
  };
  std::vector<PixelState> state(count);
  int deepest = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      PixelState& s = state[(y - y0) * tw + (x - x0)];
      s.consumed = out.contributors.at(y, x);
      if (s.consumed == 0) continue;
      deepest = std::max(deepest, s.consumed);
      const double opacity = out.opacity.at(y, x);
      s.g_opacity = pg.opacity.at(y, x);
      s.g_depth = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        s.g_color[ch] = pg.color.at(y, x, ch);
        s.g_opacity -= s.g_color[ch] * out.sky.at(y, x, ch);
        s.g_vel[ch] = options.velocity_path ? static_cast<double>(pg.velocity.at(y, x, ch)) : 0.0;
      }
      if (options.depth_path && opacity > 0.0) {
        const double gd = pg.depth.at(y, x);
        s.g_depth = gd / opacity;
        s.g_opacity -= gd * out.depth_sum.at(y, x) / (opacity * opacity);
      }
      s.T = out.transmittance.at(y, x);
    }

  for (int k = deepest - 1; k >= 0; --k) {
    const auto& f = raster.fragments[list[k]];
    const int fx0 = std::max(f.x_min, x0), fx1 = std::min(f.x_max, x1 - 1);
    const int fy0 = std::max(f.y_min, y0), fy1 = std::min(f.y_max, y1 - 1);
    FragmentGradient& slot = slots[k];
    const double a = f.conic_a, b = f.conic_b, c = f.conic_c;
    for (int y = fy0; y <= fy1; ++y) {
      const Real dyr = static_cast<Real>(y) + Real(0.5) - f.mean_y;
      const double dy = y + 0.5 - f.mean_y;
      for (int x = fx0; x <= fx1; ++x) {
        PixelState& s = state[(y - y0) * tw + (x - x0)];
        if (s.consumed <= k) continue;
        const Real dxr = static_cast<Real>(x) + Real(0.5) - f.mean_x;
        const Real qr = f.conic_a * dxr * dxr + Real(2) * f.conic_b * dxr * dyr + f.conic_c * dyr * dyr;
        if (qr > cutoff2) continue;

        const double dx = x + 0.5 - f.mean_x;
        const double q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        const double G = std::exp(-0.5 * q);
        const double raw = f.alpha0 * G;
        const bool clamped = raw > clamp;
        const double alpha = clamped ? clamp : raw;
        s.T /= (1.0 - alpha);
        const double w = s.T * alpha;

        double d_alpha = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          slot.color[ch] += w * s.g_color[ch];
          slot.vel_cam[ch] += w * s.g_vel[ch];
          d_alpha += (f.color[ch] - s.acc_color[ch]) * s.g_color[ch] + (f.vel_cam[ch] - s.acc_vel[ch]) * s.g_vel[ch];
        }
        slot.depth += w * s.g_depth;
        d_alpha += (1.0 - s.acc_opacity) * s.g_opacity + (f.depth - s.acc_depth) * s.g_depth;
        d_alpha *= s.T;

        for (int ch = 0; ch < 3; ++ch) {
          s.acc_color[ch] = alpha * f.color[ch] + (1.0 - alpha) * s.acc_color[ch];
          s.acc_vel[ch] = alpha * f.vel_cam[ch] + (1.0 - alpha) * s.acc_vel[ch];
        }
        s.acc_opacity = alpha + (1.0 - alpha) * s.acc_opacity;
        s.acc_depth = alpha * f.depth + (1.0 - alpha) * s.acc_depth;

        if (clamped) continue;
        slot.alpha0 += d_alpha * G;
        const double d_q = -0.5 * d_alpha * raw;
        slot.mean[0] -= 2.0 * d_q * (a * dx + b * dy);
        slot.mean[1] -= 2.0 * d_q * (b * dx + c * dy);
        slot.conic[0] += d_q * dx * dx;
        slot.conic[1] += d_q * 2.0 * dx * dy;
        slot.conic[2] += d_q * dy * dy;
      }
    }
  }
}

// d R(q) / d q contracted with G = dL/dR, for the (w, x, y, z) layout.
Quat rotation_vjp(const Quat& q, const Mat3& G) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Quat d;
  d[0] = 2.0 * (-G(0, 1) * z + G(0, 2) * y + G(1, 0) * z - G(1, 2) * x - G(2, 0) * y + G(2, 1) * x);
  d[1] = 2.0 * (G(0, 1) * y + G(0, 2) * z + G(1, 0) * y - 2.0 * G(1, 1) * x - G(1, 2) * w + G(2, 0) * z +
                G(2, 1) * w - 2.0 * G(2, 2) * x);
  d[2] = 2.0 * (-2.0 * G(0, 0) * y + G(0, 1) * x + G(0, 2) * w + G(1, 0) * x + G(1, 2) * z - G(2, 0) * w +
                G(2, 1) * z - 2.0 * G(2, 2) * y);
  d[3] = 2.0 * (-2.0 * G(0, 0) * z - G(0, 1) * w + G(0, 2) * x + G(1, 0) * w - 2.0 * G(1, 1) * z + G(1, 2) * y +
                G(2, 0) * x + G(2, 1) * y);
  return d;
}

void fragment_to_point(const PvgPoint& point, const GaussianSnapshot& snap, const detail::ProjectedSplat& proj,
                       const Camera& cam, double t, double dt, const GlobalConfig& cfg, const FragmentGradient& fg,
                       PointGradient& out) {
  const Mat3& W = cam.extrinsics.rotation;
  const auto& intr = cam.intrinsics;
  const Vec3& xc = proj.x_cam;
  const double iz = 1.0 / xc.z();
  const double iz2 = iz * iz, iz3 = iz2 * iz;

  Vec3 d_xcam = Vec3::Zero();
  d_xcam.x() += fg.mean[0] * intr.fx * iz;
  d_xcam.y() += fg.mean[1] * intr.fy * iz;
  d_xcam.z() += -fg.mean[0] * intr.fx * xc.x() * iz2 - fg.mean[1] * intr.fy * xc.y() * iz2;
  d_xcam.z() += fg.depth;

  // conic -> projected covariance
  const Mat2& Q = proj.conic;
  Mat2 Gq;
  Gq << fg.conic[0], 0.5 * fg.conic[1], 0.5 * fg.conic[1], fg.conic[2];
  const Mat2 G2 = -Q * Gq * Q;

  // projected covariance -> world covariance and the Jacobian
  const Eigen::Matrix<double, 2, 3> J = projection_jacobian(xc, intr);
  const Eigen::Matrix<double, 2, 3> Tm = J * W;
  const Mat3 G3 = Tm.transpose() * G2 * Tm;
  const Eigen::Matrix<double, 2, 3> dJ = 2.0 * G2 * Tm * proj.cov3 * W.transpose();
  d_xcam.x() += dJ(0, 2) * (-intr.fx * iz2);
  d_xcam.y() += dJ(1, 2) * (-intr.fy * iz2);
  d_xcam.z() += dJ(0, 0) * (-intr.fx * iz2) + dJ(0, 2) * (2.0 * intr.fx * xc.x() * iz3) +
                dJ(1, 1) * (-intr.fy * iz2) + dJ(1, 2) * (2.0 * intr.fy * xc.y() * iz3);

  // world covariance -> scale and rotation
  const Vec3 s = snap.cov_scale;
  const Mat3 M = proj.rot * s.asDiagonal();
  const Mat3 dM = 2.0 * G3 * M;
  for (int k = 0; k < 3; ++k) out.log_scale[k] += s[k] * dM.col(k).dot(proj.rot.col(k));
  const Mat3 dR = dM * s.asDiagonal();
  const double qn = point.rot.norm();
  const Quat qhat = point.rot / qn;
  const Quat dqhat = rotation_vjp(qhat, dR);
  out.rot += (dqhat - qhat * qhat.dot(dqhat)) / qn;

  const Vec3 d_center = W.transpose() * d_xcam;
  const Vec3 d_avg = W.transpose() * Vec3(fg.vel_cam[0], fg.vel_cam[1], fg.vel_cam[2]);
  const TemporalJacobian tj = temporal_jacobian(point, t, dt, cfg);

  out.mu += d_center;
  out.vel += tj.dcenter_dvel * d_center + tj.davg_dvel * d_avg;
  out.tau += tj.dcenter_dtau.dot(d_center) + tj.dalpha_dtau * fg.alpha0;
  out.log_beta += tj.dcenter_dlog_beta.dot(d_center) + tj.dalpha_dlog_beta * fg.alpha0 + tj.davg_dlog_beta.dot(d_avg);
  out.opacity_logit += tj.dalpha_dlogit * fg.alpha0;
  for (int k = 0; k < 3; ++k) out.color[k] += fg.color[k];
}

}  // namespace

template <typename Real>
void backward(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t, double dt,
              const GlobalConfig& cfg, const RenderSettings& settings, const RenderResult<Real>& fwd,
              const PixelGradients<Real>& pixel_grads, GradientBuffer& grads, const BackwardOptions& options) {
  const auto& raster = fwd.raster;
  const auto& out = fwd.out;
  const TileBins& bins = raster.bins;

  std::vector<FragmentGradient> entry_grads(bins.entries.size());
  const int tiles = bins.tile_count();
#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < tiles; ++tile)
    backward_tile(raster, tile, settings, out, pixel_grads, options, entry_grads);

  // Fixed-order reduction keeps results independent of the worker count.
  std::vector<FragmentGradient> frag_grads(raster.fragments.size());
  for (std::size_t e = 0; e < bins.entries.size(); ++e) frag_grads[bins.entries[e]] += entry_grads[e];

  const auto nfrag = static_cast<std::int64_t>(raster.fragments.size());
  const double half_w = 0.5 * cam.intrinsics.width, half_h = 0.5 * cam.intrinsics.height;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < nfrag; ++i) {
    const auto idx = static_cast<std::size_t>(raster.fragments[i].source_index);
    const PvgPoint& point = points[idx];
    const GaussianSnapshot snap = estimate_state(point, t, dt, cfg, static_cast<std::int64_t>(idx));
    detail::ProjectedSplat proj;
    if (!detail::project_splat(snap, cam, settings, proj)) continue;
    const FragmentGradient& fg = frag_grads[i];
    fragment_to_point(point, snap, proj, cam, t, dt, cfg, fg, grads.points[idx]);
    grads.visible[idx] = 1;
    grads.view_grad_norm[idx] = std::hypot(fg.mean[0] * half_w, fg.mean[1] * half_h);
  }

  if (cube == nullptr || cube->empty() || !settings.sky) return;
  constexpr double kSkyOpaque = 1.0 - 1e-4;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const double rest = 1.0 - static_cast<double>(out.opacity.at(y, x));
      if (!(1.0 - rest < kSkyOpaque)) continue;
      const CubeSample sample = sample_cubemap(*cube, sky_ray(x, y, cam, settings));
      for (int k = 0; k < sample.count; ++k) {
        const double w = sample.weight[k] * rest;
        if (w == 0.0) continue;
        for (int ch = 0; ch < 3; ++ch)
          grads.cube[3 * sample.texel[k] + ch] += w * static_cast<double>(pixel_grads.color.at(y, x, ch));
      }
    }
}

template <typename Real>
LossBreakdown loss_and_gradients(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                                 double dt, const GlobalConfig& cfg, const RenderSettings& settings,
                                 const Supervision& sup, const LossWeights& weights, GradientBuffer& grads,
                                 const BackwardOptions& options, RenderResult<Real>* forward_out) {
  const auto snaps = snapshot_all(points, t, dt, cfg);
  RenderResult<Real> fwd = render_snapshots<Real>(snaps, cube, cam, settings);
  PixelGradients<Real> pg;
  const LossBreakdown loss = evaluate_losses(fwd.out, sup, weights, &pg);
  backward(points, cube, cam, t, dt, cfg, settings, fwd, pg, grads, options);
  if (forward_out) *forward_out = std::move(fwd);
  return loss;
}

#define PVG_INSTANTIATE(Real)                                                                                    \
  template void backward<Real>(std::span<const PvgPoint>, const CubeMap*, const Camera&, double, double,         \
                               const GlobalConfig&, const RenderSettings&, const RenderResult<Real>&,            \
                               const PixelGradients<Real>&, GradientBuffer&, const BackwardOptions&);            \
  template LossBreakdown loss_and_gradients<Real>(std::span<const PvgPoint>, const CubeMap*, const Camera&,      \
                                                  double, double, const GlobalConfig&, const RenderSettings&,    \
                                                  const Supervision&, const LossWeights&, GradientBuffer&,       \
                                                  const BackwardOptions&, RenderResult<Real>*);

PVG_INSTANTIATE(float)
PVG_INSTANTIATE(double)
#undef PVG_INSTANTIATE

}  // namespace pvg
