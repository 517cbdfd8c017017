#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvg/losses.hpp"
#include "pvg/rasterizer.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

struct PointGradient {
  Vec3 mu = Vec3::Zero();
  Quat rot = Quat::Zero();
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();
  double tau = 0.0;
  double log_beta = 0.0;
  Vec3 vel = Vec3::Zero();

  bool operator==(const PointGradient&) const = default;
};

struct GradientBuffer {
  std::vector<PointGradient> points;
  std::vector<double> cube;            // 3 per texel, CubeMap::values() layout
  std::vector<double> view_grad_norm;  // |dL/d(mean)| in normalized device units, this view
  std::vector<std::uint8_t> visible;   // point produced a fragment in this view

  void reset(std::size_t point_count, std::int64_t texel_count);
  bool all_finite() const;
};

struct BackwardOptions {
  /// Propagate the depth and velocity channel gradients into geometry.
  bool depth_path = true;
  bool velocity_path = true;
};

/// Reverse pass of render(points, cube, cam, t) with states from
/// estimate_state(., t, dt). `fwd` must be the forward result for exactly
/// these inputs. Gradients are added into `grads`, which must already be
/// sized for the point set and cube.
template <typename Real>
void backward(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t, double dt,
              const GlobalConfig& cfg, const RenderSettings& settings, const RenderResult<Real>& fwd,
              const PixelGradients<Real>& pixel_grads, GradientBuffer& grads, const BackwardOptions& options = {});

/// Forward render, loss evaluation and backward pass in one call.
template <typename Real>
LossBreakdown loss_and_gradients(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                                 double dt, const GlobalConfig& cfg, const RenderSettings& settings,
                                 const Supervision& sup, const LossWeights& weights, GradientBuffer& grads,
                                 const BackwardOptions& options = {}, RenderResult<Real>* forward_out = nullptr);

}  // namespace pvg
