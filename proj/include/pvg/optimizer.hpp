#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvg/backward.hpp"
#include "pvg/cubemap.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// Step sizes for one iteration, per parameter class.
struct LearningRates {
  double mu = 1.6e-4;
  double rot = 0.001;
  double log_scale = 0.005;
  double opacity = 0.005;
  double color = 0.0025;
  double tau = 1.6e-4;
  double log_beta = 0.02;
  double vel = 1e-3;
  double cube = 0.01;
};

/// First and second moments laid out like the parameters they track.
struct AdamState {
  std::vector<PointGradient> m, v;
  std::vector<double> cube_m, cube_v;
  std::int64_t step = 0;

  void resize(std::size_t point_count, std::int64_t texel_count);
  /// Rebuilds the per-point moments after the point set changed. `origin[i]`
  /// is the previous index of point i, or -1 for a new point (zero moments).
  void remap(std::span<const std::int64_t> origin);
  void zero_opacity_moments();
  bool operator==(const AdamState&) const = default;
};

/// One Adam update of every point and texel. Afterwards quaternions are
/// renormalized and colors and texels clamped to [0, 1].
void adam_step(std::vector<PvgPoint>& points, CubeMap* cube, const GradientBuffer& grads, AdamState& state,
               const LearningRates& lr, const AdamConfig& cfg = {});

}  // namespace pvg
