#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pvg/backward.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

struct ControlConfig {
  double grad_threshold = 1.7e-4;
  /// Clone/split and prune size thresholds as fractions of the scene radius.
  double clone_scale = 0.01;
  double prune_scale = 0.5;
  int interval_iters = 100;
  int start_iters = 500;
  /// Last iteration with densification; negative means half the run.
  int stop_iters = -1;
  int opacity_reset_iters = 3000;
  double opacity_reset_value = 0.01;
  double split_scale_decay = 0.8;
  double min_opacity_prune = 0.005;
  /// Split children keep the parent's lifespan before this iteration and
  /// shrink it by split_beta_decay from then on.
  int split_beta_shrink_from = 10000;
  double split_beta_decay = 0.8;
  /// When false, the scale factor is fixed at 1 everywhere.
  bool position_aware = true;

  void validate() const;
};

/// gamma(mu): 1 inside twice the radius, |mu| / r - 1 beyond.
double scale_factor(const Vec3& mu, double r);

/// Mean per-view screen-space positional gradient since the last control event.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<std::int32_t> views;

  void resize(std::size_t point_count);
  void accumulate(const GradientBuffer& grads);
  double mean(std::size_t i) const { return views[i] > 0 ? grad_sum[i] / views[i] : 0.0; }
  bool operator==(const DensifyStats&) const = default;
};

struct ControlEvent {
  std::int64_t iteration = 0;
  std::size_t before = 0;
  std::size_t clones = 0;
  std::size_t split_parents = 0;
  std::size_t split_children = 0;
  std::size_t pruned = 0;
  std::size_t total = 0;

  std::string to_string() const;
};

struct ControlResult {
  ControlEvent event;
  /// Previous index of each surviving point, -1 for points created here.
  std::vector<std::int64_t> origin;
};

/// Clone small and split large points whose mean gradient exceeds the
/// threshold, then prune oversized and transparent points. Output order:
/// surviving originals in index order, then clones, then split children.
ControlResult densify_and_prune(std::vector<PvgPoint>& points, const DensifyStats& stats, const GlobalConfig& gcfg,
                                const ControlConfig& cfg, std::int64_t iteration, std::mt19937_64& rng);

/// Prune only, with the same rules as densify_and_prune.
ControlResult prune(std::vector<PvgPoint>& points, const GlobalConfig& gcfg, const ControlConfig& cfg,
                    std::int64_t iteration);

/// Caps every opacity at the reset value on multiples of the reset interval.
/// Returns whether a reset happened.
bool reset_opacity(std::vector<PvgPoint>& points, const ControlConfig& cfg, std::int64_t iteration);

}  // namespace pvg
