#include "pvg/adaptive_control.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pvg/camera.hpp"

namespace pvg {

void ControlConfig::validate() const {
  if (!(grad_threshold > 0.0)) throw std::invalid_argument("control.grad_threshold must be positive");
  if (!(clone_scale > 0.0) || !(prune_scale > 0.0)) throw std::invalid_argument("control scale thresholds must be positive");
  if (!(clone_scale < prune_scale)) throw std::invalid_argument("control.clone_scale must be below control.prune_scale");
  if (interval_iters <= 0) throw std::invalid_argument("control.interval_iters must be positive");
  if (opacity_reset_iters <= 0) throw std::invalid_argument("control.opacity_reset_iters must be positive");
  if (!(opacity_reset_value > 0.0 && opacity_reset_value < 1.0))
    throw std::invalid_argument("control.opacity_reset_value must lie in (0, 1)");
  if (!(split_scale_decay > 0.0) || !(split_beta_decay > 0.0))
    throw std::invalid_argument("control split decays must be positive");
  if (!(min_opacity_prune > 0.0 && min_opacity_prune < 1.0))
    throw std::invalid_argument("control.min_opacity_prune must lie in (0, 1)");
}

double scale_factor(const Vec3& mu, double r) {
  const double d = mu.norm();
  return d < 2.0 * r ? 1.0 : d / r - 1.0;
}

void DensifyStats::resize(std::size_t point_count) {
  grad_sum.assign(point_count, 0.0);
  views.assign(point_count, 0);
}

void DensifyStats::accumulate(const GradientBuffer& grads) {
  for (std::size_t i = 0; i < grad_sum.size(); ++i)
    if (grads.visible[i]) {
      grad_sum[i] += grads.view_grad_norm[i];
      ++views[i];
    }
}

std::string ControlEvent::to_string() const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "control iteration=%lld before=%zu clones=%zu splits=%zu split_children=%zu pruned=%zu total=%zu",
                static_cast<long long>(iteration), before, clones, split_parents, split_children, pruned, total);
  return buf;
}

namespace {

double gamma_of(const PvgPoint& p, const GlobalConfig& g, const ControlConfig& c) {
  return c.position_aware ? scale_factor(p.mu - g.scene_center, g.scene_radius) : 1.0;
}

bool should_prune(const PvgPoint& p, const GlobalConfig& g, const ControlConfig& c) {
  return p.scale().maxCoeff() > c.prune_scale * g.scene_radius * gamma_of(p, g, c) ||
         p.opacity() < c.min_opacity_prune;
}

void compact(std::vector<PvgPoint>& points, std::vector<std::int64_t>& origin, const GlobalConfig& g,
             const ControlConfig& c, ControlEvent& ev) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (should_prune(points[i], g, c)) continue;
    points[w] = points[i];
    origin[w] = origin[i];
    ++w;
  }
  ev.pruned = points.size() - w;
  points.resize(w);
  origin.resize(w);
  ev.total = w;
}

}  // namespace

ControlResult densify_and_prune(std::vector<PvgPoint>& points, const DensifyStats& stats, const GlobalConfig& gcfg,
                                const ControlConfig& cfg, std::int64_t iteration, std::mt19937_64& rng) {
  enum Action : std::uint8_t { keep, clone, split };
  const std::size_t n = points.size();
  std::vector<Action> action(n, keep);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    if (!(stats.mean(i) > cfg.grad_threshold)) continue;
    const double limit = cfg.clone_scale * gcfg.scene_radius * gamma_of(points[i], gcfg, cfg);
    action[i] = points[i].scale().maxCoeff() <= limit ? clone : split;
  }

  ControlResult res;
  ControlEvent& ev = res.event;
  ev.iteration = iteration;
  ev.before = n;
  std::vector<PvgPoint> out;
  std::vector<PvgPoint> fresh;
  out.reserve(n);
  res.origin.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (action[i] == split) continue;
    out.push_back(points[i]);
    res.origin.push_back(static_cast<std::int64_t>(i));
    if (action[i] == clone) {
      fresh.push_back(points[i]);
      ++ev.clones;
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  const bool shrink_beta = iteration >= cfg.split_beta_shrink_from;
  for (std::size_t i = 0; i < n; ++i) {
    if (action[i] != split) continue;
    ++ev.split_parents;
    const PvgPoint& parent = points[i];
    const Vec3 s = parent.scale();
    const Mat3 R = quat_to_rotation(parent.rot.normalized());
    const Vec3 vbar = average_velocity(parent, gcfg);
    for (int c = 0; c < 2; ++c) {
      PvgPoint child = parent;
      const Vec3 offset = R * Vec3(s.x() * normal(rng), s.y() * normal(rng), s.z() * normal(rng));
      const double dtau = parent.beta() * normal(rng);
      child.mu = parent.mu + offset + dtau * vbar;
      child.tau = parent.tau + dtau;
      child.log_scale = parent.log_scale.array() + std::log(cfg.split_scale_decay);
      if (shrink_beta) child.log_beta = parent.log_beta + std::log(cfg.split_beta_decay);
      fresh.push_back(child);
      ++ev.split_children;
    }
  }
  for (auto& p : fresh) {
    out.push_back(p);
    res.origin.push_back(-1);
  }
  points = std::move(out);
  compact(points, res.origin, gcfg, cfg, ev);
  return res;
}

ControlResult prune(std::vector<PvgPoint>& points, const GlobalConfig& gcfg, const ControlConfig& cfg,
                    std::int64_t iteration) {
  ControlResult res;
  res.event.iteration = iteration;
  res.event.before = points.size();
  res.origin.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) res.origin[i] = static_cast<std::int64_t>(i);
  compact(points, res.origin, gcfg, cfg, res.event);
  return res;
}

bool reset_opacity(std::vector<PvgPoint>& points, const ControlConfig& cfg, std::int64_t iteration) {
  if (iteration <= 0 || iteration % cfg.opacity_reset_iters != 0) return false;
  const double cap = logit(cfg.opacity_reset_value);
  for (auto& p : points) p.opacity_logit = std::min(p.opacity_logit, cap);
  return true;
}

}  // namespace pvg
