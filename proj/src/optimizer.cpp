#include "pvg/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace pvg {

void AdamState::resize(std::size_t point_count, std::int64_t texel_count) {
  m.assign(point_count, PointGradient{});
  v.assign(point_count, PointGradient{});
  cube_m.assign(static_cast<std::size_t>(texel_count) * 3, 0.0);
  cube_v.assign(static_cast<std::size_t>(texel_count) * 3, 0.0);
}

void AdamState::remap(std::span<const std::int64_t> origin) {
  std::vector<PointGradient> nm(origin.size()), nv(origin.size());
  for (std::size_t i = 0; i < origin.size(); ++i)
    if (origin[i] >= 0) {
      nm[i] = m[origin[i]];
      nv[i] = v[origin[i]];
    }
  m = std::move(nm);
  v = std::move(nv);
}

void AdamState::zero_opacity_moments() {
  for (auto& g : m) g.opacity_logit = 0.0;
  for (auto& g : v) g.opacity_logit = 0.0;
}

namespace {

struct Update {
  double c1, c2, beta1, beta2, eps;

  void operator()(double& param, double grad, double& m, double& v, double lr) const {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    param -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
  }
  template <typename V>
  void operator()(V& param, const V& grad, V& m, V& v, double lr) const {
    for (int k = 0; k < param.size(); ++k) (*this)(param[k], grad[k], m[k], v[k], lr);
  }
};

}  // namespace

void adam_step(std::vector<PvgPoint>& points, CubeMap* cube, const GradientBuffer& grads, AdamState& state,
               const LearningRates& lr, const AdamConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Update up{1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t), cfg.beta1, cfg.beta2, cfg.eps};

  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    PvgPoint& p = points[i];
    const PointGradient& g = grads.points[i];
    PointGradient& m = state.m[i];
    PointGradient& v = state.v[i];
    up(p.mu, g.mu, m.mu, v.mu, lr.mu);
    up(p.rot, g.rot, m.rot, v.rot, lr.rot);
    up(p.log_scale, g.log_scale, m.log_scale, v.log_scale, lr.log_scale);
    up(p.opacity_logit, g.opacity_logit, m.opacity_logit, v.opacity_logit, lr.opacity);
    up(p.color, g.color, m.color, v.color, lr.color);
    up(p.tau, g.tau, m.tau, v.tau, lr.tau);
    up(p.log_beta, g.log_beta, m.log_beta, v.log_beta, lr.log_beta);
    up(p.vel, g.vel, m.vel, v.vel, lr.vel);
    const double qn = p.rot.norm();
    p.rot = qn > 0.0 ? Quat(p.rot / qn) : identity_quat();
    p.color = p.color.cwiseMax(0.0).cwiseMin(1.0);
  }

  if (cube == nullptr || cube->empty()) return;
  auto& texels = cube->values();
  for (std::size_t k = 0; k < texels.size(); ++k) {
    up(texels[k], grads.cube[k], state.cube_m[k], state.cube_v[k], lr.cube);
    texels[k] = std::clamp(texels[k], 0.0, 1.0);
  }
}

}  // namespace pvg
