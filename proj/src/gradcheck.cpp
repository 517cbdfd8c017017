#include "pvg/gradcheck.hpp"

#include <stdexcept>

namespace pvg {

const char* to_string(ParamClass cls) {
  switch (cls) {
    case ParamClass::mu: return "mu";
    case ParamClass::rot: return "rot";
    case ParamClass::log_scale: return "log_scale";
    case ParamClass::opacity_logit: return "opacity";
    case ParamClass::color: return "color";
    case ParamClass::tau: return "tau";
    case ParamClass::log_beta: return "log_beta";
    case ParamClass::vel: return "vel";
    case ParamClass::cube: return "cube";
  }
  return "?";
}

int component_count(ParamClass cls) {
  switch (cls) {
    case ParamClass::rot: return 4;
    case ParamClass::opacity_logit:
    case ParamClass::tau:
    case ParamClass::log_beta: return 1;
    default: return 3;
  }
}

double& param_value(std::vector<PvgPoint>& points, CubeMap& cube, const ParamRef& ref) {
  if (ref.cls == ParamClass::cube) return cube.values().at(3 * ref.index + ref.component);
  PvgPoint& p = points.at(ref.index);
  switch (ref.cls) {
    case ParamClass::mu: return p.mu[ref.component];
    case ParamClass::rot: return p.rot[ref.component];
    case ParamClass::log_scale: return p.log_scale[ref.component];
    case ParamClass::opacity_logit: return p.opacity_logit;
    case ParamClass::color: return p.color[ref.component];
    case ParamClass::tau: return p.tau;
    case ParamClass::log_beta: return p.log_beta;
    case ParamClass::vel: return p.vel[ref.component];
    case ParamClass::cube: break;
  }
  throw std::logic_error("unreachable parameter class");
}

double gradient_value(const GradientBuffer& grads, const ParamRef& ref) {
  if (ref.cls == ParamClass::cube) return grads.cube.at(3 * ref.index + ref.component);
  const PointGradient& g = grads.points.at(ref.index);
  switch (ref.cls) {
    case ParamClass::mu: return g.mu[ref.component];
    case ParamClass::rot: return g.rot[ref.component];
    case ParamClass::log_scale: return g.log_scale[ref.component];
    case ParamClass::opacity_logit: return g.opacity_logit;
    case ParamClass::color: return g.color[ref.component];
    case ParamClass::tau: return g.tau;
    case ParamClass::log_beta: return g.log_beta;
    case ParamClass::vel: return g.vel[ref.component];
    case ParamClass::cube: break;
  }
  throw std::logic_error("unreachable parameter class");
}

std::vector<ParamRef> all_params(std::size_t point_count, const CubeMap* cube) {
  static constexpr ParamClass kPointClasses[] = {ParamClass::mu,    ParamClass::rot,      ParamClass::log_scale,
                                                 ParamClass::opacity_logit, ParamClass::color, ParamClass::tau,
                                                 ParamClass::log_beta, ParamClass::vel};
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < point_count; ++i)
    for (ParamClass cls : kPointClasses)
      for (int c = 0; c < component_count(cls); ++c) refs.push_back({cls, i, c});
  if (cube)
    for (std::int64_t i = 0; i < cube->texel_count(); ++i)
      for (int c = 0; c < 3; ++c) refs.push_back({ParamClass::cube, static_cast<std::size_t>(i), c});
  return refs;
}

double finite_difference_oracle(const SceneLoss& loss, std::vector<PvgPoint> points, CubeMap cube,
                                const ParamRef& ref, double step) {
  double& x = param_value(points, cube, ref);
  const double x0 = x;
  x = x0 + step;
  const double up = loss(points, cube);
  x = x0 - step;
  const double down = loss(points, cube);
  x = x0;
  return (up - down) / (2.0 * step);
}

SceneLoss render_loss(const Camera& cam, double t, double dt, const GlobalConfig& cfg, const RenderSettings& settings,
                      const Supervision& sup, const LossWeights& weights) {
  return [=](std::span<const PvgPoint> points, const CubeMap& cube) {
    const auto snaps = snapshot_all(points, t, dt, cfg);
    const auto fwd = render_snapshots<double>(snaps, cube.empty() ? nullptr : &cube, cam, settings);
    return evaluate_losses(fwd.out, sup, weights, static_cast<PixelGradients<double>*>(nullptr)).total;
  };
}

}  // namespace pvg
