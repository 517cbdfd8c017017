#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pvg/backward.hpp"
#include "pvg/cubemap.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

enum class ParamClass { mu, rot, log_scale, opacity_logit, color, tau, log_beta, vel, cube };

const char* to_string(ParamClass cls);
int component_count(ParamClass cls);

/// One scalar parameter: point `index` (or texel for the cube) and component.
struct ParamRef {
  ParamClass cls = ParamClass::mu;
  std::size_t index = 0;
  int component = 0;
};

double& param_value(std::vector<PvgPoint>& points, CubeMap& cube, const ParamRef& ref);
double gradient_value(const GradientBuffer& grads, const ParamRef& ref);

/// Every scalar parameter of the scene, cube texels last.
std::vector<ParamRef> all_params(std::size_t point_count, const CubeMap* cube);

using SceneLoss = std::function<double(std::span<const PvgPoint>, const CubeMap&)>;

/// Central difference (f(x + h) - f(x - h)) / 2h on a copy of the scene.
double finite_difference_oracle(const SceneLoss& loss, std::vector<PvgPoint> points, CubeMap cube,
                                const ParamRef& ref, double step);

/// Full render-plus-loss objective in 64-bit mode.
SceneLoss render_loss(const Camera& cam, double t, double dt, const GlobalConfig& cfg, const RenderSettings& settings,
                      const Supervision& sup, const LossWeights& weights);

}  // namespace pvg
