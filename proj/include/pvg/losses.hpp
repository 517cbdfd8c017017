#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvg/image.hpp"
#include "pvg/rasterizer.hpp"

namespace pvg {

class DimMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LossWeights {
  double lambda_r = 0.2;
  double lambda_d = 0.1;
  double lambda_o = 0.05;
  double lambda_v = 0.01;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;
  double depth = 0.0;
  double opacity = 0.0;
  double velocity = 0.0;
};

/// dL/d(channel) per pixel for every rendered channel the losses touch.
template <typename Real>
struct PixelGradients {
  Image<Real> color, opacity, depth, velocity;

  PixelGradients() = default;
  PixelGradients(int h, int w) : color(h, w, 3), opacity(h, w, 1), depth(h, w, 1), velocity(h, w, 3) {}
};

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kOpacityLogClamp = 1e-6;
inline constexpr double kInverseDepthEps = 1e-3;
inline constexpr double kDepthOpacityGate = 0.5;

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  if (!a.same_shape(b))
    throw DimMismatch(std::string(what) + ": image dimensions differ (" + std::to_string(a.height()) + "x" +
                      std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                      std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                      std::to_string(b.channels()) + ")");
}

/// Mean absolute difference. When `grad` is given, adds weight * dL/dpred.
template <typename P, typename G>
double l1_loss(const Image<P>& pred, const Image<G>& gt, Image<P>* grad = nullptr, double weight = 1.0) {
  require_same_shape(pred, gt, "l1_loss");
  const auto a = pred.values();
  const auto b = gt.values();
  if (a.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += std::abs(d);
    if (grad) grad->values()[i] += static_cast<P>(weight * inv_n * ((d > 0) - (d < 0)));
  }
  return acc * inv_n;
}

namespace detail {
/// Mean SSIM over all pixels and channels of two equally shaped double
/// buffers; fills dSSIM/da when `grad_a` is non-null.
double ssim_mean(int h, int w, int channels, const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>* grad_a);

template <typename T>
std::vector<double> to_doubles(const Image<T>& img) {
  const auto v = img.values();
  return std::vector<double>(v.begin(), v.end());
}
}  // namespace detail

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2.
/// The window is renormalized where it overhangs the image border.
template <typename P, typename G>
double ssim_metric(const Image<P>& pred, const Image<G>& gt) {
  require_same_shape(pred, gt, "ssim");
  return detail::ssim_mean(pred.height(), pred.width(), pred.channels(), detail::to_doubles(pred),
                           detail::to_doubles(gt), nullptr);
}

/// 1 - SSIM; adds weight * dL/dpred into `grad` when given.
template <typename P, typename G>
double ssim_loss(const Image<P>& pred, const Image<G>& gt, Image<P>* grad = nullptr, double weight = 1.0) {
  require_same_shape(pred, gt, "ssim_loss");
  std::vector<double> g;
  const double s = detail::ssim_mean(pred.height(), pred.width(), pred.channels(), detail::to_doubles(pred),
                                     detail::to_doubles(gt), grad ? &g : nullptr);
  if (grad)
    for (std::size_t i = 0; i < g.size(); ++i) grad->values()[i] += static_cast<P>(-weight * g[i]);
  return 1.0 - s;
}

/// (1/hw) sum |D^s - 1/max(depth, eps)| over pixels holding a LiDAR sample and
/// rendered opacity above the gate.
template <typename P, typename G>
double depth_loss(const Image<P>& depth, const Image<P>& opacity, const Image<G>& sparse_inv_depth,
                  Image<P>* grad = nullptr, double weight = 1.0) {
  if (sparse_inv_depth.empty()) return 0.0;
  require_same_shape(depth, sparse_inv_depth, "depth_loss");
  const double inv_hw = 1.0 / static_cast<double>(depth.pixel_count());
  double acc = 0.0;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    const double target = sparse_inv_depth.values()[i];
    if (!(target > 0.0) || !(opacity.values()[i] > kDepthOpacityGate)) continue;
    const double z = depth.values()[i];
    const double inv = 1.0 / std::max(z, kInverseDepthEps);
    const double d = inv - target;
    acc += std::abs(d);
    if (grad && z > kInverseDepthEps)
      grad->values()[i] += static_cast<P>(weight * inv_hw * ((d > 0) - (d < 0)) * (-inv * inv));
  }
  return acc * inv_hw;
}

/// -(1/hw) sum O log O - (1/hw) sum M_sky log(1 - O), log arguments clamped below.
template <typename P, typename G>
double opacity_loss(const Image<P>& opacity, const Image<G>* sky_mask, Image<P>* grad = nullptr,
                    double weight = 1.0) {
  if (sky_mask) require_same_shape(opacity, *sky_mask, "opacity_loss");
  const double inv_hw = opacity.pixel_count() ? 1.0 / static_cast<double>(opacity.pixel_count()) : 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < opacity.pixel_count(); ++i) {
    const double o = opacity.values()[i];
    const double lo = std::max(o, kOpacityLogClamp);
    double g = -std::log(lo) - (o > kOpacityLogClamp ? 1.0 : 0.0);
    acc -= o * std::log(lo);
    if (sky_mask) {
      const double m = sky_mask->values()[i];
      const double hi = std::max(1.0 - o, kOpacityLogClamp);
      acc -= m * std::log(hi);
      if (1.0 - o > kOpacityLogClamp) g += m / hi;
    }
    if (grad) grad->values()[i] += static_cast<P>(weight * inv_hw * g);
  }
  return acc * inv_hw;
}

/// (1/hw) sum ||V||_1 over the three velocity channels.
template <typename P>
double velocity_loss(const Image<P>& velocity, Image<P>* grad = nullptr, double weight = 1.0) {
  const double inv_hw = velocity.pixel_count() ? 1.0 / static_cast<double>(velocity.pixel_count()) : 0.0;
  double acc = 0.0;
  const auto v = velocity.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    acc += std::abs(x);
    if (grad) grad->values()[i] += static_cast<P>(weight * inv_hw * ((x > 0) - (x < 0)));
  }
  return acc * inv_hw;
}

/// Fills `total` from the component terms.
LossBreakdown total_loss(LossBreakdown components, const LossWeights& w);

/// Capped at kPsnrCap for identical images.
template <typename P, typename G>
double psnr(const Image<P>& pred, const Image<G>& gt) {
  require_same_shape(pred, gt, "psnr");
  const auto a = pred.values();
  const auto b = gt.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = a.empty() ? 0.0 : acc / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// Supervision for one rendered view.
struct Supervision {
  const ImageF* image = nullptr;
  const ImageF* sparse_inv_depth = nullptr;  // may be null or empty
  const ImageF* sky_mask = nullptr;          // optional
};

/// Evaluates every loss term against a render and, when `grads` is given,
/// writes dTotal/d(channel) for color, opacity, depth and velocity.
template <typename Real>
LossBreakdown evaluate_losses(const RenderOutput<Real>& out, const Supervision& sup, const LossWeights& w,
                              PixelGradients<Real>* grads);

}  // namespace pvg
