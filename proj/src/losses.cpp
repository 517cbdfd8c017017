#include "pvg/losses.hpp"

#include <array>
#include <cmath>

namespace pvg {

void LossWeights::validate() const {
  if (!(lambda_r >= 0.0 && lambda_r <= 1.0)) throw std::invalid_argument("lambda_r must lie in [0, 1]");
  if (!(lambda_d >= 0.0) || !(lambda_o >= 0.0) || !(lambda_v >= 0.0))
    throw std::invalid_argument("loss weights must be non-negative");
}

LossBreakdown total_loss(LossBreakdown c, const LossWeights& w) {
  c.total = (1.0 - w.lambda_r) * c.l1 + w.lambda_r * c.ssim + w.lambda_d * c.depth + w.lambda_o * c.opacity +
            w.lambda_v * c.velocity;
  return c;
}

namespace detail {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> taps{};
  double sum = 0.0;
  for (int k = -kRadius; k <= kRadius; ++k) {
    taps[k + kRadius] = std::exp(-(k * k) / (2.0 * kSigma * kSigma));
    sum += taps[k + kRadius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable window whose in-bounds taps are renormalized to sum to one.
class Window {
 public:
  Window(int h, int w) : h_(h), w_(w), taps_(gaussian_taps()), norm_x_(w), norm_y_(h) {
    for (int x = 0; x < w; ++x) norm_x_[x] = 1.0 / in_bounds_sum(x, w);
    for (int y = 0; y < h; ++y) norm_y_[y] = 1.0 / in_bounds_sum(y, h);
  }

  // out(p) = sum_k w_k in(p + k) / S(p)
  std::vector<double> filter(const std::vector<double>& in) const {
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double acc = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int xx = x + k;
          if (xx >= 0 && xx < w_) acc += taps_[k + kRadius] * in[y * w_ + xx];
        }
        tmp[y * w_ + x] = acc * norm_x_[x];
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double acc = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int yy = y + k;
          if (yy >= 0 && yy < h_) acc += taps_[k + kRadius] * tmp[yy * w_ + x];
        }
        out[y * w_ + x] = acc * norm_y_[y];
      }
    return out;
  }

  // Adjoint of filter().
  std::vector<double> transpose(const std::vector<double>& g) const {
    std::vector<double> tmp(g.size(), 0.0), out(g.size(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double acc = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int yy = y - k;
          if (yy >= 0 && yy < h_) acc += taps_[k + kRadius] * g[yy * w_ + x] * norm_y_[yy];
        }
        tmp[y * w_ + x] = acc;
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double acc = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int xx = x - k;
          if (xx >= 0 && xx < w_) acc += taps_[k + kRadius] * tmp[y * w_ + xx] * norm_x_[xx];
        }
        out[y * w_ + x] = acc;
      }
    return out;
  }

 private:
  double in_bounds_sum(int p, int n) const {
    double s = 0.0;
    for (int k = -kRadius; k <= kRadius; ++k)
      if (p + k >= 0 && p + k < n) s += taps_[k + kRadius];
    return s;
  }

  int h_, w_;
  std::array<double, 2 * kRadius + 1> taps_;
  std::vector<double> norm_x_, norm_y_;
};

}  // namespace

double ssim_mean(int h, int w, int channels, const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>* grad_a) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (n == 0 || channels == 0) return 1.0;
  const Window win(h, w);
  const double inv_count = 1.0 / static_cast<double>(n * channels);
  if (grad_a) grad_a->assign(a.size(), 0.0);

  double total = 0.0;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a[i * channels + c];
      y[i] = b[i * channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = win.filter(x), my = win.filter(y);
    const auto exx = win.filter(xx), eyy = win.filter(yy), exy = win.filter(xy);

    std::vector<double> g_mx, g_exx, g_exy;
    if (grad_a) {
      g_mx.assign(n, 0.0);
      g_exx.assign(n, 0.0);
      g_exy.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double sxx = exx[i] - mx[i] * mx[i];
      const double syy = eyy[i] - my[i] * my[i];
      const double sxy = exy[i] - mx[i] * my[i];
      const double a1 = 2.0 * mx[i] * my[i] + kC1;
      const double a2 = 2.0 * sxy + kC2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
      const double b2 = sxx + syy + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad_a) {
        const double g = s * inv_count;
        g_mx[i] = g * (2.0 * my[i] / a1 - 2.0 * my[i] / a2 - 2.0 * mx[i] / b1 + 2.0 * mx[i] / b2);
        g_exx[i] = g * (-1.0 / b2);
        g_exy[i] = g * (2.0 / a2);
      }
    }
    if (grad_a) {
      const auto t_mx = win.transpose(g_mx), t_exx = win.transpose(g_exx), t_exy = win.transpose(g_exy);
      for (std::size_t i = 0; i < n; ++i)
        (*grad_a)[i * channels + c] = t_mx[i] + 2.0 * x[i] * t_exx[i] + y[i] * t_exy[i];
    }
  }
  return total * inv_count;
}

}  // namespace detail

template <typename Real>
LossBreakdown evaluate_losses(const RenderOutput<Real>& out, const Supervision& sup, const LossWeights& w,
                              PixelGradients<Real>* grads) {
  if (sup.image == nullptr) throw std::invalid_argument("evaluate_losses: missing ground-truth image");
  if (grads) *grads = PixelGradients<Real>(out.height(), out.width());
  LossBreakdown c;
  c.l1 = l1_loss(out.color, *sup.image, grads ? &grads->color : nullptr, 1.0 - w.lambda_r);
  c.ssim = ssim_loss(out.color, *sup.image, grads ? &grads->color : nullptr, w.lambda_r);
  if (sup.sparse_inv_depth && !sup.sparse_inv_depth->empty())
    c.depth = depth_loss(out.depth, out.opacity, *sup.sparse_inv_depth, grads ? &grads->depth : nullptr, w.lambda_d);
  c.opacity = opacity_loss(out.opacity, sup.sky_mask, grads ? &grads->opacity : nullptr, w.lambda_o);
  c.velocity = velocity_loss(out.velocity, grads ? &grads->velocity : nullptr, w.lambda_v);
  return total_loss(c, w);
}

template LossBreakdown evaluate_losses<float>(const RenderOutput<float>&, const Supervision&, const LossWeights&,
                                              PixelGradients<float>*);
template LossBreakdown evaluate_losses<double>(const RenderOutput<double>&, const Supervision&, const LossWeights&,
                                               PixelGradients<double>*);

}  // namespace pvg
