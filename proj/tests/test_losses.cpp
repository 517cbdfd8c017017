#include "doctest.h"

#include <cmath>
#include <random>

#include "pvg/losses.hpp"

using namespace pvg;
using doctest::Approx;

namespace {

ImageF filled(int h, int w, int c, float v) { return ImageF(h, w, c, v); }

ImageF random_image(std::mt19937_64& rng, int h, int w, int c) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF img(h, w, c);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

/// Direct per-pixel SSIM: 11x11 Gaussian window (sigma 1.5) renormalized over
/// the taps that fall inside the image.
double reference_ssim(const ImageF& a, const ImageF& b) {
  const int h = a.height(), w = a.width(), ch = a.channels();
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double ws = 0, ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double g = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
            const double va = a.at(yy, xx, c), vb = b.at(yy, xx, c);
            ws += g;
            ma += g * va;
            mb += g * vb;
            aa += g * va * va;
            bb += g * vb * vb;
            ab += g * va * vb;
          }
        ma /= ws;
        mb /= ws;
        const double sa = aa / ws - ma * ma, sb = bb / ws - mb * mb, sab = ab / ws - ma * mb;
        total += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
      }
  return total / (static_cast<double>(h) * w * ch);
}

}  // namespace

TEST_CASE("L1") {
  const ImageF gt = filled(4, 6, 3, 0.3f);
  CHECK(l1_loss(gt, gt) == 0.0);
  CHECK(l1_loss(filled(4, 6, 3, 0.4f), gt) == Approx(0.1).epsilon(1e-6));
  ImageF checker(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) checker.at(y, x, c) = (x + y) % 2 ? 1.0f : 0.0f;
  CHECK(l1_loss(checker, filled(4, 4, 3, 0.0f)) == Approx(0.5));
  CHECK_THROWS_AS(l1_loss(gt, filled(4, 5, 3, 0.0f)), DimMismatch);
}

TEST_CASE("SSIM") {
  std::mt19937_64 rng(2);
  const ImageF a = random_image(rng, 20, 17, 3);
  const ImageF b = random_image(rng, 20, 17, 3);
  CHECK(ssim_loss(a, a) == Approx(0.0).epsilon(1e-12));
  CHECK(ssim_metric(a, b) == Approx(reference_ssim(a, b)).epsilon(1e-9));
  CHECK(ssim_metric(a, b) == Approx(ssim_metric(b, a)).epsilon(1e-12));
  CHECK_THROWS_AS(ssim_metric(a, filled(20, 17, 1, 0.0f)), DimMismatch);

  SUBCASE("inverted binary structure is strongly anti-correlated") {
    ImageF bin(24, 24, 1), inv(24, 24, 1);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        bin.at(y, x) = ((x / 3 + y / 3) % 2) ? 1.0f : 0.0f;
        inv.at(y, x) = 1.0f - bin.at(y, x);
      }
    CHECK(ssim_loss(bin, inv) == Approx(1.0 - reference_ssim(bin, inv)).epsilon(1e-9));
    CHECK(ssim_loss(bin, inv) > 1.8);
  }

  SUBCASE("constant images keep only the luminance term") {
    const double x = 0.3, y = 0.7, c1 = 1e-4;
    const double expected = (2 * x * y + c1) / (x * x + y * y + c1);
    CHECK(ssim_metric(filled(12, 12, 1, 0.3f), filled(12, 12, 1, 0.7f)) == Approx(expected).epsilon(1e-6));
  }

  SUBCASE("gradient matches central differences") {
    ImageD p(6, 7, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : p.values()) v = u(rng);
    ImageD q = p;
    for (auto& v : q.values()) v = u(rng);
    ImageD g(6, 7, 2);
    ssim_loss(p, q, &g);
    double worst = 0;
    for (std::size_t i = 0; i < p.values().size(); ++i) {
      ImageD hi = p, lo = p;
      hi.values()[i] += 1e-6;
      lo.values()[i] -= 1e-6;
      const double fd = (ssim_loss(hi, q) - ssim_loss(lo, q)) / 2e-6;
      worst = std::max(worst, std::abs(fd - g.values()[i]));
    }
    CHECK(worst < 1e-7);
  }
}

TEST_CASE("inverse depth") {
  ImageD depth(10, 10, 1, 2.0), opacity(10, 10, 1, 0.9);
  ImageF samples(10, 10, 1);
  CHECK(depth_loss(depth, opacity, samples) == 0.0);
  samples.at(3, 4) = 0.5f;
  samples.at(7, 1) = 0.5f;
  CHECK(depth_loss(depth, opacity, samples) == 0.0);
  samples.at(7, 1) = 0.7f;
  CHECK(depth_loss(depth, opacity, samples) == Approx(0.002).epsilon(1e-6));
  opacity.at(7, 1) = 0.4;
  CHECK(depth_loss(depth, opacity, samples) == 0.0);
  CHECK(depth_loss(depth, opacity, ImageF()) == 0.0);
}

TEST_CASE("opacity entropy and sky") {
  ImageD o(2, 2, 1, 0.5);
  CHECK(opacity_loss(o, static_cast<const ImageF*>(nullptr)) == Approx(0.346574).epsilon(1e-6));
  ImageD solid(2, 2, 1, 1.0);
  CHECK(opacity_loss(solid, static_cast<const ImageF*>(nullptr)) == 0.0);
  const ImageF sky(2, 2, 1, 1.0f);
  CHECK(opacity_loss(solid, &sky) == Approx(-std::log(1e-6)).epsilon(1e-6));
  const ImageF no_sky(2, 2, 1, 0.0f);
  CHECK(opacity_loss(o, &no_sky) == Approx(0.346574).epsilon(1e-6));
  const ImageD clear(2, 2, 1, 0.0);
  CHECK(opacity_loss(clear, &sky) == 0.0);
}

TEST_CASE("velocity sparsity") {
  ImageD v(2, 2, 3);
  CHECK(velocity_loss(v) == 0.0);
  v.at(1, 0, 0) = 1.0;
  v.at(1, 0, 1) = -1.0;
  CHECK(velocity_loss(v) == Approx(0.5));
  for (auto& x : v.values()) x *= 3.0;
  CHECK(velocity_loss(v) == Approx(1.5));
}

TEST_CASE("weighted total") {
  const LossWeights w;
  CHECK(w.lambda_r == 0.2);
  CHECK(w.lambda_d == 0.1);
  CHECK(w.lambda_o == 0.05);
  CHECK(w.lambda_v == 0.01);
  CHECK(total_loss({}, w).total == 0.0);

  const LossBreakdown parts{0, 0.3, 0.2, 0.1, 0.4, 0.6};
  CHECK(total_loss(parts, w).total == Approx(0.8 * 0.3 + 0.2 * 0.2 + 0.1 * 0.1 + 0.05 * 0.4 + 0.01 * 0.6));
  LossWeights no_ssim = w;
  no_ssim.lambda_r = 0;
  CHECK(total_loss(parts, no_ssim).total == Approx(0.3 + 0.1 * 0.1 + 0.05 * 0.4 + 0.01 * 0.6));
  LossBreakdown doubled = parts;
  doubled.depth *= 2;
  CHECK(total_loss(doubled, w).total - total_loss(parts, w).total == Approx(0.1 * 0.1));

  LossWeights bad = w;
  bad.lambda_r = 1.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("PSNR") {
  const ImageF a = filled(3, 3, 3, 0.2f);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(filled(3, 3, 3, 0.3f), a) == Approx(20.0).epsilon(1e-5));
  CHECK_THROWS_AS(psnr(a, filled(3, 3, 1, 0.2f)), DimMismatch);
}
