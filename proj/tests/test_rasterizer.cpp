#include "doctest.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pvg/rasterizer.hpp"
#include "support.hpp"

using namespace pvg;
using doctest::Approx;

namespace {

GaussianSnapshot splat(const Vec3& center, double sigma, double alpha0, const Vec3& color, std::int64_t index = 0) {
  GaussianSnapshot s;
  s.center = center;
  s.cov_scale = Vec3::Constant(sigma);
  s.alpha0 = alpha0;
  s.color = color;
  s.source_index = index;
  return s;
}

using testing::brute_force;
using testing::max_diff;

std::vector<GaussianSnapshot> random_snapshots(std::mt19937_64& rng, int n, double sigma_lo, double sigma_hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GaussianSnapshot> out;
  for (int i = 0; i < n; ++i) {
    const double z = 1.5 + 3 * u(rng);
    GaussianSnapshot s;
    s.center = Vec3((u(rng) - 0.5) * z, (u(rng) - 0.5) * z, z);
    s.cov_scale = Vec3(sigma_lo + (sigma_hi - sigma_lo) * u(rng), sigma_lo + (sigma_hi - sigma_lo) * u(rng),
                       sigma_lo + (sigma_hi - sigma_lo) * u(rng));
    s.cov_rot = testing::random_quat(rng);
    s.alpha0 = u(rng);
    s.color = Vec3(u(rng), u(rng), u(rng));
    s.avg_vel = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    s.source_index = i;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("culling and binning") {
  const Camera cam = testing::small_camera(64, 64, 64.0);
  RenderSettings st;

  auto empty = cull_and_bin<double>({}, cam, st);
  CHECK(empty.bins.tile_count() == 16);
  CHECK(empty.bins.entries.empty());

  SUBCASE("a tiny on-axis splat touches one tile") {
    // Centered inside tile (1, 1) so its footprint stays there.
    const Vec3 c((24.0 - 32.0) / 64.0 * 2.0, (24.0 - 32.0) / 64.0 * 2.0, 2.0);
    const std::vector<GaussianSnapshot> s{splat(c, 0.005, 0.8, Vec3::Ones())};
    const auto r = cull_and_bin<double>(s, cam, st);
    int populated = 0;
    for (int t = 0; t < r.bins.tile_count(); ++t) populated += !r.bins.tile(t).empty();
    CHECK(populated == 1);
    CHECK(r.bins.tile(1 * 4 + 1).size() == 1);
  }

  SUBCASE("a splat across a tile edge lands in both tiles") {
    const std::vector<GaussianSnapshot> s{splat(Vec3((16.5 - 32.0) / 32.0, (8.0 - 32.0) / 32.0, 2.0), 0.02, 0.8, Vec3::Ones())};
    const auto r = cull_and_bin<double>(s, cam, st);
    const auto& f = r.fragments.at(0);
    // Axis-aligned bounding box of the cutoff ellipse {d : d^T conic d <= k^2}.
    const double det = f.conic_a * f.conic_c - f.conic_b * f.conic_b;
    const double rx = st.sigma_cutoff * std::sqrt(f.conic_c / det);
    CHECK(f.mean_x - rx < 16.0);
    CHECK(f.mean_x + rx > 16.0);
    CHECK(r.bins.tile(0).size() == 1);
    CHECK(r.bins.tile(1).size() == 1);
    CHECK(r.bins.tile(2).empty());
  }

  SUBCASE("near-plane and faint splats are dropped") {
    const std::vector<GaussianSnapshot> s{splat(Vec3(0, 0, 0.1), 0.1, 0.8, Vec3::Ones()),
                                          splat(Vec3(0, 0, 2), 0.1, 0.5 / 255.0, Vec3::Ones()),
                                          splat(Vec3(0, 0, -2), 0.1, 0.8, Vec3::Ones()),
                                          splat(Vec3(50, 0, 2), 0.1, 0.8, Vec3::Ones())};
    CHECK(cull_and_bin<double>(s, cam, st).fragments.empty());
  }

  SUBCASE("buckets are ordered by depth then index") {
    std::vector<GaussianSnapshot> s;
    for (int i = 0; i < 6; ++i) s.push_back(splat(Vec3(0, 0, i % 2 ? 3.0 : 2.0), 0.3, 0.5, Vec3::Ones(), 5 - i));
    const auto r = cull_and_bin<double>(s, cam, st);
    for (int t = 0; t < r.bins.tile_count(); ++t) {
      const auto list = r.bins.tile(t);
      for (std::size_t k = 1; k < list.size(); ++k) {
        const auto& a = r.fragments[list[k - 1]];
        const auto& b = r.fragments[list[k]];
        CHECK((a.depth < b.depth || (a.depth == b.depth && a.source_index < b.source_index)));
      }
    }
  }
}

TEST_CASE("compositing") {
  const Camera cam = testing::small_camera(16, 16, 16.0);
  RenderSettings st;
  st.sky = false;
  // Pixel (8, 8) has its center at (8.5, 8.5); put splats there.
  const Vec3 at_pixel(0.5 / 16.0 * 2.0, 0.5 / 16.0 * 2.0, 2.0);

  SUBCASE("single splat") {
    const std::vector<GaussianSnapshot> s{splat(at_pixel, 0.1, 0.5, Vec3(1, 0, 0))};
    const auto out = render_snapshots<double>(s, nullptr, cam, st).out;
    CHECK(out.color.at(8, 8, 0) == Approx(0.5));
    CHECK(out.color.at(8, 8, 1) == 0.0);
    CHECK(out.opacity.at(8, 8) == Approx(0.5));
    CHECK(out.depth.at(8, 8) == Approx(2.0).epsilon(1e-12));
    CHECK(out.depth.at(8, 10) == Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("front and back") {
    const std::vector<GaussianSnapshot> s{splat(at_pixel, 0.1, 0.5, Vec3(1, 0, 0), 0),
                                          splat(at_pixel * 1.5, 0.15, 0.5, Vec3(0, 1, 0), 1)};
    const auto out = render_snapshots<double>(s, nullptr, cam, st).out;
    CHECK(out.color.at(8, 8, 0) == Approx(0.5));
    CHECK(out.color.at(8, 8, 1) == Approx(0.25));
    CHECK(out.color.at(8, 8, 2) == 0.0);
    CHECK(out.opacity.at(8, 8) == Approx(0.75));
  }

  SUBCASE("opacity stays in [0, 1] and transmittance never grows") {
    std::mt19937_64 rng(9);
    const auto s = random_snapshots(rng, 200, 0.05, 0.4);
    const auto r = render_snapshots<double>(s, nullptr, cam, st);
    for (double o : r.out.opacity.values()) {
      CHECK(o >= 0.0);
      CHECK(o <= 1.0);
    }
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        double T = 1.0;
        for (std::uint32_t id : r.raster.bins.tile(r.raster.bins.tiles_x * (y / 16) + x / 16)) {
          const auto& f = r.raster.fragments[id];
          const double dx = x + 0.5 - f.mean_x, dy = y + 0.5 - f.mean_y;
          const double q = f.conic_a * dx * dx + 2 * f.conic_b * dx * dy + f.conic_c * dy * dy;
          if (q > 9.0) continue;
          const double a = std::min(0.99, f.alpha0 * std::exp(-0.5 * q));
          REQUIRE(T * (1 - a) <= T);
          if (T * (1 - a) < st.min_transmittance) break;
          T *= 1 - a;
        }
        CHECK(r.out.transmittance.at(y, x) == Approx(T).epsilon(1e-12));
        CHECK(r.out.opacity.at(y, x) == Approx(1 - T).epsilon(1e-12));
      }
  }
}

TEST_CASE("sky compositing") {
  const Camera cam = testing::small_camera(16, 16, 16.0);
  RenderSettings st;
  const CubeMap constant(4, Vec3(0.3, 0.6, 0.9));

  const auto empty = render_snapshots<double>({}, &constant, cam, st).out;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(empty.opacity.at(y, x) == 0.0);
      CHECK(empty.color.at(y, x, 2) == Approx(0.9).epsilon(1e-12));
    }

  RenderOutput<double> out(1, 1);
  out.opacity.at(0, 0) = 0.25;
  for (int ch = 0; ch < 3; ++ch) out.color.at(0, 0, ch) = 0.1;
  composite_sky(out, &constant, testing::small_camera(1, 1, 1.0), st);
  CHECK(out.color.at(0, 0, 0) == Approx(0.1 + 0.75 * 0.3));
  CHECK(out.color.at(0, 0, 2) == Approx(0.1 + 0.75 * 0.9));

  RenderOutput<double> full(1, 1);
  full.opacity.at(0, 0) = 1.0;
  full.color.at(0, 0, 1) = 0.42;
  composite_sky(full, &constant, testing::small_camera(1, 1, 1.0), st);
  CHECK(full.color.at(0, 0, 1) == 0.42);

  SUBCASE("the sky adds exactly (1 - O) f_sky") {
    std::mt19937_64 rng(4);
    const auto s = random_snapshots(rng, 40, 0.05, 0.3);
    const CubeMap cube = testing::random_cube(rng, 8);
    RenderSettings no_sky = st;
    no_sky.sky = false;
    const auto with = render_snapshots<double>(s, &cube, cam, st).out;
    const auto without = render_snapshots<double>(s, &cube, cam, no_sky).out;
    double worst = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const Vec3 f = sample_cubemap(cube, pixel_ray(x + 0.5, y + 0.5, cam)).color;
        for (int ch = 0; ch < 3; ++ch)
          worst = std::max(worst, std::abs(with.color.at(y, x, ch) - without.color.at(y, x, ch) -
                                           (1 - with.opacity.at(y, x)) * f[ch]));
      }
    CHECK(worst < 1e-15);
  }

  SUBCASE("jitter is a pure function of its key") {
    RenderSettings j = st;
    j.sky_jitter = true;
    j.jitter_seed = 3;
    j.jitter_stream = 8;
    const Vec3 a = sky_ray(5, 7, cam, j), b = sky_ray(5, 7, cam, j);
    CHECK(a == b);
    j.jitter_stream = 9;
    CHECK(sky_ray(5, 7, cam, j) != a);
    CHECK(a.dot(sky_ray(5, 7, cam, st)) > std::cos(1.0 / 16.0));
  }
}

TEST_CASE("cube map lookups") {
  CubeMap cube(8);
  for (int f = 0; f < 6; ++f)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) cube.set_texel(cube.texel_index(f, r, c), Vec3(f / 6.0, r / 8.0, c / 8.0));

  SUBCASE("axis direction hits the face center") {
    const auto s = sample_cubemap(cube, Vec3(0, 0, 1));
    CHECK(direction_to_face(Vec3(0, 0, 1)).face == 4);
    // Four central texels weigh in equally at an even resolution.
    Vec3 expected = Vec3::Zero();
    for (int r = 3; r <= 4; ++r)
      for (int c = 3; c <= 4; ++c) expected += 0.25 * cube.texel(cube.texel_index(4, r, c));
    CHECK((s.color - expected).norm() < 1e-12);
    CHECK(std::accumulate(s.weight.begin(), s.weight.end(), 0.0) == Approx(1.0));
  }

  SUBCASE("constant maps give constant samples") {
    const CubeMap k(16, Vec3(0.2, 0.4, 0.6));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
      CHECK((sample_cubemap(k, d).color - Vec3(0.2, 0.4, 0.6)).norm() < 1e-12);
    }
  }

  SUBCASE("lookups are continuous across face edges") {
    std::mt19937_64 rng(2);
    const CubeMap rough = testing::random_cube(rng, 8);
    double lipschitz = 0;
    for (int f = 0; f < 6; ++f)
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
          const Vec3 a = rough.texel(rough.texel_index(f, r, c));
          if (c + 1 < 8) lipschitz = std::max(lipschitz, (a - rough.texel(rough.texel_index(f, r, c + 1))).norm());
          if (r + 1 < 8) lipschitz = std::max(lipschitz, (a - rough.texel(rough.texel_index(f, r + 1, c))).norm());
        }
    // Texel pitch near an edge is at least ~(2/8)/2 radians apart for 45 degree steps.
    const double per_radian = lipschitz * 8.0;
    const double eps = 1e-5;
    double worst_ratio = 0;
    for (int i = 0; i <= 400; ++i) {
      const double a = -0.99 + 1.98 * i / 400.0;
      for (const Vec3& edge : {Vec3(1, a, 1), Vec3(a, 1, 1), Vec3(1, 1, a), Vec3(-1, a, 1), Vec3(a, -1, -1)}) {
        const Vec3 d0 = edge.normalized();
        const Vec3 d1 = (edge + Vec3(eps, -eps, eps)).normalized();
        const double step = std::acos(std::clamp(d0.dot(d1), -1.0, 1.0));
        if (step <= 0) continue;
        worst_ratio = std::max(worst_ratio, (sample_cubemap(rough, d0).color - sample_cubemap(rough, d1).color).norm() / step);
      }
    }
    CHECK(worst_ratio <= 4.0 * per_radian);
  }
}

TEST_CASE("tile renderer matches the brute-force oracle") {
  std::mt19937_64 rng(12);
  RenderSettings st;
  for (int trial = 0; trial < 30; ++trial) {
    const int size = trial % 2 ? 8 : 16;
    const Camera cam = testing::small_camera(size, size, size);
    const auto s = random_snapshots(rng, trial % 2 ? 32 : 64, 0.03, 0.5);
    const CubeMap cube = testing::random_cube(rng, 4);
    const auto got = render_snapshots<double>(s, &cube, cam, st).out;
    const auto want = brute_force(s, &cube, cam, st);
    CHECK(max_diff(got.color, want.color) < 1e-6);
    CHECK(max_diff(got.opacity, want.opacity) < 1e-6);
    CHECK(max_diff(got.depth, want.depth) < 1e-6);
    CHECK(max_diff(got.velocity, want.velocity) < 1e-6);

    const auto ref = render_reference<double>(s, &cube, cam, st);
    CHECK(max_diff(got.color, ref.color) < 1e-12);
  }
}

TEST_CASE("render output is independent of the worker count") {
  std::mt19937_64 rng(30);
  const Camera cam = testing::small_camera(80, 64, 70.0);
  const auto s = random_snapshots(rng, 3000, 0.01, 0.2);
  const CubeMap cube = testing::random_cube(rng, 8);
  RenderSettings st;
  st.sky_jitter = true;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = render_snapshots<float>(s, &cube, cam, st).out;
  omp_set_num_threads(4);
  const auto four = render_snapshots<float>(s, &cube, cam, st).out;
  omp_set_num_threads(saved);
  const auto same = [](const Image<float>& a, const Image<float>& b) {
    return std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
  };
  CHECK(same(one.color, four.color));
  CHECK(same(one.depth, four.depth));
  CHECK(same(one.velocity, four.velocity));
}

TEST_CASE("whole-model render") {
  GlobalConfig cfg;
  const Camera cam = testing::small_camera(16, 16, 16.0);
  const CubeMap cube(2, Vec3(0.1, 0.2, 0.3));
  const auto empty = render<double>({}, &cube, cam, 0.4, cfg, RenderSettings{}).out;
  for (double o : empty.opacity.values()) CHECK(o == 0.0);

  std::mt19937_64 rng(8);
  auto points = testing::random_points(rng, 20);
  for (auto& p : points) p.vel.setZero();
  const auto a = render<double>(points, &cube, cam, 0.13, cfg, RenderSettings{}).out;
  const auto b = render<double>(points, &cube, cam, 0.13 + cfg.cycle_length, cfg, RenderSettings{}).out;
  // Opacity decays away from tau, so compare points with an effectively unbounded lifespan.
  for (auto& p : points) p.log_beta = std::log(1e9);
  const auto c = render<double>(points, &cube, cam, 0.13, cfg, RenderSettings{}).out;
  const auto d = render<double>(points, &cube, cam, 0.13 + cfg.cycle_length, cfg, RenderSettings{}).out;
  CHECK(max_diff(c.color, d.color) < 1e-12);
  CHECK(max_diff(a.color, b.color) > 0.0);
}

TEST_CASE("velocity color coding") {
  RenderOutput<double> out(2, 2);
  const auto still = colorize_velocity(out);
  for (float v : still.values()) CHECK(v == 1.0f);

  const Vec3 right = flow_wheel_color(0.5, 0.0);
  CHECK(right[0] > right[1]);
  CHECK(right[0] > right[2]);
  const Vec3 dir = flow_wheel_color(1.0, 0.0);
  // Distance from white grows linearly with magnitude up to saturation.
  CHECK((Vec3::Ones() - right).norm() * 2 == Approx((Vec3::Ones() - dir).norm()));
  const Vec3 left = flow_wheel_color(-0.5, 0.0);
  CHECK((left - right).norm() > 0.3);
}
