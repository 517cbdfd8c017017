#include "pvg/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "pvg/detail/projection.hpp"
#include "pvg/random.hpp"

namespace pvg {

template <typename Real>
RenderOutput<Real>::RenderOutput(int height, int width)
    : color(height, width, 3),
      opacity(height, width, 1),
      depth(height, width, 1),
      velocity(height, width, 3),
      depth_sum(height, width, 1),
      sky(height, width, 3),
      transmittance(height, width, 1, Real(1)),
      contributors(height, width, 1) {}

template <typename Real>
Rasterization<Real> cull_and_bin(std::span<const GaussianSnapshot> snapshots, const Camera& cam,
                                 const RenderSettings& settings) {
  const auto n = static_cast<std::int64_t>(snapshots.size());
  std::vector<SplatFragment<Real>> candidates(snapshots.size());
  std::vector<char> keep(snapshots.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    detail::ProjectedSplat p;
    if (!detail::project_splat(snapshots[i], cam, settings, p)) continue;
    candidates[i] = detail::to_fragment<Real>(snapshots[i], p, cam.extrinsics.rotation);
    keep[i] = 1;
  }

  Rasterization<Real> raster;
  auto& frags = raster.fragments;
  frags.reserve(snapshots.size());
  for (std::size_t i = 0; i < snapshots.size(); ++i)
    if (keep[i]) frags.push_back(candidates[i]);

  TileBins& bins = raster.bins;
  const int ts = settings.tile_size;
  bins.tile_size = ts;
  bins.tiles_x = (cam.intrinsics.width + ts - 1) / ts;
  bins.tiles_y = (cam.intrinsics.height + ts - 1) / ts;
  bins.offsets.assign(bins.tile_count() + 1, 0);

  for (const auto& f : frags)
    for (int ty = f.y_min / ts; ty <= f.y_max / ts; ++ty)
      for (int tx = f.x_min / ts; tx <= f.x_max / ts; ++tx) ++bins.offsets[ty * bins.tiles_x + tx + 1];
  for (int t = 0; t < bins.tile_count(); ++t) bins.offsets[t + 1] += bins.offsets[t];

  bins.entries.resize(bins.offsets.back());
  std::vector<std::uint32_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::uint32_t id = 0; id < frags.size(); ++id) {
    const auto& f = frags[id];
    for (int ty = f.y_min / ts; ty <= f.y_max / ts; ++ty)
      for (int tx = f.x_min / ts; tx <= f.x_max / ts; ++tx) bins.entries[cursor[ty * bins.tiles_x + tx]++] = id;
  }

  // Equivalent to one global sort keyed by (tile, depth, source_index).
  const int tiles = bins.tile_count();
#pragma omp parallel for schedule(dynamic, 4)
  for (int t = 0; t < tiles; ++t) {
    auto first = bins.entries.begin() + bins.offsets[t];
    auto last = bins.entries.begin() + bins.offsets[t + 1];
    std::sort(first, last, [&](std::uint32_t a, std::uint32_t b) {
      if (frags[a].depth != frags[b].depth) return frags[a].depth < frags[b].depth;
      return frags[a].source_index < frags[b].source_index;
    });
  }
  return raster;
}

template <typename Real>
void composite_tile(const Rasterization<Real>& raster, int tile_id, const RenderSettings& settings,
                    RenderOutput<Real>& out) {
  const TileBins& bins = raster.bins;
  const auto list = bins.tile(tile_id);
  const int ts = bins.tile_size;
  const int x0 = (tile_id % bins.tiles_x) * ts;
  const int y0 = (tile_id / bins.tiles_x) * ts;
  const int x1 = std::min(x0 + ts, out.width());
  const int y1 = std::min(y0 + ts, out.height());
  const Real cutoff2 = static_cast<Real>(settings.sigma_cutoff * settings.sigma_cutoff);
  const Real clamp = static_cast<Real>(settings.alpha_clamp);
  const Real min_t = static_cast<Real>(settings.min_transmittance);

  const int tw = x1 - x0;
  const int count = tw * (y1 - y0);
  if (count <= 0) return;
  // Fragment-major walk over per-pixel state; each pixel still sees its
  // fragments in bucket order, so results match a pixel-by-pixel loop.
  std::vector<Real> T(count, Real(1)), o(count, Real(0)), zsum(count, Real(0));
  std::vector<Real> c(3 * count, Real(0)), v(3 * count, Real(0));
  std::vector<std::int32_t> consumed(count, 0);
  std::vector<char> done(count, 0);
  int active = count;
  for (std::size_t k = 0; k < list.size() && active > 0; ++k) {
    const auto& f = raster.fragments[list[k]];
    const int fx0 = std::max(f.x_min, x0), fx1 = std::min(f.x_max, x1 - 1);
    const int fy0 = std::max(f.y_min, y0), fy1 = std::min(f.y_max, y1 - 1);
    for (int y = fy0; y <= fy1; ++y) {
      const Real dy = static_cast<Real>(y) + Real(0.5) - f.mean_y;
      for (int x = fx0; x <= fx1; ++x) {
        const int p = (y - y0) * tw + (x - x0);
        if (done[p]) continue;
        const Real dx = static_cast<Real>(x) + Real(0.5) - f.mean_x;
        const Real q = f.conic_a * dx * dx + Real(2) * f.conic_b * dx * dy + f.conic_c * dy * dy;
        if (q > cutoff2) continue;
        const Real alpha = std::min(clamp, f.alpha0 * std::exp(Real(-0.5) * q));
        const Real next_t = T[p] * (Real(1) - alpha);
        if (next_t < min_t) {
          done[p] = 1;
          --active;
          continue;
        }
        const Real w = alpha * T[p];
        for (int ch = 0; ch < 3; ++ch) {
          c[3 * p + ch] += w * f.color[ch];
          v[3 * p + ch] += w * f.vel_cam[ch];
        }
        o[p] += w;
        zsum[p] += w * f.depth;
        T[p] = next_t;
        consumed[p] = static_cast<std::int32_t>(k + 1);
      }
    }
  }
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const int p = (y - y0) * tw + (x - x0);
      for (int ch = 0; ch < 3; ++ch) {
        out.color.at(y, x, ch) = c[3 * p + ch];
        out.velocity.at(y, x, ch) = v[3 * p + ch];
      }
      out.opacity.at(y, x) = o[p];
      out.depth_sum.at(y, x) = zsum[p];
      out.depth.at(y, x) = o[p] > Real(0) ? zsum[p] / o[p] : Real(0);
      out.transmittance.at(y, x) = T[p];
      out.contributors.at(y, x) = consumed[p];
    }
}

Vec3 sky_ray(int x, int y, const Camera& cam, const RenderSettings& settings) {
  double u = x + 0.5, v = y + 0.5;
  if (settings.sky_jitter) {
    const std::uint64_t pixel = static_cast<std::uint64_t>(y) * cam.intrinsics.width + x;
    const auto [ju, jv] = counter_uniform2(settings.jitter_seed, settings.jitter_stream, pixel);
    u = x + ju;
    v = y + jv;
  }
  return pixel_ray(u, v, cam);
}

template <typename Real>
void composite_sky(RenderOutput<Real>& out, const CubeMap* cube, const Camera& cam, const RenderSettings& settings) {
  if (cube == nullptr || cube->empty() || !settings.sky) return;
  const int h = out.height(), w = out.width();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 sky = sample_cubemap(*cube, sky_ray(x, y, cam, settings)).color;
      const Real rest = Real(1) - out.opacity.at(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        const Real s = static_cast<Real>(sky[ch]);
        out.sky.at(y, x, ch) = s;
        out.color.at(y, x, ch) += rest * s;
      }
    }
  }
}

template <typename Real>
RenderResult<Real> render_snapshots(std::span<const GaussianSnapshot> snapshots, const CubeMap* cube,
                                    const Camera& cam, const RenderSettings& settings) {
  RenderResult<Real> result;
  result.raster = cull_and_bin<Real>(snapshots, cam, settings);
  result.out = RenderOutput<Real>(cam.intrinsics.height, cam.intrinsics.width);
  const int tiles = result.raster.bins.tile_count();
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < tiles; ++t) composite_tile(result.raster, t, settings, result.out);
  composite_sky(result.out, cube, cam, settings);
  return result;
}

template <typename Real>
RenderResult<Real> render(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                          const GlobalConfig& cfg, const RenderSettings& settings) {
  const auto snaps = snapshot_all(points, t, 0.0, cfg);
  return render_snapshots<Real>(snaps, cube, cam, settings);
}

template <typename Real>
Image<float> colorize_velocity(const RenderOutput<Real>& out, double max_magnitude) {
  Image<float> img(out.height(), out.width(), 3);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const Vec3 c = flow_wheel_color(out.velocity.at(y, x, 0) / max_magnitude,
                                      out.velocity.at(y, x, 1) / max_magnitude);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<float>(c[ch]);
    }
  return img;
}

namespace {

// Middlebury optical-flow color wheel.
std::vector<Vec3> make_color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<Vec3> wheel;
  for (int i = 0; i < RY; ++i) wheel.emplace_back(1.0, double(i) / RY, 0.0);
  for (int i = 0; i < YG; ++i) wheel.emplace_back(1.0 - double(i) / YG, 1.0, 0.0);
  for (int i = 0; i < GC; ++i) wheel.emplace_back(0.0, 1.0, double(i) / GC);
  for (int i = 0; i < CB; ++i) wheel.emplace_back(0.0, 1.0 - double(i) / CB, 1.0);
  for (int i = 0; i < BM; ++i) wheel.emplace_back(double(i) / BM, 0.0, 1.0);
  for (int i = 0; i < MR; ++i) wheel.emplace_back(1.0, 0.0, 1.0 - double(i) / MR);
  return wheel;
}

}  // namespace

Vec3 flow_wheel_color(double fx, double fy) {
  static const std::vector<Vec3> wheel = make_color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const double rad = std::sqrt(fx * fx + fy * fy);
  if (rad == 0.0) return Vec3::Ones();
  const double a = std::atan2(-fy, -fx) / kPi;
  const double fk = (a + 1.0) / 2.0 * (ncols - 1);
  const int k0 = static_cast<int>(std::floor(fk));
  const int k1 = (k0 + 1) % ncols;
  const double f = fk - k0;
  const Vec3 base = (1.0 - f) * wheel[k0] + f * wheel[k1];
  if (rad <= 1.0) return Vec3::Ones() - rad * (Vec3::Ones() - base);
  return 0.75 * base;
}

#define PVG_INSTANTIATE(Real)                                                                                 \
  template struct RenderOutput<Real>;                                                                         \
  template Rasterization<Real> cull_and_bin<Real>(std::span<const GaussianSnapshot>, const Camera&,           \
                                                  const RenderSettings&);                                     \
  template void composite_tile<Real>(const Rasterization<Real>&, int, const RenderSettings&,                  \
                                     RenderOutput<Real>&);                                                    \
  template void composite_sky<Real>(RenderOutput<Real>&, const CubeMap*, const Camera&,                       \
                                    const RenderSettings&);                                                   \
  template RenderResult<Real> render_snapshots<Real>(std::span<const GaussianSnapshot>, const CubeMap*,       \
                                                     const Camera&, const RenderSettings&);                   \
  template RenderResult<Real> render<Real>(std::span<const PvgPoint>, const CubeMap*, const Camera&, double,  \
                                           const GlobalConfig&, const RenderSettings&);                       \
  template Image<float> colorize_velocity<Real>(const RenderOutput<Real>&, double);

PVG_INSTANTIATE(float)
PVG_INSTANTIATE(double)
#undef PVG_INSTANTIATE

}  // namespace pvg
