#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvg/camera.hpp"
#include "pvg/cubemap.hpp"
#include "pvg/image.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

struct RenderSettings {
  int tile_size = 16;
  double near_clip = kDefaultNearClip;
  double dilation = kCovarianceDilation;
  /// Splats only touch pixels within this many standard deviations.
  double sigma_cutoff = 3.0;
  double min_alpha0 = 1.0 / 255.0;
  double alpha_clamp = 0.99;
  double min_transmittance = 1e-4;
  bool sky = true;
  /// Jitter the sky ray inside the pixel footprint. The jitter is a pure
  /// function of (jitter_seed, jitter_stream, pixel).
  bool sky_jitter = false;
  std::uint64_t jitter_seed = 0;
  std::uint64_t jitter_stream = 0;
};

/// A snapshot projected into one view.
template <typename Real>
struct SplatFragment {
  Real mean_x = 0, mean_y = 0;
  // Inverse projected covariance [[a, b], [b, c]].
  Real conic_a = 0, conic_b = 0, conic_c = 0;
  Real alpha0 = 0;
  Real color[3] = {0, 0, 0};
  Real depth = 0;
  Real vel_cam[3] = {0, 0, 0};
  std::int64_t source_index = 0;
  // Inclusive pixel bounds of the cutoff ellipse, clipped to the image.
  int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
};

/// Fragments bucketed into tiles; each bucket is ordered by (depth, source_index).
struct TileBins {
  int tile_size = 16;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::uint32_t> offsets;  // tiles_x * tiles_y + 1
  std::vector<std::uint32_t> entries;  // fragment ids

  int tile_count() const { return tiles_x * tiles_y; }
  std::span<const std::uint32_t> tile(int id) const {
    return {entries.data() + offsets[id], entries.data() + offsets[id + 1]};
  }
};

template <typename Real>
struct Rasterization {
  std::vector<SplatFragment<Real>> fragments;
  TileBins bins;
};

template <typename Real>
struct RenderOutput {
  Image<Real> color;          // C_f: composited splats plus sky
  Image<Real> opacity;        // O
  Image<Real> depth;          // opacity-normalized depth
  Image<Real> velocity;       // camera-frame average velocity, same weights as color
  Image<Real> depth_sum;      // un-normalized sum of T alpha z
  Image<Real> sky;            // f_sky(d) per pixel, zero when sky is off
  Image<Real> transmittance;  // final T
  Image<std::int32_t> contributors;  // bucket entries consumed before termination

  RenderOutput() = default;
  RenderOutput(int height, int width);
  int height() const { return opacity.height(); }
  int width() const { return opacity.width(); }
};

template <typename Real>
struct RenderResult {
  RenderOutput<Real> out;
  Rasterization<Real> raster;
};

/// Projects snapshots and bins them to tiles. Fragments behind the near plane,
/// below min_alpha0, or entirely off screen are dropped.
template <typename Real>
Rasterization<Real> cull_and_bin(std::span<const GaussianSnapshot> snapshots, const Camera& cam,
                                 const RenderSettings& settings);

/// Front-to-back compositing of one tile into `out` (splat channels only).
template <typename Real>
void composite_tile(const Rasterization<Real>& raster, int tile_id, const RenderSettings& settings,
                    RenderOutput<Real>& out);

/// Adds (1 - O) f_sky(d) to the color channel. A null cube leaves color unchanged.
template <typename Real>
void composite_sky(RenderOutput<Real>& out, const CubeMap* cube, const Camera& cam, const RenderSettings& settings);

/// Sky ray for pixel (x, y), jittered when requested by the settings.
Vec3 sky_ray(int x, int y, const Camera& cam, const RenderSettings& settings);

template <typename Real>
RenderResult<Real> render_snapshots(std::span<const GaussianSnapshot> snapshots, const CubeMap* cube,
                                    const Camera& cam, const RenderSettings& settings);

template <typename Real>
RenderResult<Real> render(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                          const GlobalConfig& cfg, const RenderSettings& settings);

/// Serial per-pixel oracle: every pixel walks one globally depth-sorted list
/// of all fragments. Kept for tests and benchmarks.
template <typename Real>
RenderOutput<Real> render_reference(std::span<const GaussianSnapshot> snapshots, const CubeMap* cube,
                                    const Camera& cam, const RenderSettings& settings);

/// Flow-style color coding of the image-parallel part of the velocity channel.
/// Magnitudes at or beyond `max_magnitude` saturate.
template <typename Real>
Image<float> colorize_velocity(const RenderOutput<Real>& out, double max_magnitude = 1.0);

/// Color for one image-plane flow vector, components pre-divided by the
/// saturation magnitude.
Vec3 flow_wheel_color(double fx, double fy);

}  // namespace pvg
