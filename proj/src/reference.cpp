#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvg/detail/projection.hpp"
#include "pvg/rasterizer.hpp"

namespace pvg {

template <typename Real>
RenderOutput<Real> render_reference(std::span<const GaussianSnapshot> snapshots, const CubeMap* cube,
                                    const Camera& cam, const RenderSettings& settings) {
  std::vector<SplatFragment<Real>> frags;
  for (const auto& s : snapshots) {
    detail::ProjectedSplat p;
    if (detail::project_splat(s, cam, settings, p))
      frags.push_back(detail::to_fragment<Real>(s, p, cam.extrinsics.rotation));
  }
  std::vector<std::size_t> order(frags.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frags[a].depth != frags[b].depth) return frags[a].depth < frags[b].depth;
    return frags[a].source_index < frags[b].source_index;
  });

  const int h = cam.intrinsics.height, w = cam.intrinsics.width;
  RenderOutput<Real> out(h, w);
  const Real cutoff2 = static_cast<Real>(settings.sigma_cutoff * settings.sigma_cutoff);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Real T = 1, o = 0, zsum = 0;
      Real c[3] = {0, 0, 0}, v[3] = {0, 0, 0};
      std::int32_t used = 0;
      for (std::size_t idx : order) {
        const auto& f = frags[idx];
        const Real dx = (Real(x) + Real(0.5)) - f.mean_x;
        const Real dy = (Real(y) + Real(0.5)) - f.mean_y;
        const Real q = f.conic_a * dx * dx + Real(2) * f.conic_b * dx * dy + f.conic_c * dy * dy;
        if (q > cutoff2) continue;
        Real alpha = f.alpha0 * std::exp(Real(-0.5) * q);
        if (alpha > Real(settings.alpha_clamp)) alpha = Real(settings.alpha_clamp);
        if (T * (Real(1) - alpha) < Real(settings.min_transmittance)) break;
        const Real w8 = T * alpha;
        for (int ch = 0; ch < 3; ++ch) {
          c[ch] += w8 * f.color[ch];
          v[ch] += w8 * f.vel_cam[ch];
        }
        o += w8;
        zsum += w8 * f.depth;
        T *= Real(1) - alpha;
        ++used;
      }
      for (int ch = 0; ch < 3; ++ch) {
        out.color.at(y, x, ch) = c[ch];
        out.velocity.at(y, x, ch) = v[ch];
      }
      out.opacity.at(y, x) = o;
      out.depth_sum.at(y, x) = zsum;
      out.depth.at(y, x) = o > 0 ? zsum / o : Real(0);
      out.transmittance.at(y, x) = T;
      out.contributors.at(y, x) = used;
    }
  }

  if (cube != nullptr && !cube->empty() && settings.sky) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Vec3 sky = sample_cubemap(*cube, sky_ray(x, y, cam, settings)).color;
        for (int ch = 0; ch < 3; ++ch) {
          out.sky.at(y, x, ch) = static_cast<Real>(sky[ch]);
          out.color.at(y, x, ch) += (Real(1) - out.opacity.at(y, x)) * static_cast<Real>(sky[ch]);
        }
      }
  }
  return out;
}

template RenderOutput<float> render_reference<float>(std::span<const GaussianSnapshot>, const CubeMap*,
                                                     const Camera&, const RenderSettings&);
template RenderOutput<double> render_reference<double>(std::span<const GaussianSnapshot>, const CubeMap*,
                                                       const Camera&, const RenderSettings&);

}  // namespace pvg
