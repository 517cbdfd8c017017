#include "pvg/cubemap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace pvg {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Direction for face-local coordinates (s, t); the inverse of direction_to_face.
Vec3 face_to_direction(int face, double s, double t) {
  switch (face) {
    case 0: return Vec3(1.0, -t, -s);
    case 1: return Vec3(-1.0, -t, s);
    case 2: return Vec3(s, 1.0, t);
    case 3: return Vec3(s, -1.0, -t);
    case 4: return Vec3(s, -t, 1.0);
    default: return Vec3(-s, -t, -1.0);
  }
}

}  // namespace

CubeMap::CubeMap(int resolution, const Vec3& fill) : resolution_(resolution) {
  if (!is_power_of_two(resolution)) throw std::invalid_argument("cube map resolution must be a power of two");
  texels_.resize(static_cast<std::size_t>(texel_count()) * 3);
  for (std::int64_t i = 0; i < texel_count(); ++i) set_texel(i, fill);
}

CubeMap CubeMap::from_function(int resolution, const std::function<Vec3(const Vec3&)>& color_of_direction) {
  CubeMap cube(resolution);
  for (int f = 0; f < 6; ++f)
    for (int r = 0; r < resolution; ++r)
      for (int c = 0; c < resolution; ++c)
        cube.set_texel(cube.texel_index(f, r, c), color_of_direction(cube.texel_direction(f, r, c)));
  return cube;
}

void CubeMap::set_texel(std::int64_t index, const Vec3& c) {
  texels_[3 * index] = c.x();
  texels_[3 * index + 1] = c.y();
  texels_[3 * index + 2] = c.z();
}

Vec3 CubeMap::texel_direction(int face, double row, double col) const {
  const double s = 2.0 * (col + 0.5) / resolution_ - 1.0;
  const double t = 2.0 * (row + 0.5) / resolution_ - 1.0;
  return face_to_direction(face, s, t).normalized();
}

FaceCoord direction_to_face(const Vec3& dir) {
  const double ax = std::abs(dir.x()), ay = std::abs(dir.y()), az = std::abs(dir.z());
  FaceCoord fc;
  if (ax >= ay && ax >= az) {
    fc.face = dir.x() >= 0.0 ? 0 : 1;
    fc.s = (dir.x() >= 0.0 ? -dir.z() : dir.z()) / ax;
    fc.t = -dir.y() / ax;
  } else if (ay >= az) {
    fc.face = dir.y() >= 0.0 ? 2 : 3;
    fc.s = dir.x() / ay;
    fc.t = (dir.y() >= 0.0 ? dir.z() : -dir.z()) / ay;
  } else {
    fc.face = dir.z() >= 0.0 ? 4 : 5;
    fc.s = (dir.z() >= 0.0 ? dir.x() : -dir.x()) / az;
    fc.t = -dir.y() / az;
  }
  return fc;
}

namespace {

// Face-local coordinates of `dir` on a given face (not necessarily the dominant one).
std::pair<double, double> coords_on_face(int face, const Vec3& d) {
  switch (face) {
    case 0: return {-d.z() / d.x(), -d.y() / d.x()};
    case 1: return {d.z() / -d.x(), -d.y() / -d.x()};
    case 2: return {d.x() / d.y(), d.z() / d.y()};
    case 3: return {d.x() / -d.y(), -d.z() / -d.y()};
    case 4: return {d.x() / d.z(), -d.y() / d.z()};
    default: return {-d.x() / -d.z(), -d.y() / -d.z()};
  }
}

int texel_of(double coord, int n) { return std::clamp(static_cast<int>(std::floor(0.5 * (coord + 1.0) * n)), 0, n - 1); }

}  // namespace

CubeSample sample_cubemap(const CubeMap& cube, const Vec3& dir) {
  const int n = cube.resolution();
  const FaceCoord fc = direction_to_face(dir);
  const double fu = 0.5 * (fc.s + 1.0) * n - 0.5;
  const double fv = 0.5 * (fc.t + 1.0) * n - 0.5;
  const int c0 = static_cast<int>(std::floor(fu));
  const int r0 = static_cast<int>(std::floor(fv));
  const double wu = fu - c0;
  const double wv = fv - r0;

  CubeSample out;
  auto add = [&](std::int64_t texel, double w) {
    out.texel[out.count] = texel;
    out.weight[out.count] = w;
    ++out.count;
  };
  auto fetch = [&](int row, int col, double w) {
    const bool row_in = row >= 0 && row < n;
    const bool col_in = col >= 0 && col < n;
    if (row_in && col_in) return add(cube.texel_index(fc.face, row, col), w);
    const double s = 2.0 * (col + 0.5) / n - 1.0;
    const double t = 2.0 * (row + 0.5) / n - 1.0;
    if (row_in || col_in) {
      // Step just past the shared edge at this texel's along-edge position;
      // the neighbouring face's edge texel there is the continuation.
      constexpr double kPast = 1.0 + 1e-7;
      const Vec3 d = face_to_direction(fc.face, col_in ? s : std::copysign(kPast, s), row_in ? t : std::copysign(kPast, t));
      const FaceCoord other = direction_to_face(d);
      return add(cube.texel_index(other.face, texel_of(other.t, n), texel_of(other.s, n)), w);
    }
    // Missing corner texel: average the corner texels of the three faces meeting there.
    const Vec3 corner = face_to_direction(fc.face, std::copysign(1.0, s), std::copysign(1.0, t));
    for (int axis = 0; axis < 3; ++axis) {
      const int face = 2 * axis + (corner[axis] > 0.0 ? 0 : 1);
      const auto [cs, ct] = coords_on_face(face, corner);
      add(cube.texel_index(face, texel_of(ct, n), texel_of(cs, n)), w / 3.0);
    }
  };

  fetch(r0, c0, (1.0 - wu) * (1.0 - wv));
  fetch(r0, c0 + 1, wu * (1.0 - wv));
  fetch(r0 + 1, c0, (1.0 - wu) * wv);
  fetch(r0 + 1, c0 + 1, wu * wv);
  for (int k = 0; k < out.count; ++k) out.color += out.weight[k] * cube.texel(out.texel[k]);
  return out;
}

}  // namespace pvg
