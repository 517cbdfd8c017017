#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "pvg/types.hpp"

namespace pvg {

/// Footprint of one cube-map lookup: texel indices (into CubeMap::texel_index
/// space) and their weights. Four entries inside a face; up to six when a
/// corner texel is missing and the three faces meeting there are averaged.
struct CubeSample {
  Vec3 color = Vec3::Zero();
  std::array<std::int64_t, 6> texel{};
  std::array<double, 6> weight{};
  int count = 0;
};

/// Six square faces (+x, -x, +y, -y, +z, -z) of RGB texels.
class CubeMap {
 public:
  CubeMap() = default;
  /// `resolution` must be a power of two.
  explicit CubeMap(int resolution, const Vec3& fill = Vec3::Constant(0.5));

  static CubeMap from_function(int resolution, const std::function<Vec3(const Vec3&)>& color_of_direction);

  int resolution() const { return resolution_; }
  std::int64_t texel_count() const { return 6LL * resolution_ * resolution_; }
  std::int64_t texel_index(int face, int row, int col) const {
    return (static_cast<std::int64_t>(face) * resolution_ + row) * resolution_ + col;
  }

  std::vector<double>& values() { return texels_; }
  const std::vector<double>& values() const { return texels_; }
  Vec3 texel(std::int64_t index) const { return Vec3(texels_[3 * index], texels_[3 * index + 1], texels_[3 * index + 2]); }
  void set_texel(std::int64_t index, const Vec3& c);

  /// Unit direction through the center of texel (face, row, col); row/col may
  /// lie one texel outside the face.
  Vec3 texel_direction(int face, double row, double col) const;

  bool empty() const { return resolution_ == 0; }
  friend bool operator==(const CubeMap&, const CubeMap&) = default;

 private:
  int resolution_ = 0;
  std::vector<double> texels_;
};

/// Seamless bilinear lookup on the dominant-axis face; samples whose footprint
/// crosses a face edge pull the neighbouring face's texels.
CubeSample sample_cubemap(const CubeMap& cube, const Vec3& dir);

/// Face index and face-local coordinates in [-1, 1] for a direction.
struct FaceCoord {
  int face = 0;
  double s = 0.0;
  double t = 0.0;
};
FaceCoord direction_to_face(const Vec3& dir);

}  // namespace pvg
