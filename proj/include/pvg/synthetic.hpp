#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvg/dataset.hpp"
#include "pvg/rasterizer.hpp"

namespace pvg {

/// A box-shaped cluster of Gaussians moving at constant velocity (raw time units).
struct MoverSpec {
  Vec3 position = Vec3::Zero();  // box center at raw time 0
  Vec3 velocity = Vec3::Zero();
  Vec3 size = Vec3::Ones();      // full box extents
  Vec3 color = Vec3(0.8, 0.2, 0.2);
};

/// World axes follow the camera convention: +y points down, +z forward.
struct SyntheticSceneSpec {
  std::string name = "synthetic";
  int frames = 40;
  int width = 160;
  int height = 120;
  double focal = 140.0;
  double frame_interval = 0.1;  // raw seconds between frames
  double noise = 0.0;           // std-dev of additive pixel noise
  std::uint64_t seed = 1;
  double scene_radius = 4.0;
  double lidar_fraction = 0.25;  // share of visible centers kept per frame

  Vec3 camera_start = Vec3(-0.5, 0.0, 0.0);
  Vec3 camera_end = Vec3(0.5, 0.0, 0.0);
  Vec3 camera_direction = Vec3(0.0, 0.0, 1.0);

  double ground_height = 1.0;
  double ground_half_width = 6.0;
  double ground_near = 2.0;
  double ground_far = 20.0;
  double ground_spacing = 0.25;
  double ground_tile = 1.0;
  Vec3 ground_color_a = Vec3(0.35, 0.33, 0.30);
  Vec3 ground_color_b = Vec3(0.55, 0.50, 0.42);

  double backdrop_distance = 20.0;
  double backdrop_half_width = 14.0;
  double backdrop_top = -4.0;
  double backdrop_spacing = 0.5;
  double backdrop_stripe = 2.0;
  Vec3 backdrop_color_a = Vec3(0.30, 0.45, 0.30);
  Vec3 backdrop_color_b = Vec3(0.50, 0.60, 0.40);

  Vec3 sky_zenith = Vec3(0.25, 0.45, 0.85);
  Vec3 sky_horizon = Vec3(0.75, 0.85, 0.95);

  double mover_spacing = 0.1;
  std::vector<MoverSpec> movers;

  /// Throws SpecInvalid naming the offending field.
  void validate() const;
};

/// Keys as in configs/mover-1.cfg: tables scene, camera, ground, backdrop,
/// sky and one table per mover whose name starts with "mover".
SyntheticSceneSpec parse_synthetic_spec(const std::string& text, const std::string& origin = "<spec>");
SyntheticSceneSpec load_synthetic_spec(const std::filesystem::path& path);
/// The bundled one-mover scene.
SyntheticSceneSpec mover_1_spec();

struct SyntheticScene {
  SyntheticSceneSpec spec;
  SceneDataset dataset;  // scene time
  /// Per frame: 1 where movers contribute more than half the pixel's weight.
  std::vector<ImageF> dynamic_masks;
  /// Per frame: movers' share of each pixel's compositing weight.
  std::vector<ImageF> mover_weight;
  std::vector<GaussianSnapshot> background;
  /// Per mover, Gaussians relative to the box center.
  std::vector<std::vector<GaussianSnapshot>> mover_parts;
  CubeMap sky;

  Vec3 mover_center(std::size_t mover, double scene_time) const;
  /// Inside mover's box (grown by margin) at a scene time.
  bool inside_mover(std::size_t mover, const Vec3& x, double scene_time, double margin = 0.0) const;
  /// Inside the volume the box sweeps over the whole sequence.
  bool inside_swept(std::size_t mover, const Vec3& x, double margin = 0.0) const;
  /// Ground-truth snapshots at a scene time; movers get `marker` as velocity.
  std::vector<GaussianSnapshot> snapshots_at(double scene_time, const Vec3& marker = Vec3::Zero()) const;
};

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec);

/// Dataset (PVGC images), PNG previews, dynamic masks and a JSON summary of the movers.
void save_synthetic(const SyntheticScene& scene, const std::filesystem::path& root);

}  // namespace pvg
