#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvg/camera.hpp"
#include "pvg/errors.hpp"

namespace pvg {

/// Affine map from raw timestamps to scene time: t = (raw - offset) * scale.
struct TimeMap {
  double offset = 0.0;
  double scale = 1.0;

  double to_scene(double raw) const { return (raw - offset) * scale; }
  double to_raw(double t) const { return t / scale + offset; }
  bool operator==(const TimeMap&) const = default;
};

struct LidarPoint {
  Vec3 position = Vec3::Zero();
  double timestamp = 0.0;
};

struct SceneDataset {
  std::vector<CameraFrame> frames;  // manifest order, scene time
  std::vector<LidarPoint> lidar;    // scene time
  TimeMap time_map;
  double frame_dt = 0.02;
  double scene_radius = 1.0;
  Vec3 scene_center = Vec3::Zero();
};

inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kManifestHeader = "pvg-manifest 1";

struct LoadOptions {
  double frame_dt = 0.02;
  /// Non-positive: estimate from the camera centers unless the manifest sets one.
  double scene_radius = 0.0;
};

/// Reads `root/manifest.txt` and everything it references.
SceneDataset load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

enum class ImageFormat { png, pvgc };

/// Writes a manifest, images, masks and the LiDAR file under `root`. Times are
/// written back in raw units through the dataset's time map.
void save_dataset(const SceneDataset& dataset, const std::filesystem::path& root,
                  ImageFormat format = ImageFormat::pvgc);

std::vector<LidarPoint> read_lidar(const std::filesystem::path& path);
void write_lidar(const std::filesystem::path& path, std::span<const LidarPoint> points);

/// Offset at the earliest timestamp; scale so that the median spacing between
/// consecutive frames of one camera becomes `frame_dt`.
TimeMap fit_time_map(std::span<const CameraFrame> frames, double frame_dt);

/// Centroid of the camera centers.
Vec3 estimate_scene_center(std::span<const CameraFrame> frames);

/// Largest distance of a camera center from the centroid of all centers.
double estimate_scene_radius(std::span<const CameraFrame> frames);

/// Sparse inverse depth for one frame from LiDAR points within half a frame of
/// its timestamp; the nearest point wins per pixel.
ImageF project_lidar_depth(std::span<const LidarPoint> points, const CameraFrame& frame, double frame_dt,
                           double near_clip = kDefaultNearClip);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Every fourth frame of each camera (per-camera index % 4 == 2) is held out.
DatasetSplit split_every_fourth(std::span<const CameraFrame> frames);

}  // namespace pvg
