#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pvg/errors.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

/// ASCII PLY with one vertex per point and the raw stored parameters:
///   x y z                       mu
///   rot_w rot_x rot_y rot_z     quaternion
///   log_scale_0..2              log standard deviations
///   opacity_logit
///   red green blue              linear color as float
///   tau log_beta
///   vel_x vel_y vel_z
/// Values are written with 17 significant digits, so a save/load cycle is exact.
void write_points_ply(const std::filesystem::path& path, std::span<const PvgPoint> points,
                      const GlobalConfig* cfg = nullptr);
std::vector<PvgPoint> read_points_ply(const std::filesystem::path& path, GlobalConfig* cfg = nullptr);

struct SplitExport {
  std::size_t static_count = 0;
  std::size_t dynamic_count = 0;
};

/// Partitions by classify_static and writes `static.ply` and `dynamic.ply` into `dir`.
SplitExport export_split(std::span<const PvgPoint> points, const GlobalConfig& cfg, double threshold,
                         const std::filesystem::path& dir);

}  // namespace pvg
