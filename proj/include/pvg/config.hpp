#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pvg/adaptive_control.hpp"
#include "pvg/backward.hpp"
#include "pvg/losses.hpp"
#include "pvg/scene_model.hpp"

namespace pvg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flattened "table.key" -> raw value text. Accepts `[table]` headers,
/// `key = value` lines, `#` comments, quoted strings, numbers and booleans.
using ConfigValues = std::map<std::string, std::string>;

ConfigValues parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigValues parse_config_file(const std::filesystem::path& path);
/// "a.b=value" -> {"a.b", "value"}.
std::pair<std::string, std::string> parse_override(const std::string& assignment);

struct InitConfig {
  int lidar_points = 6000;
  int near_points = 2000;
  int far_points = 2000;
  double beta = 0.3;
  double opacity = 0.1;
  /// Far points are sampled uniformly in inverse distance and capped at this
  /// multiple of the scene radius.
  double far_limit = 100.0;
  int cube_resolution = 64;
  double cube_init = 0.5;
};

struct LrConfig {
  /// Position step decays exponentially from mu_init * r to mu_final * r.
  double mu_init = 1.6e-4;
  double mu_final = 1.6e-6;
  /// tau follows the position schedule times this factor; non-positive means frame_dt.
  double tau_scale = 0.0;
  double rot = 0.001;
  double log_scale = 0.005;
  double opacity = 0.005;
  double color = 0.0025;
  double log_beta = 0.02;
  double vel = 1e-3;
  double cube = 0.01;
};

struct TrainConfig {
  int total_iters = 30000;
  double eta = 0.5;
  /// Half-width of the dt window in frames; delta = delta_frames * frame_dt.
  double delta_frames = 1.5;
  int coarse_start_downsample = 16;
  int coarse_step_iters = 5000;
  std::uint64_t seed = 0;
  bool double_precision = false;
  bool sky_jitter = true;
  double static_threshold = 1.0;

  /// A zero radius is resolved against the dataset.
  GlobalConfig scene{.scene_radius = 0.0};
  LossWeights loss;
  ControlConfig control;
  LrConfig lr;
  InitConfig init;
  BackwardOptions paths;

  double delta() const { return delta_frames * scene.frame_dt; }
  void validate() const;
};

/// Applies values to the matching fields. Unknown keys and unparsable values
/// throw ConfigError naming the key.
void apply_config(TrainConfig& cfg, const ConfigValues& values);

/// Every field, one `key = value` per line, grouped by table. Parsing this
/// text back yields the same configuration.
std::string dump_config(const TrainConfig& cfg);

/// Names and one-line descriptions of every key.
std::vector<std::pair<std::string, std::string>> config_reference();

/// Hex CRC-32 of dump_config.
std::string config_digest(const TrainConfig& cfg);

}  // namespace pvg
