#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvg/types.hpp"

namespace pvg {

/// One periodic-vibration Gaussian. Constrained quantities are stored in an
/// unconstrained parameterization: opacity as a logit, scale and lifespan in
/// log space.
struct PvgPoint {
  Vec3 mu = Vec3::Zero();
  Quat rot = identity_quat();
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();
  double tau = 0.0;
  double log_beta = 0.0;
  Vec3 vel = Vec3::Zero();

  Vec3 scale() const { return log_scale.array().exp(); }
  double beta() const;
  double opacity() const;

  bool operator==(const PvgPoint&) const = default;
};

/// How a point's mean moves with time. `periodic` is the vibration model;
/// the other two exist for ablations.
enum class DynamicsModel : std::uint8_t {
  periodic,  // mu + l/(2 pi) sin(2 pi (t - tau) / l) v
  linear,    // mu + (t - tau) v
  constant,  // mu; velocity is ignored
};

const char* to_string(DynamicsModel model);
DynamicsModel dynamics_model_from_string(const std::string& name);

struct GlobalConfig {
  double cycle_length = 0.2;
  double frame_dt = 0.02;
  double scene_radius = 1.0;
  /// Origin of the distance used by position-aware control and initialization.
  Vec3 scene_center = Vec3::Zero();
  DynamicsModel dynamics = DynamicsModel::periodic;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  bool operator==(const GlobalConfig&) const = default;
};

/// A plain 3D Gaussian instantiated from a PvgPoint at a fixed time.
struct GaussianSnapshot {
  Vec3 center = Vec3::Zero();
  Vec3 cov_scale = Vec3::Ones();
  Quat cov_rot = identity_quat();
  double alpha0 = 0.0;
  Vec3 color = Vec3::Zero();
  Vec3 avg_vel = Vec3::Zero();
  std::int64_t source_index = 0;
};

double sigmoid(double x);
double logit(double p);

Vec3 evaluate_mean(const PvgPoint& p, double t, const GlobalConfig& cfg);
/// Effective opacity sigmoid(o) * exp(-(t - tau)^2 / (2 beta^2)).
double evaluate_opacity(const PvgPoint& p, double t);
double staticness(const PvgPoint& p, const GlobalConfig& cfg);
Vec3 average_velocity(const PvgPoint& p, const GlobalConfig& cfg);

GaussianSnapshot snapshot_at(const PvgPoint& p, double t, const GlobalConfig& cfg,
                             std::int64_t index = 0);

/// State at time t estimated by flowing the state at t - dt forward by the
/// average velocity.
GaussianSnapshot estimate_state(const PvgPoint& p, double t, double dt, const GlobalConfig& cfg,
                                std::int64_t index = 0);

std::vector<GaussianSnapshot> snapshot_all(std::span<const PvgPoint> points, double t, double dt,
                                           const GlobalConfig& cfg);

struct StaticPartition {
  std::vector<std::size_t> static_indices;
  std::vector<std::size_t> dynamic_indices;
};

/// Point i is dynamic iff staticness(i) < threshold.
StaticPartition classify_static(std::span<const PvgPoint> points, const GlobalConfig& cfg,
                                double threshold);

/// Partial derivatives of an estimated state with respect to the temporal
/// parameters. Snapshots from snapshot_at are the dt = 0 case.
struct TemporalJacobian {
  double dcenter_dvel = 0.0;          // d center / d v is this scalar times I
  Vec3 dcenter_dtau = Vec3::Zero();
  Vec3 dcenter_dlog_beta = Vec3::Zero();
  double dalpha_dlogit = 0.0;
  double dalpha_dtau = 0.0;
  double dalpha_dlog_beta = 0.0;
  double davg_dvel = 0.0;             // d avg_vel / d v is this scalar times I
  Vec3 davg_dlog_beta = Vec3::Zero();
};

TemporalJacobian temporal_jacobian(const PvgPoint& p, double t, double dt, const GlobalConfig& cfg);

}  // namespace pvg
