#include "pvg/scene_model.hpp"

#include <cmath>
#include <stdexcept>

namespace pvg {

namespace {

// sin/cos of the vibration phase with the argument reduced modulo l first,
// so that |t - tau| >> l does not lose precision.
struct Phase {
  double sin = 0.0;
  double cos = 1.0;
};

Phase vibration_phase(double elapsed, double cycle_length) {
  const double reduced = std::fmod(elapsed, cycle_length);
  const double angle = kTwoPi * reduced / cycle_length;
  return {std::sin(angle), std::cos(angle)};
}

double velocity_decay(const PvgPoint& p, const GlobalConfig& cfg) {
  return std::exp(-0.5 * p.beta() / cfg.cycle_length);
}

}  // namespace

double PvgPoint::beta() const { return std::exp(log_beta); }
double PvgPoint::opacity() const { return sigmoid(opacity_logit); }

const char* to_string(DynamicsModel model) {
  switch (model) {
    case DynamicsModel::periodic: return "periodic";
    case DynamicsModel::linear: return "linear";
    case DynamicsModel::constant: return "constant";
  }
  return "periodic";
}

DynamicsModel dynamics_model_from_string(const std::string& name) {
  if (name == "periodic") return DynamicsModel::periodic;
  if (name == "linear") return DynamicsModel::linear;
  if (name == "constant") return DynamicsModel::constant;
  throw std::invalid_argument("unknown dynamics model '" + name + "'");
}

void GlobalConfig::validate() const {
  if (!(cycle_length > 0.0) || !std::isfinite(cycle_length))
    throw std::invalid_argument("cycle_length must be positive");
  if (!(frame_dt > 0.0) || !std::isfinite(frame_dt))
    throw std::invalid_argument("frame_dt must be positive");
  if (!(scene_radius > 0.0) || !std::isfinite(scene_radius))
    throw std::invalid_argument("scene_radius must be positive");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Vec3 evaluate_mean(const PvgPoint& p, double t, const GlobalConfig& cfg) {
  const double elapsed = t - p.tau;
  switch (cfg.dynamics) {
    case DynamicsModel::periodic: {
      const Phase ph = vibration_phase(elapsed, cfg.cycle_length);
      return p.mu + (cfg.cycle_length / kTwoPi) * ph.sin * p.vel;
    }
    case DynamicsModel::linear: return p.mu + elapsed * p.vel;
    case DynamicsModel::constant: return p.mu;
  }
  return p.mu;
}

double evaluate_opacity(const PvgPoint& p, double t) {
  const double elapsed = t - p.tau;
  const double beta = p.beta();
  return p.opacity() * std::exp(-0.5 * elapsed * elapsed / (beta * beta));
}

double staticness(const PvgPoint& p, const GlobalConfig& cfg) { return p.beta() / cfg.cycle_length; }

Vec3 average_velocity(const PvgPoint& p, const GlobalConfig& cfg) {
  if (cfg.dynamics == DynamicsModel::constant) return Vec3::Zero();
  return p.vel * velocity_decay(p, cfg);
}

GaussianSnapshot snapshot_at(const PvgPoint& p, double t, const GlobalConfig& cfg, std::int64_t index) {
  GaussianSnapshot s;
  s.center = evaluate_mean(p, t, cfg);
  s.cov_scale = p.scale();
  s.cov_rot = p.rot.normalized();
  s.alpha0 = evaluate_opacity(p, t);
  s.color = p.color;
  s.avg_vel = average_velocity(p, cfg);
  s.source_index = index;
  return s;
}

GaussianSnapshot estimate_state(const PvgPoint& p, double t, double dt, const GlobalConfig& cfg,
                                std::int64_t index) {
  if (dt == 0.0) return snapshot_at(p, t, cfg, index);
  GaussianSnapshot s = snapshot_at(p, t - dt, cfg, index);
  s.center += s.avg_vel * dt;
  return s;
}

std::vector<GaussianSnapshot> snapshot_all(std::span<const PvgPoint> points, double t, double dt,
                                           const GlobalConfig& cfg) {
  std::vector<GaussianSnapshot> out(points.size());
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = estimate_state(points[i], t, dt, cfg, i);
  return out;
}

StaticPartition classify_static(std::span<const PvgPoint> points, const GlobalConfig& cfg,
                                double threshold) {
  StaticPartition part;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (staticness(points[i], cfg) < threshold)
      part.dynamic_indices.push_back(i);
    else
      part.static_indices.push_back(i);
  }
  return part;
}

TemporalJacobian temporal_jacobian(const PvgPoint& p, double t, double dt, const GlobalConfig& cfg) {
  TemporalJacobian jac;
  const double t0 = t - dt;
  const double elapsed = t0 - p.tau;
  const double beta = p.beta();
  const double inv_beta2 = 1.0 / (beta * beta);

  switch (cfg.dynamics) {
    case DynamicsModel::periodic: {
      const Phase ph = vibration_phase(elapsed, cfg.cycle_length);
      jac.dcenter_dvel = cfg.cycle_length / kTwoPi * ph.sin;
      jac.dcenter_dtau = -ph.cos * p.vel;
      break;
    }
    case DynamicsModel::linear:
      jac.dcenter_dvel = elapsed;
      jac.dcenter_dtau = -p.vel;
      break;
    case DynamicsModel::constant: break;
  }

  const double alpha0 = evaluate_opacity(p, t0);
  const double sig = p.opacity();
  jac.dalpha_dlogit = alpha0 * (1.0 - sig);
  jac.dalpha_dtau = alpha0 * elapsed * inv_beta2;
  jac.dalpha_dlog_beta = alpha0 * elapsed * elapsed * inv_beta2;

  if (cfg.dynamics != DynamicsModel::constant) {
    const double decay = velocity_decay(p, cfg);
    // d decay / d log_beta = decay * (-beta / (2 l))
    const Vec3 dvbar_dlog_beta = p.vel * decay * (-0.5 * beta / cfg.cycle_length);
    jac.davg_dvel = decay;
    jac.davg_dlog_beta = dvbar_dlog_beta;
    if (dt != 0.0) {
      jac.dcenter_dvel += decay * dt;
      jac.dcenter_dlog_beta = dvbar_dlog_beta * dt;
    }
  }
  return jac;
}

}  // namespace pvg
