#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "pvg/scene_model.hpp"

using namespace pvg;
using doctest::Approx;

namespace {

PvgPoint moving_point(const Vec3& v, double beta = 0.3, double opacity = 0.8) {
  PvgPoint p;
  p.vel = v;
  p.log_beta = std::log(beta);
  p.opacity_logit = logit(opacity);
  return p;
}

}  // namespace

TEST_CASE("vibrating mean") {
  GlobalConfig cfg;
  PvgPoint p = moving_point(Vec3(1, 0, 0));
  p.mu = Vec3(0.3, -0.2, 4.0);

  SUBCASE("zero velocity stays put") {
    PvgPoint q = p;
    q.vel.setZero();
    for (double t : {-3.0, 0.0, 0.07, 11.5}) CHECK((evaluate_mean(q, t, cfg) - q.mu).norm() == 0.0);
  }
  SUBCASE("at the life peak") { CHECK((evaluate_mean(p, p.tau, cfg) - p.mu).norm() == 0.0); }
  SUBCASE("quarter period") {
    p.mu.setZero();
    const Vec3 m = evaluate_mean(p, 0.05, cfg);
    CHECK(m.x() == Approx(0.0318310).epsilon(1e-6));
    CHECK(m.y() == 0.0);
    CHECK(m.z() == 0.0);
  }
}

TEST_CASE("vibrating mean is periodic, centered and bounded") {
  GlobalConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_period = 0.0;
  bool bounded = true;
  for (int i = 0; i < 1000000; ++i) {
    PvgPoint p;
    p.mu = Vec3(u(rng), u(rng), u(rng)) * 10.0;
    p.vel = Vec3(u(rng), u(rng), u(rng)) * 5.0;
    p.tau = u(rng) * 3.0;
    const double t = u(rng) * 50.0;
    const Vec3 m = evaluate_mean(p, t, cfg);
    const double bound = cfg.cycle_length / (2 * std::numbers::pi) * p.vel.norm();
    if ((m - p.mu).norm() > bound * (1 + 1e-12) + 1e-12) bounded = false;
    if (i % 100 == 0) worst_period = std::max(worst_period, (evaluate_mean(p, t + cfg.cycle_length, cfg) - m).norm());
  }
  CHECK(bounded);
  CHECK(worst_period < 1e-12);

  PvgPoint p = moving_point(Vec3(2, -1, 0.5));
  p.tau = 0.37;
  const int n = 20000;
  const double start = -0.13, span = 3 * cfg.cycle_length;
  Vec3 mean = Vec3::Zero();
  for (int i = 0; i < n; ++i) mean += evaluate_mean(p, start + span * (i + 0.5) / n, cfg);
  mean /= n;
  CHECK((mean - p.mu).norm() <= 1e-6 * cfg.cycle_length / (2 * std::numbers::pi) * p.vel.norm());

  const double h = 1e-5 * cfg.cycle_length;
  const Vec3 deriv = (evaluate_mean(p, p.tau + h, cfg) - evaluate_mean(p, p.tau - h, cfg)) / (2 * h);
  CHECK((deriv - p.vel).norm() / p.vel.norm() < 1e-4);
}

TEST_CASE("decaying opacity") {
  PvgPoint p = moving_point(Vec3::Zero(), 0.3, 0.8);
  p.tau = 1.2;
  CHECK(evaluate_opacity(p, p.tau) == Approx(0.8).epsilon(1e-12));
  CHECK(evaluate_opacity(p, p.tau + 0.3) == Approx(0.8 * std::exp(-0.5)).epsilon(1e-12));
  CHECK(evaluate_opacity(p, p.tau + 0.3) == Approx(0.485225).epsilon(1e-6));
  for (double d : {0.01, 0.2, 0.7, 3.0}) CHECK(evaluate_opacity(p, p.tau + d) == evaluate_opacity(p, p.tau - d));
}

TEST_CASE("staticness and average velocity") {
  GlobalConfig cfg;
  CHECK(staticness(moving_point(Vec3::Zero(), 0.3), cfg) == Approx(1.5));
  CHECK(staticness(moving_point(Vec3::Zero(), cfg.cycle_length), cfg) == Approx(1.0));

  const Vec3 v(2, 0, 0);
  const Vec3 vb = average_velocity(moving_point(v, 0.3), cfg);
  CHECK(vb.x() == Approx(0.944733).epsilon(1e-6));
  CHECK(vb.y() == 0.0);
  CHECK((average_velocity(moving_point(v, 1e-12), cfg) - v).norm() < 1e-9);
  CHECK(average_velocity(moving_point(v, 1e6), cfg).norm() < 1e-12);

  double previous = 1e300, previous_rho = 0.0;
  for (double beta = 1e-3; beta < 100; beta *= 1.3) {
    const PvgPoint p = moving_point(v, beta);
    const double rho = staticness(p, cfg);
    CHECK(rho > previous_rho);
    CHECK(average_velocity(p, cfg).norm() <= previous);
    previous = average_velocity(p, cfg).norm();
    previous_rho = rho;
  }
}

TEST_CASE("snapshots") {
  GlobalConfig cfg;
  PvgPoint p = moving_point(Vec3(0.5, 1, -2), 0.25, 0.6);
  p.mu = Vec3(1, 2, 3);
  p.tau = 0.4;
  p.log_scale = Vec3(-1, -2, -3);
  p.color = Vec3(0.1, 0.2, 0.3);

  const GaussianSnapshot peak = snapshot_at(p, p.tau, cfg, 7);
  CHECK((peak.center - p.mu).norm() == 0.0);
  CHECK(peak.alpha0 == Approx(0.6).epsilon(1e-12));
  CHECK(peak.source_index == 7);

  for (double t : {-0.3, 0.1, 0.55, 2.0}) {
    const GaussianSnapshot s = snapshot_at(p, t, cfg);
    CHECK(s.center == evaluate_mean(p, t, cfg));
    CHECK(s.alpha0 >= 0.0);
    CHECK(s.alpha0 <= 1.0);
    const GaussianSnapshot e = estimate_state(p, t, 0.0, cfg);
    CHECK(e.center == s.center);
    CHECK(e.alpha0 == s.alpha0);
    CHECK(e.avg_vel == s.avg_vel);
  }

  SUBCASE("static points look like plain Gaussians") {
    PvgPoint q = p;
    q.vel.setZero();
    q.log_beta = std::log(1e9);
    for (double t : {-5.0, 0.0, 5.0}) {
      const GaussianSnapshot s = snapshot_at(q, t, cfg);
      CHECK(s.center == q.mu);
      CHECK(s.alpha0 == Approx(q.opacity()).epsilon(1e-12));
      const GaussianSnapshot e = estimate_state(q, t, 0.01, cfg);
      CHECK(e.center == q.mu);
      CHECK(std::abs(e.alpha0 - s.alpha0) < 1e-12);
    }
  }
}

TEST_CASE("estimated state follows a linear trajectory to second order") {
  GlobalConfig cfg;
  PvgPoint p = moving_point(Vec3(1, 0, 0), 1e-8);
  const double c = 2 * std::numbers::pi / cfg.cycle_length * p.vel.norm();
  for (double tau : {0.0, 0.37, -2.5}) {
    p.tau = tau;
    for (double dt : {1e-3, 1e-4}) {
      const Vec3 err = estimate_state(p, tau, dt, cfg).center - evaluate_mean(p, tau, cfg);
      CHECK(err.norm() <= c * dt * dt + 1e-15);
    }
  }
}

TEST_CASE("static/dynamic partition") {
  GlobalConfig cfg;
  std::vector<PvgPoint> points(5, moving_point(Vec3::Zero(), 0.3));
  auto part = classify_static(points, cfg, 1.0);
  CHECK(part.static_indices.size() == 5);
  CHECK(part.dynamic_indices.empty());

  points[3].log_beta = std::log(0.1);
  part = classify_static(points, cfg, 1.0);
  REQUIRE(part.dynamic_indices.size() == 1);
  CHECK(part.dynamic_indices[0] == 3);
  CHECK(part.static_indices == std::vector<std::size_t>{0, 1, 2, 4});

  CHECK(classify_static(points, cfg, 0.0).static_indices.size() == 5);
}

TEST_CASE("global config validation") {
  GlobalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.cycle_length = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = GlobalConfig{};
  cfg.frame_dt = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(dynamics_model_from_string("linear") == DynamicsModel::linear);
  CHECK_THROWS(dynamics_model_from_string("wobbly"));
}
