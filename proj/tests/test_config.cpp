#include "doctest.h"

#include <filesystem>

#include "pvg/config.hpp"

using namespace pvg;
namespace fs = std::filesystem;

TEST_CASE("config text parsing") {
  const ConfigValues v = parse_config_text(
      "# top comment\n"
      "[train]\n"
      "total_iters = 1200   # trailing comment\n"
      "eta=0.25\n"
      "\n"
      "[scene]\n"
      "dynamics = \"linear # not a comment\"\n");
  CHECK(v.at("train.total_iters") == "1200");
  CHECK(v.at("train.eta") == "0.25");
  CHECK(v.at("scene.dynamics") == "\"linear # not a comment\"");
  CHECK_THROWS_AS(parse_config_text("[train\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\njust words\n"), ConfigError);
  try {
    parse_config_text("[a]\nx = 1\n=2\n", "demo.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("demo.cfg:3") != std::string::npos);
  }
  CHECK(parse_override("loss.lambda_d=0.5") == std::pair<std::string, std::string>{"loss.lambda_d", "0.5"});
  CHECK_THROWS_AS(parse_override("loss.lambda_d"), ConfigError);
}

TEST_CASE("applying values") {
  TrainConfig cfg;
  apply_config(cfg, parse_config_text("[train]\neta = 1\nseed = 9\ndouble_precision = true\n"
                                      "[scene]\ndynamics = \"constant\"\ncycle_length = 0.4\n"
                                      "[control]\nposition_aware = false\n[paths]\nvelocity = false\n"));
  CHECK(cfg.eta == 1.0);
  CHECK(cfg.seed == 9);
  CHECK(cfg.double_precision);
  CHECK(cfg.scene.dynamics == DynamicsModel::constant);
  CHECK(cfg.scene.cycle_length == 0.4);
  CHECK_FALSE(cfg.control.position_aware);
  CHECK_FALSE(cfg.paths.velocity_path);

  CHECK_THROWS_AS(apply_config(cfg, {{"train.etta", "1"}}), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, {{"train.eta", "lots"}}), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, {{"train.total_iters", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, {{"train.sky_jitter", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, {{"scene.dynamics", "\"wobbly\""}}), ConfigError);

  cfg.eta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dump round trip") {
  TrainConfig cfg;
  cfg.eta = 0.123456789012345678;
  cfg.lr.mu_init = 3.3e-5;
  cfg.control.stop_iters = 777;
  cfg.scene.dynamics = DynamicsModel::linear;
  cfg.init.far_points = 11;
  const std::string text = dump_config(cfg);
  TrainConfig back;
  apply_config(back, parse_config_text(text));
  CHECK(dump_config(back) == text);
  CHECK(back.eta == cfg.eta);
  CHECK(back.scene.dynamics == DynamicsModel::linear);
  CHECK(config_digest(back) == config_digest(cfg));
  CHECK(config_digest(TrainConfig{}) != config_digest(cfg));
  CHECK(config_digest(cfg).size() == 8);

  std::size_t keys = 0;
  for (char c : text) keys += c == '=';
  CHECK(keys == config_reference().size());
}

TEST_CASE("default hyperparameters") {
  const TrainConfig cfg;
  CHECK(cfg.total_iters == 30000);
  CHECK(cfg.eta == 0.5);
  CHECK(cfg.delta() == doctest::Approx(1.5 * 0.02));
  CHECK(cfg.coarse_start_downsample == 16);
  CHECK(cfg.coarse_step_iters == 5000);
  CHECK(cfg.scene.cycle_length == 0.2);
  CHECK(cfg.scene.scene_radius == 0.0);
  CHECK(cfg.init.beta == 0.3);
  CHECK(cfg.lr.vel == 1e-3);
  CHECK(cfg.lr.log_beta == 0.02);
  CHECK(cfg.control.grad_threshold == 1.7e-4);
  CHECK(cfg.control.opacity_reset_value == 0.01);
  CHECK(cfg.control.split_scale_decay == 0.8);
  CHECK(cfg.static_threshold == 1.0);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("bundled presets parse") {
  for (const char* name : {"desk.cfg"}) {
    TrainConfig cfg;
    CHECK_NOTHROW(apply_config(cfg, parse_config_file(fs::path(PVG_SOURCE_DIR) / "configs" / name)));
    CHECK_NOTHROW(cfg.validate());
  }
}
