#include "hympc/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hympc {
namespace {

using nlohmann::json;

TEST(Config, DefaultsMatchScenarioConstants) {
  const ScenarioConfig cfg = default_scenario();
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.num_trials, 20);
  EXPECT_EQ(cfg.controller, ControllerKind::kGaussian);
  EXPECT_TRUE(cfg.start.p.isApprox(Vec3d(-5, 0, 1.5)));
  EXPECT_TRUE(cfg.target.p.isApprox(Vec3d(4, 0, 1)));
  EXPECT_TRUE(cfg.gate.geometry.pivot.isApprox(Vec3d(2, 0, 3)));
  EXPECT_DOUBLE_EQ(cfg.gate.geometry.arm_length, 2.0);
  EXPECT_DOUBLE_EQ(cfg.episode.tick_dt, 0.02);
  EXPECT_DOUBLE_EQ(cfg.episode.timeout, 10.0);
  EXPECT_DOUBLE_EQ(cfg.mpc.limits.sim_c_max, 20.0);
  EXPECT_DOUBLE_EQ(cfg.reward.success_radius, 0.4);
  EXPECT_EQ(cfg.search.num_samples, 5);
  EXPECT_EQ(cfg.collect.num_samples, 3000);
  EXPECT_EQ(cfg.multigate.num_gates, 3);
}

TEST(Config, JsonRoundTripPreservesEveryField) {
  ScenarioConfig cfg = default_scenario();
  cfg.seed = 77;
  cfg.workers = 3;
  cfg.num_trials = 11;
  cfg.controller = ControllerKind::kDeep;
  cfg.start.p = Vec3d(-3.5, 0.2, 1.1);
  cfg.start.v = Vec3d(0.5, 0, 0);
  cfg.target.p = Vec3d(5, -0.1, 0.9);
  cfg.gate.geometry.arm_length = 1.5;
  cfg.gate.damping = 0.05;
  cfg.gate.theta0_range = {-0.3, 0.3};
  cfg.episode.timeout = 6.0;
  cfg.mpc.horizon = 40;
  cfg.mpc.limits.sim_c_max = 15.0;
  cfg.mpc.weights.eta = 7.5;
  cfg.mpc.weights.temporal_spread = false;
  cfg.mpc.solver.max_iters = 33;
  cfg.search.num_samples = 7;
  cfg.candidate_stride = 10;
  cfg.reward.zeta = 2.0;
  cfg.predictor.hidden = {32, 16};
  cfg.deep.hidden = {64};
  cfg.deep.epochs = 5;
  cfg.deep_model_dir = "elsewhere";
  cfg.standard_lambda = 0.25;
  cfg.collect.num_samples = 42;
  cfg.sweeps.distances = {1.0, 2.5};
  cfg.sweeps.sim_c_max_values = {12.0, 14.0};
  cfg.multigate.num_gates = 2;
  cfg.multigate.spacing = 3.0;

  const ScenarioConfig back = config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.controller, ControllerKind::kDeep);
  EXPECT_TRUE(back.start.p.isApprox(cfg.start.p));
  EXPECT_DOUBLE_EQ(back.gate.damping, 0.05);
  EXPECT_EQ(back.mpc.horizon, 40);
  EXPECT_FALSE(back.mpc.weights.temporal_spread);
  EXPECT_EQ(back.predictor.hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(back.deep.hidden, (std::vector<int>{64}));
  EXPECT_EQ(back.deep_model_dir, "elsewhere");
  EXPECT_EQ(back.sweeps.distances, (std::vector<double>{1.0, 2.5}));
  EXPECT_EQ(back.multigate.num_gates, 2);
}

TEST(Config, PartialJsonKeepsDefaultsElsewhere) {
  json doc;
  doc["seed"] = 9;
  doc["mpc"]["horizon"] = 25;
  const ScenarioConfig cfg = config_from_json(doc);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.mpc.horizon, 25);
  EXPECT_EQ(cfg.num_trials, default_scenario().num_trials);
  EXPECT_DOUBLE_EQ(cfg.mpc.dt, default_scenario().mpc.dt);
}

TEST(Config, UnknownKeysAreRejected) {
  json doc;
  doc["seeed"] = 9;
  EXPECT_THROW(config_from_json(doc), std::invalid_argument);
  json nested;
  nested["mpc"]["horizn"] = 25;
  EXPECT_THROW(config_from_json(nested), std::invalid_argument);
}

TEST(Config, ControllerNamesRoundTrip) {
  for (ControllerKind k :
       {ControllerKind::kGaussian, ControllerKind::kDeep,
        ControllerKind::kOracle, ControllerKind::kStandard,
        ControllerKind::kManual}) {
    EXPECT_EQ(controller_from_string(to_string(k)), k);
  }
  EXPECT_THROW(controller_from_string("pid"), std::invalid_argument);
}

TEST(Config, ValidateCatchesBadValues) {
  {
    ScenarioConfig cfg = default_scenario();
    cfg.episode.tick_dt = 0.0;
    EXPECT_THROW(validate(cfg), std::invalid_argument);
  }
  {
    ScenarioConfig cfg = default_scenario();
    cfg.mpc.limits.c_min = 25.0;
    EXPECT_THROW(validate(cfg), std::invalid_argument);
  }
  {
    ScenarioConfig cfg = default_scenario();
    cfg.gate.theta0_range = {0.5, -0.5};
    EXPECT_THROW(validate(cfg), std::invalid_argument);
  }
  {
    ScenarioConfig cfg = default_scenario();
    cfg.multigate.num_gates = 0;
    EXPECT_THROW(validate(cfg), std::invalid_argument);
  }
  EXPECT_NO_THROW(validate(default_scenario()));
}

TEST(Config, SaveLoadFile) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "hympc_cfg_test.json").string();
  ScenarioConfig cfg = default_scenario();
  cfg.seed = 123;
  cfg.controller = ControllerKind::kStandard;
  save_config(cfg, path);
  const ScenarioConfig back = load_config(path);
  EXPECT_EQ(to_json(back), to_json(cfg));
  std::remove(path.c_str());
  EXPECT_THROW(load_config(path), std::runtime_error);
}

TEST(Config, CandidateTimesFollowStrideAndHorizon) {
  ScenarioConfig cfg = default_scenario();
  cfg.candidate_stride = 10;
  const std::vector<double> times = scenario_candidate_times(cfg);
  ASSERT_EQ(times.size(), 5u);
  EXPECT_NEAR(times.front(), 0.2, 1e-12);
  EXPECT_NEAR(times.back(), 1.0, 1e-12);
  cfg.candidate_stride = 25;
  const std::vector<double> wide = scenario_candidate_times(cfg);
  ASSERT_EQ(wide.size(), 2u);
  EXPECT_NEAR(wide[0], 0.5, 1e-12);
  EXPECT_NEAR(wide[1], 1.0, 1e-12);
}

}  // namespace
}  // namespace hympc
