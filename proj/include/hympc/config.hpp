#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hympc/deep_policy.hpp"
#include "hympc/gate_predictor.hpp"
#include "hympc/mpc.hpp"
#include "hympc/policy_search.hpp"

namespace hympc {

enum class ControllerKind { kGaussian, kDeep, kOracle, kStandard, kManual };

std::string to_string(ControllerKind kind);
ControllerKind controller_from_string(const std::string& name);

/// Pendulum gate scenario: fixed geometry, randomized initial swing.
struct GateScenario {
  GateGeometry geometry;
  double gravity = 9.81;
  double damping = 0.0;
  std::array<double, 2> theta0_range{-0.7853981633974483,
                                     0.7853981633974483};  // +- pi/4
  std::array<double, 2> theta_dot0_range{-0.15707963267948966,
                                         0.15707963267948966};  // +- pi/20
};

struct EpisodeConfig {
  double tick_dt = 0.02;
  double timeout = 10.0;
  double crash_bound = 20.0;  // abort when |p_i| exceeds this or z < 0
};

struct CollectConfig {
  int num_samples = 3000;
  std::array<double, 2> x_range{-5.0, 1.0};
  std::array<double, 2> y_range{-1.0, 1.0};
  std::array<double, 2> z_range{1.0, 2.0};
};

struct SweepConfig {
  std::vector<double> distances{1, 2, 3, 4, 5, 6};
  std::vector<double> sim_c_max_values{12, 13, 14, 15, 16, 17, 18, 19, 20};
};

struct MultigateConfig {
  int num_gates = 3;
  double spacing = 4.0;        // pivot-to-pivot along the flight axis
  double behind_offset = 2.0;  // target distance past the active gate
};

/// Full experiment description; the JSON document mirrors this struct with
/// every numeric default present as a named key.
struct ScenarioConfig {
  std::uint64_t seed = 1;
  int workers = 1;
  int num_trials = 20;
  ControllerKind controller = ControllerKind::kGaussian;
  DroneState start;
  DroneState target;
  GateScenario gate;
  EpisodeConfig episode;
  MpcConfig mpc;
  SearchConfig search;
  int candidate_stride = 5;  // MPC steps between traversal-time candidates
  RewardConfig reward;
  PredictorConfig predictor;
  DeepPolicyConfig deep;
  std::string deep_model_dir = "models";
  double standard_lambda = 0.5;
  CollectConfig collect;
  SweepConfig sweeps;
  MultigateConfig multigate;
};

/// Defaults with the experiment geometry filled in (start podium, target).
ScenarioConfig default_scenario();

/// Traversal-time candidates implied by the MPC grid and candidate stride.
std::vector<double> scenario_candidate_times(const ScenarioConfig& cfg);

nlohmann::json to_json(const ScenarioConfig& cfg);

/// Applies the document on top of defaults. Unknown keys anywhere in the
/// document are an error, as are invariant violations.
ScenarioConfig config_from_json(const nlohmann::json& doc);

void save_config(const ScenarioConfig& cfg, const std::string& path);
ScenarioConfig load_config(const std::string& path);

/// Throws std::invalid_argument when any nested invariant is violated.
void validate(const ScenarioConfig& cfg);

}  // namespace hympc
