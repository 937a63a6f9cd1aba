#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hympc/config.hpp"
#include "hympc/deep_policy.hpp"
#include "hympc/policy_search.hpp"

namespace hympc {

/// Distance-ratio schedule for the hand-tuned baseline: current
/// drone-gate separation over the separation at flight start, clamped to
/// [0, 1]. Zero initial separation maps to 0.
double manual_lambda(const DroneState& drone, const GateObservation& gate_now,
                     const DroneState& drone0, const GateObservation& gate0);

/// Spearman rank correlation with average ranks for ties.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

/// What the controller decided at one tick; the first control of `solution`
/// is what gets executed.
struct ControlDecision {
  double lambda = 0.5;
  double t_p = 1.0;
  MpcSolution solution;
};

struct EpisodeMetrics {
  bool success = false;
  bool crossed = false;
  bool crashed = false;
  bool solver_failed = false;
  std::optional<double> traversal_error;  // meters, present iff crossed
  std::optional<double> traversal_time;   // seconds, present iff crossed
  int ticks = 0;
  double duration = 0.0;  // simulated seconds
  std::string reason;     // crossed | timeout | crash | solver
};

/// Per-tick observer; receives the pre-step drone state, the gate observation
/// the controller saw, and the decision it made.
using TickTap = std::function<void(double t, const DroneState& drone,
                                   const GateObservation& gate,
                                   const ControlDecision& decision)>;

struct EpisodeOptions {
  std::string csv_path;               // per-tick log when nonempty
  const DeepPolicy* deep = nullptr;   // required for the deep controller
  TickTap tap;                        // optional per-tick observer
};

/// One closed-loop flight against a freshly randomized gate swing. The
/// controller kind, geometry, and all solver settings come from cfg; seed
/// drives the gate initialization and every stochastic component.
EpisodeMetrics run_episode(const ScenarioConfig& cfg, std::uint64_t seed,
                           const EpisodeOptions& opts = {});

struct GateCrossing {
  int gate = -1;
  double time = 0.0;   // cumulative episode time at the crossing
  double error = 0.0;  // meters at the crossing step
  bool success = false;
};

struct MultigateMetrics {
  std::vector<GateCrossing> crossings;  // in traversal order
  bool crashed = false;
  bool solver_failed = false;
  int ticks = 0;
  double duration = 0.0;
  std::string reason;  // done | timeout | crash | solver
};

/// Sequential traversal of a row of independently swinging gates; the active
/// target sits behind_offset past the gate currently being attacked.
MultigateMetrics run_multigate_episode(const ScenarioConfig& cfg,
                                       std::uint64_t seed,
                                       const EpisodeOptions& opts = {});

/// Supervision harvesting: search-driven flights from randomized starts until
/// cfg.collect.num_samples records accumulate. Episodes that crash or lose
/// the solver are skipped entirely. Deterministic in (cfg, seed).
ReplayBuffer collect(const ScenarioConfig& cfg, std::uint64_t seed,
                     std::ostream* progress = nullptr);

enum class SuiteKind { kCompare, kDistanceSweep, kRobustness, kMultigate };

std::string to_string(SuiteKind kind);
SuiteKind suite_from_string(const std::string& name);

struct SuiteOptions {
  std::string out_dir;               // reports (and episode logs) when nonempty
  const DeepPolicy* deep = nullptr;  // used by controllers that need it
  std::ostream* progress = nullptr;
};

/// Runs one study and returns its report; per-episode failures are counted,
/// never fatal. When out_dir is set the report is also written to
/// <out_dir>/<suite>.json and episode CSV logs go to <out_dir>/logs/.
nlohmann::json run_suite(SuiteKind kind, const ScenarioConfig& cfg,
                         const SuiteOptions& opts = {});

/// num_trials episodes of the configured controller; the aggregate block of a
/// single-controller report.
nlohmann::json run_eval(const ScenarioConfig& cfg, const SuiteOptions& opts = {});

}  // namespace hympc
