#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hympc/gate_predictor.hpp"
#include "hympc/mpc.hpp"

namespace hympc {

/// Gaussian policy over the cost-mixing weight lambda. Samples are clamped
/// to [0, 1] before use.
struct GaussianPolicy {
  double mu = 0.5;
  double sigma = 0.5;
};

struct RewardConfig {
  double zeta = 3.0;            // inverse temperature of the weight soft-max
  double epsilon = 0.3;         // traversal accuracy threshold, meters
  double omega = 99999.0;       // failed-traversal penalty
  double varrho = 10.0;         // temporal spread of the tracking weight
  double success_radius = 0.4;  // episode-level pass bound, meters
};

struct SearchConfig {
  int num_samples = 5;
  std::vector<double> candidate_times;  // empty -> default_candidate_times
  int max_iters = 10;
  double mu_tol = 1e-3;
  double min_sigma = 1e-3;
  double mu0 = 0.5;
  double sigma0 = 0.5;
};

/// Traversal-time candidates: every stride-th grid point of the prediction
/// horizon, i.e. {stride*dt, 2*stride*dt, ...} up to horizon*dt inclusive.
std::vector<double> default_candidate_times(double dt = 0.02, int horizon = 50,
                                            int stride = 5);

enum class TrajectoryClass { kNotReached, kSuccess, kFailure };

struct TrajectoryVerdict {
  TrajectoryClass cls = TrajectoryClass::kNotReached;
  int crossing_index = -1;  // step i of the first plane crossing
  double error = 0.0;       // drone-gate distance at step i, meters
  bool crossed() const { return cls != TrajectoryClass::kNotReached; }
};

/// First-crossing detector on a trajectory against a per-step gate track.
/// A crossing happens between steps i-1 and i when the signed distances of
/// the drone from the gate plane at step i-1 (plane anchored at the gate's
/// step i-1 pose, normal alpha) change sign or touch zero. The traversal
/// error is measured at step i against the gate's step i pose. Success iff
/// error < epsilon (strict). Throws std::invalid_argument on misaligned
/// lists or a zero normal.
TrajectoryVerdict classify(const std::vector<DroneState>& traj,
                           const std::vector<GateObservation>& gate_track,
                           const Vec3d& alpha, double epsilon);

/// Episode return of a planned trajectory. Tracking term sums
/// psi(t_k) * |p_k - g_k|^2 over steps k = 1..n-1 at t_k = k*dt, where psi
/// peaks at t_p for crossed trajectories and at the horizon end for
/// not-reached ones. Crossed trajectories additionally pay -t_p, and failed
/// ones -omega on top.
double reward(const std::vector<DroneState>& traj,
              const std::vector<GateObservation>& gate_track,
              const TrajectoryVerdict& verdict, double t_p,
              const RewardConfig& cfg, double dt);

/// Closed-form reward-weighted refit of the Gaussian policy. Weights are
/// w_i = exp(zeta * (R_i - max R)); the variance uses the weighted Bessel
/// denominator ((sum w)^2 - sum w^2) / sum w and is floored at min_sigma
/// (also the fallback when the denominator degenerates). Throws
/// std::invalid_argument on fewer than two samples or non-finite input.
GaussianPolicy em_update(const std::vector<std::pair<double, double>>& samples,
                         double zeta, double min_sigma = 1e-3);

struct SearchTraceRow {
  int iter = 0;
  double mu = 0.0;
  double sigma = 0.0;
  double best_reward = -std::numeric_limits<double>::infinity();
  double best_t = 0.0;
};

std::string search_trace_header();
void append_search_trace(std::ostream& os, int episode, double t,
                         const std::vector<SearchTraceRow>& rows);

struct SearchResult {
  bool ok = false;
  double lambda = 0.5;
  double t_p = 1.0;
  GaussianPolicy policy;
  double best_reward = -std::numeric_limits<double>::infinity();
  TrajectoryClass predicted_class = TrajectoryClass::kNotReached;
  MpcSolution solution;  // plan at (lambda, t_p)
  int iterations = 0;
};

/// One reward sweep over the candidate times at a fixed lambda; returns the
/// reward-maximizing candidate and its plan. ok = false when every solve
/// failed.
SearchResult sweep_times(const DroneState& x0,
                         const std::vector<GateObservation>& gate_track,
                         const Vec3d& alpha, const DroneState& x_target,
                         double lambda, const SearchConfig& cfg,
                         const MpcConfig& mpc_cfg,
                         const RewardConfig& reward_cfg);

/// Episode-based search for (lambda, t_p) against a fixed predicted gate
/// track (one observation per MPC step, gate_track[0] = current). Samples
/// lambdas from the policy, scores each across the candidate times, refits
/// the policy in closed form until |delta mu| < mu_tol or max_iters, then
/// sweeps the candidate times once more at the converged lambda.
SearchResult search_with_track(const DroneState& x0,
                               const std::vector<GateObservation>& gate_track,
                               const Vec3d& alpha, const DroneState& x_target,
                               const GaussianPolicy& policy0,
                               const SearchConfig& cfg,
                               const MpcConfig& mpc_cfg,
                               const RewardConfig& reward_cfg,
                               std::uint64_t seed,
                               std::vector<SearchTraceRow>* trace = nullptr);

/// Convenience overload: rolls the predictor forward over the MPC horizon
/// and delegates. Requires at least two history entries.
SearchResult search(const DroneState& x0, const GateHistory& hist,
                    const GatePredictor& predictor, const Vec3d& alpha,
                    const DroneState& x_target, const GaussianPolicy& policy0,
                    const SearchConfig& cfg, const MpcConfig& mpc_cfg,
                    const RewardConfig& reward_cfg, std::uint64_t seed,
                    std::vector<SearchTraceRow>* trace = nullptr);

}  // namespace hympc
