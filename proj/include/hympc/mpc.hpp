#pragma once

#include <string>
#include <vector>

#include "hympc/dynamics.hpp"

namespace hympc {

using Weights10 = Eigen::Matrix<double, 10, 1>;

inline Weights10 default_state_weights() {
  Weights10 w;
  w << 100, 100, 100, 10, 10, 10, 1, 1, 1, 1;
  return w;
}

// Lighter velocity damping on the waypoint term: the traversal leg must
// carry speed through the gate plane instead of braking into it.
inline Weights10 default_pass_state_weights() {
  Weights10 w;
  w << 100, 100, 100, 1, 1, 1, 1, 1, 1, 1;
  return w;
}

struct CostWeights {
  Vec4d q_u = Vec4d::Constant(0.1);   // on (c - hover, omega)
  Weights10 q_follow = default_state_weights();
  Weights10 q_pass = default_pass_state_weights();
  Weights10 q_terminal = default_state_weights();
  double eta = 10.0;                  // temporal spread amplitude
  // When false the spread weights collapse to the constant eta.
  bool temporal_spread = true;
};

struct SolverConfig {
  int max_iters = 50;
  double grad_tol = 1e-4;      // on the unit-step projected gradient, inf-norm
  double armijo = 1e-4;
  int max_linesearch = 40;
  std::string debug_csv;       // per-iteration dump when nonempty
};

struct MpcConfig {
  int horizon = 50;
  double dt = 0.02;
  DroneLimits limits;
  CostWeights weights;
  SolverConfig solver;

  double horizon_time() const { return horizon * dt; }
};

/// One receding-horizon query: track the gate now, pass through the predicted
/// gate pose at t_p, then head for x_target; lambda mixes the two objectives
/// (lambda = 1 pure follow, lambda = 0 pure pass).
struct MpcRequest {
  DroneState x0;
  GateObservation gate_now;
  GateObservation gate_pred;
  DroneState x_target;
  double lambda = 0.5;
  double t_p = 1.0;
  double t_f = 1.0;
};

struct MpcSolution {
  std::vector<DroneState> states;     // horizon + 1, states[0] == x0
  std::vector<ControlInput> controls; // horizon
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> iteration_costs;  // cost after each accepted step
};

/// Lift a gate observation into the drone state space: position and velocity
/// from the gate center, identity attitude.
DroneState gate_reference_embed(const GateObservation& obs);

double cost_follow(const std::vector<DroneState>& states,
                   const std::vector<ControlInput>& controls,
                   const MpcRequest& req, const MpcConfig& cfg);
double cost_pass(const std::vector<DroneState>& states,
                 const std::vector<ControlInput>& controls,
                 const MpcRequest& req, const MpcConfig& cfg);
double hybrid_cost(const std::vector<DroneState>& states,
                   const std::vector<ControlInput>& controls,
                   const MpcRequest& req, const MpcConfig& cfg);

/// Adjoint gradient of the hybrid cost wrt the control sequence applied from
/// req.x0, one column per step. Diagnostic hook; solve uses the same sweep.
Eigen::Matrix<double, 4, Eigen::Dynamic> hybrid_cost_gradient(
    const MpcRequest& req, const MpcConfig& cfg,
    const std::vector<ControlInput>& controls);

/// Projected-gradient solve over the control sequence, single shooting with
/// the Euler prediction model, analytic adjoint gradient, Barzilai-Borwein
/// step sizes and a monotone Armijo line search. Thread-safe and
/// deterministic; warm_start seeds the initial control sequence.
MpcSolution solve(const MpcRequest& req, const MpcConfig& cfg,
                  const MpcSolution* warm_start = nullptr);

}  // namespace hympc
