#include "hympc/mpc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hympc {
namespace {

constexpr double kG = 9.81;

MpcConfig base_config() {
  MpcConfig cfg;
  cfg.horizon = 50;
  cfg.dt = 0.02;
  return cfg;
}

GateObservation still_gate(const Vec3d& center) {
  GateObservation o;
  o.center = center;
  return o;
}

// Straight hover trajectory of the right shape, for cost-function oracles.
std::pair<std::vector<DroneState>, std::vector<ControlInput>> hover_traj(
    const MpcConfig& cfg, const Vec3d& at) {
  DroneState s;
  s.p = at;
  std::vector<DroneState> states(cfg.horizon + 1, s);
  std::vector<ControlInput> controls(cfg.horizon, ControlInput{kG, Vec3d::Zero()});
  return {states, controls};
}

MpcRequest hover_request(const MpcConfig& cfg, const Vec3d& at) {
  MpcRequest req;
  req.x0.p = at;
  req.x_target = req.x0;
  req.gate_now = still_gate(at);
  req.gate_pred = still_gate(at);
  req.lambda = 0.5;
  req.t_p = 0.5;
  req.t_f = cfg.horizon_time();
  return req;
}

TEST(GateReferenceEmbed, MapsCenterAndVelocity) {
  GateObservation o;
  o.center = Vec3d(1, 2, 3);
  o.center_vel = Vec3d(-0.5, 0.25, 0);
  const DroneState s = gate_reference_embed(o);
  EXPECT_EQ(s.p, o.center);
  EXPECT_EQ(s.v, o.center_vel);
  EXPECT_LT((quat_coeffs(s.q) - Vec4d(1, 0, 0, 0)).norm(), 1e-15);
}

TEST(CostFollow, PositionOffsetAtPeak) {
  MpcConfig cfg = base_config();
  cfg.weights.q_u.setZero();
  cfg.weights.q_follow.setZero();
  cfg.weights.q_follow.head<3>().setOnes();

  const Vec3d gate(2, 0, 1);
  auto [states, controls] = hover_traj(cfg, gate);
  MpcRequest req = hover_request(cfg, gate);
  req.t_f = 0.0;  // spread peak at the first step
  states[0].p += Vec3d(0.1, 0, 0);

  EXPECT_NEAR(cost_follow(states, controls, req, cfg), 10.0 * 0.01, 1e-12);
}

TEST(CostFollow, SpreadDecaysAsSquaredExponential) {
  MpcConfig cfg = base_config();
  cfg.horizon = 100;  // t goes up to 2 s
  cfg.weights.q_u.setZero();
  cfg.weights.q_follow.setZero();
  cfg.weights.q_follow.head<3>().setOnes();

  const Vec3d gate(2, 0, 1);
  auto [states, controls] = hover_traj(cfg, gate);
  MpcRequest req = hover_request(cfg, gate);
  req.t_f = 0.0;
  states[100].p += Vec3d(1, 0, 0);  // offset at |t - t_f| = 2 s

  EXPECT_NEAR(cost_follow(states, controls, req, cfg),
              10.0 * std::exp(-4.0), 1e-12);
}

TEST(CostPass, TerminalOffsetOnly) {
  MpcConfig cfg = base_config();
  cfg.weights.q_u.setZero();
  cfg.weights.q_pass.setZero();
  cfg.weights.q_terminal.setZero();
  cfg.weights.q_terminal.head<3>().setOnes();

  const Vec3d gate(2, 0, 1);
  auto [states, controls] = hover_traj(cfg, gate);
  MpcRequest req = hover_request(cfg, gate);
  const Vec3d e(0.3, -0.1, 0.2);
  states[cfg.horizon].p += e;

  EXPECT_NEAR(cost_pass(states, controls, req, cfg), e.squaredNorm(), 1e-12);
}

TEST(CostPass, AntipodalQuaternionCostsNothing) {
  MpcConfig cfg = base_config();
  cfg.weights.q_u.setZero();
  cfg.weights.q_pass.setZero();
  cfg.weights.q_terminal.setZero();
  cfg.weights.q_terminal.tail<4>().setOnes();

  const Vec3d gate(2, 0, 1);
  auto [states, controls] = hover_traj(cfg, gate);
  MpcRequest req = hover_request(cfg, gate);
  // -q represents the same attitude; hemisphere alignment must zero it out.
  states[cfg.horizon].q = Quatd(-1, 0, 0, 0);

  EXPECT_NEAR(cost_pass(states, controls, req, cfg), 0.0, 1e-15);
  states[cfg.horizon].q = Quatd(0, 1, 0, 0);  // genuinely different attitude
  EXPECT_GT(cost_pass(states, controls, req, cfg), 1.0);
}

TEST(HybridCost, AffineInLambda) {
  MpcConfig cfg = base_config();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto [states, controls] = hover_traj(cfg, Vec3d(2, 0, 1));
  for (auto& s : states) {
    s.p += 0.3 * Vec3d(n(rng), n(rng), n(rng));
    s.v = 0.5 * Vec3d(n(rng), n(rng), n(rng));
    s.q = quat_renormalize(Quatd(4.0, 0.3 * n(rng), 0.3 * n(rng), 0.3 * n(rng)));
  }
  for (auto& u : controls) {
    u.c = 10 + n(rng);
    u.omega = Vec3d(n(rng), n(rng), n(rng));
  }
  MpcRequest req = hover_request(cfg, Vec3d(2, 0, 1));
  req.gate_pred = still_gate(Vec3d(2, 0.5, 1.2));
  req.x_target.p = Vec3d(4, 0, 1);
  req.t_p = 0.6;

  const double f = cost_follow(states, controls, req, cfg);
  const double p = cost_pass(states, controls, req, cfg);
  for (double lam : {0.0, 0.17, 0.5, 0.83, 1.0}) {
    req.lambda = lam;
    EXPECT_NEAR(hybrid_cost(states, controls, req, cfg),
                lam * f + (1 - lam) * p, 1e-10);
  }
  req.lambda = 0.5;
  const double mid = hybrid_cost(states, controls, req, cfg);
  EXPECT_NEAR(2.0 * mid, f + p, 1e-10);
}

TEST(HybridCostGradient, MatchesFiniteDifferences) {
  MpcConfig cfg = base_config();
  cfg.horizon = 8;
  MpcRequest req = hover_request(cfg, Vec3d(0, 0, 1.5));
  req.gate_now = still_gate(Vec3d(1.5, 0.4, 1.2));
  req.gate_pred = still_gate(Vec3d(1.5, -0.4, 1.4));
  req.gate_pred.center_vel = Vec3d(0, 1.2, 0.3);
  req.x_target.p = Vec3d(3, 0, 1);
  req.lambda = 0.35;
  req.t_p = 0.1;
  req.x0.v = Vec3d(2.0, 0.1, -0.2);
  req.x0.q = quat_renormalize(Quatd(0.9, 0.1, -0.2, 0.15));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uc(6.0, 14.0);
  std::uniform_real_distribution<double> uw(-2.0, 2.0);
  std::vector<ControlInput> controls(cfg.horizon);
  for (auto& u : controls) {
    u.c = uc(rng);
    u.omega = Vec3d(uw(rng), uw(rng), uw(rng));
  }

  const auto grad = hybrid_cost_gradient(req, cfg, controls);

  const auto cost_of = [&](const std::vector<ControlInput>& us) {
    std::vector<DroneState> states(cfg.horizon + 1);
    states[0] = req.x0;
    for (int k = 0; k < cfg.horizon; ++k) {
      states[k + 1] = drone_step_euler(states[k], us[k], cfg.dt, kG);
    }
    return hybrid_cost(states, us, req, cfg);
  };

  const double h = 1e-6;
  for (int k = 0; k < cfg.horizon; ++k) {
    for (int i = 0; i < 4; ++i) {
      auto up = controls, dn = controls;
      auto bump = [&](std::vector<ControlInput>& v, double s) {
        if (i == 0) v[k].c += s;
        else v[k].omega(i - 1) += s;
      };
      bump(up, h);
      bump(dn, -h);
      const double fd = (cost_of(up) - cost_of(dn)) / (2 * h);
      EXPECT_NEAR(grad(i, k), fd, 1e-4 * std::max(1.0, std::abs(fd)))
          << "k=" << k << " i=" << i;
    }
  }
}

TEST(Solve, HoverFeasibleStaysPut) {
  MpcConfig cfg = base_config();
  const Vec3d at(2, 0, 1);
  const MpcRequest req = hover_request(cfg, at);
  const MpcSolution sol = solve(req, cfg);

  EXPECT_TRUE(sol.converged);
  for (const auto& u : sol.controls) {
    EXPECT_NEAR(u.c, kG, 0.1);
    EXPECT_LT(u.omega.norm(), 0.1);
  }
  for (const auto& s : sol.states) {
    EXPECT_LT((s.p - at).norm(), 0.05);
  }
}

TEST(Solve, RespectsBoxLimitsExactly) {
  MpcConfig cfg = base_config();
  MpcRequest req = hover_request(cfg, Vec3d(0, 0, 1));
  req.x_target.p = Vec3d(8, 0, 6);  // aggressive reach
  req.gate_now = still_gate(Vec3d(4, 2, 3));
  req.gate_pred = still_gate(Vec3d(4, -2, 3));
  req.lambda = 0.2;
  req.t_p = 0.4;
  const MpcSolution sol = solve(req, cfg);

  bool saturated = false;
  for (const auto& u : sol.controls) {
    EXPECT_GE(u.c, cfg.limits.c_min);
    EXPECT_LE(u.c, cfg.limits.c_max);
    for (int i = 0; i < 3; ++i) {
      EXPECT_LE(std::abs(u.omega(i)), cfg.limits.omega_max);
    }
    if (u.c >= cfg.limits.c_max - 1e-9) saturated = true;
  }
  EXPECT_TRUE(saturated);
}

TEST(Solve, ReplayAndCostConsistency) {
  MpcConfig cfg = base_config();
  MpcRequest req = hover_request(cfg, Vec3d(-1, 0.5, 1.2));
  req.gate_now = still_gate(Vec3d(2, 0.7, 1));
  req.gate_pred = still_gate(Vec3d(2, -0.7, 1.4));
  req.x_target.p = Vec3d(4, 0, 1);
  req.lambda = 0.4;
  req.t_p = 0.7;
  const MpcSolution sol = solve(req, cfg);

  DroneState x = sol.states[0];
  EXPECT_EQ(x.p, req.x0.p);
  double replay_err = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    x = drone_step_euler(x, sol.controls[k], cfg.dt, cfg.limits.g);
    replay_err = std::max(
        replay_err, (x.to_vec() - sol.states[k + 1].to_vec()).norm());
  }
  EXPECT_LT(replay_err, 1e-9);
  EXPECT_NEAR(sol.cost, hybrid_cost(sol.states, sol.controls, req, cfg), 1e-9);
}

TEST(Solve, IterationCostsMonotone) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  MpcConfig cfg = base_config();
  for (int trial = 0; trial < 20; ++trial) {
    MpcRequest req = hover_request(cfg, Vec3d(-3 + 2 * u01(rng), u01(rng), 1.5));
    req.x0.v = Vec3d(3 * u01(rng), u01(rng) - 0.5, u01(rng) - 0.5);
    req.gate_now = still_gate(Vec3d(2, 1.4 * u01(rng) - 0.7, 1 + u01(rng)));
    req.gate_now.center_vel = Vec3d(0, 2 * u01(rng) - 1, u01(rng));
    req.gate_pred = still_gate(Vec3d(2, 1.4 * u01(rng) - 0.7, 1 + u01(rng)));
    req.x_target.p = Vec3d(4, 0, 1);
    req.lambda = u01(rng);
    req.t_p = 0.1 + 0.9 * u01(rng);
    const MpcSolution sol = solve(req, cfg);
    ASSERT_GE(sol.iteration_costs.size(), 1u);
    for (std::size_t i = 1; i < sol.iteration_costs.size(); ++i) {
      EXPECT_LE(sol.iteration_costs[i], sol.iteration_costs[i - 1] + 1e-12);
    }
    EXPECT_DOUBLE_EQ(sol.iteration_costs.back(), sol.cost);
  }
}

TEST(Solve, WarmStartNeverWorse) {
  MpcConfig cfg = base_config();
  MpcRequest req = hover_request(cfg, Vec3d(-2, 0, 1.5));
  req.gate_now = still_gate(Vec3d(2, 0.5, 1.3));
  req.gate_pred = still_gate(Vec3d(2, -0.5, 1.3));
  req.x_target.p = Vec3d(4, 0, 1);
  req.lambda = 0.3;
  req.t_p = 0.6;
  const MpcSolution cold = solve(req, cfg);
  const MpcSolution warm = solve(req, cfg, &cold);
  EXPECT_LE(warm.cost, cold.cost + 1e-12);
}

TEST(Solve, LambdaExtremesShapeTheTrajectory) {
  MpcConfig cfg = base_config();
  cfg.solver.max_iters = 4000;  // compare optima, not iteration budgets
  // Start at the gate: pure follow should hold position, pure pass should
  // leave through it toward the target.
  MpcRequest req = hover_request(cfg, Vec3d(1.5, 0, 1));
  req.gate_now = still_gate(Vec3d(1.5, 0, 1));
  req.gate_pred = still_gate(Vec3d(1.5, 0, 1));
  req.x_target.p = Vec3d(3, 0, 1);
  req.t_p = 0.1;

  req.lambda = 1.0;
  const MpcSolution follow = solve(req, cfg);
  req.lambda = 0.0;
  const MpcSolution pass = solve(req, cfg);
  EXPECT_TRUE(follow.converged);
  EXPECT_TRUE(pass.converged);

  auto mean_gate_dist = [&](const MpcSolution& sol) {
    double acc = 0.0;
    for (const auto& s : sol.states) acc += (s.p - req.gate_now.center).norm();
    return acc / sol.states.size();
  };
  EXPECT_LT(mean_gate_dist(follow), mean_gate_dist(pass));
  EXPECT_LT((pass.states.back().p - req.x_target.p).norm(),
            (follow.states.back().p - req.x_target.p).norm());
}

TEST(Solve, ConvergedFlagHonest) {
  MpcConfig cfg = base_config();
  cfg.solver.max_iters = 1;
  MpcRequest req = hover_request(cfg, Vec3d(-3, 0, 1));
  req.gate_now = still_gate(Vec3d(2, 1, 2));
  req.x_target.p = Vec3d(4, 0, 1);
  req.lambda = 0.2;
  const MpcSolution sol = solve(req, cfg);
  EXPECT_FALSE(sol.converged);
  EXPECT_LE(sol.iterations, 1);
}

TEST(Solve, DeterministicAcrossCalls) {
  MpcConfig cfg = base_config();
  MpcRequest req = hover_request(cfg, Vec3d(-2, 0.3, 1.1));
  req.gate_now = still_gate(Vec3d(2, -0.6, 1.6));
  req.x_target.p = Vec3d(4, 0, 1);
  req.lambda = 0.45;
  const MpcSolution a = solve(req, cfg);
  const MpcSolution b = solve(req, cfg);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.iterations, b.iterations);
  for (int k = 0; k < cfg.horizon; ++k) {
    EXPECT_EQ(a.controls[k].to_vec(), b.controls[k].to_vec());
  }
}

TEST(Solve, ValidatesRequests) {
  MpcConfig cfg = base_config();
  MpcRequest req = hover_request(cfg, Vec3d(0, 0, 1));
  req.lambda = 1.5;
  EXPECT_THROW(solve(req, cfg), std::invalid_argument);
  req.lambda = 0.5;
  req.t_p = 2.0;
  EXPECT_THROW(solve(req, cfg), std::invalid_argument);
  req.t_p = 0.5;
  req.x0.q = Quatd(2, 0, 0, 0);
  EXPECT_THROW(solve(req, cfg), std::invalid_argument);
}

TEST(Solve, TemporalSpreadOffUsesConstantWeight) {
  MpcConfig cfg = base_config();
  cfg.weights.q_u.setZero();
  cfg.weights.q_pass.setZero();
  cfg.weights.q_terminal.setZero();
  cfg.weights.q_follow.setZero();
  cfg.weights.q_follow.head<3>().setOnes();
  cfg.weights.temporal_spread = false;

  const Vec3d gate(2, 0, 1);
  auto [states, controls] = hover_traj(cfg, gate);
  MpcRequest req = hover_request(cfg, gate);
  req.t_f = 0.0;
  states[30].p += Vec3d(0.2, 0, 0);  // far from the peak; weight must not decay

  EXPECT_NEAR(cost_follow(states, controls, req, cfg), 10.0 * 0.04, 1e-12);
}

}  // namespace
}  // namespace hympc
