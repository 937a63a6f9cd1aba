#include "hympc/mpc.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hympc {
namespace {

using CtrlSeq = Eigen::Matrix<double, 4, Eigen::Dynamic>;
using Mat10 = Eigen::Matrix<double, 10, 10>;
using Mat104 = Eigen::Matrix<double, 10, 4>;

// Quadratic form with diagonal weights and hemisphere-aligned quaternion
// error: the reference quaternion sign is flipped to the half-space of the
// state quaternion before subtracting.
double weighted_error(const State10& x, const State10& ref,
                      const Weights10& q) {
  double acc = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double e = x(i) - ref(i);
    acc += q(i) * e * e;
  }
  const double sign =
      x.segment<4>(kStateQuat).dot(ref.segment<4>(kStateQuat)) < 0.0 ? -1.0
                                                                     : 1.0;
  for (int i = kStateQuat; i < kStateDim; ++i) {
    const double e = x(i) - sign * ref(i);
    acc += q(i) * e * e;
  }
  return acc;
}

// d(weighted_error)/dx accumulated into grad with an outer scale.
void add_weighted_error_grad(const State10& x, const State10& ref,
                             const Weights10& q, double scale,
                             State10* grad) {
  for (int i = 0; i < 6; ++i) {
    (*grad)(i) += scale * 2.0 * q(i) * (x(i) - ref(i));
  }
  const double sign =
      x.segment<4>(kStateQuat).dot(ref.segment<4>(kStateQuat)) < 0.0 ? -1.0
                                                                     : 1.0;
  for (int i = kStateQuat; i < kStateDim; ++i) {
    (*grad)(i) += scale * 2.0 * q(i) * (x(i) - sign * ref(i));
  }
}

struct CostContext {
  int horizon;
  double dt;
  double lambda;
  double g;
  const CostWeights* w;
  State10 ref_follow;
  State10 ref_pass;
  State10 ref_target;
  Ctrl4 u_hover;
  std::vector<double> xi_follow;  // k = 0..H
  std::vector<double> xi_pass;    // k = 0..H-1

  CostContext(const MpcRequest& req, const MpcConfig& cfg)
      : horizon(cfg.horizon),
        dt(cfg.dt),
        lambda(req.lambda),
        g(cfg.limits.g),
        w(&cfg.weights) {
    ref_follow = gate_reference_embed(req.gate_now).to_vec();
    ref_pass = gate_reference_embed(req.gate_pred).to_vec();
    ref_target = req.x_target.to_vec();
    u_hover = Ctrl4(g, 0, 0, 0);
    xi_follow.resize(horizon + 1);
    xi_pass.resize(horizon);
    for (int k = 0; k <= horizon; ++k) {
      const double t = k * dt;
      xi_follow[k] = w->temporal_spread
                         ? w->eta * std::exp(-(t - req.t_f) * (t - req.t_f))
                         : w->eta;
      if (k < horizon) {
        xi_pass[k] = w->temporal_spread
                         ? w->eta * std::exp(-(t - req.t_p) * (t - req.t_p))
                         : w->eta;
      }
    }
  }

  double control_cost(const Ctrl4& u) const {
    const Ctrl4 e = u - u_hover;
    return e.dot(w->q_u.asDiagonal() * e);
  }

  // Stage cost at step k excluding the control term.
  double state_cost(int k, const State10& x) const {
    double acc = 0.0;
    if (lambda != 0.0) {
      acc += lambda * xi_follow[k] * weighted_error(x, ref_follow, w->q_follow);
    }
    if (lambda != 1.0) {
      double pass = 0.0;
      if (k < horizon) pass += xi_pass[k] * weighted_error(x, ref_pass, w->q_pass);
      if (k == horizon) pass += weighted_error(x, ref_target, w->q_terminal);
      acc += (1.0 - lambda) * pass;
    }
    return acc;
  }

  void state_cost_grad(int k, const State10& x, State10* grad) const {
    grad->setZero();
    if (lambda != 0.0) {
      add_weighted_error_grad(x, ref_follow, w->q_follow,
                              lambda * xi_follow[k], grad);
    }
    if (lambda != 1.0) {
      if (k < horizon) {
        add_weighted_error_grad(x, ref_pass, w->q_pass,
                                (1.0 - lambda) * xi_pass[k], grad);
      }
      if (k == horizon) {
        add_weighted_error_grad(x, ref_target, w->q_terminal, 1.0 - lambda,
                                grad);
      }
    }
  }
};

double rollout_cost(const CostContext& ctx, const State10& x0,
                    const CtrlSeq& u, std::vector<State10>* xs) {
  const int h = ctx.horizon;
  xs->resize(h + 1);
  (*xs)[0] = x0;
  double cost = ctx.state_cost(0, x0);
  for (int k = 0; k < h; ++k) {
    cost += ctx.control_cost(u.col(k));
    (*xs)[k + 1] = drone_step_euler((*xs)[k], u.col(k), ctx.dt, ctx.g);
    cost += ctx.state_cost(k + 1, (*xs)[k + 1]);
  }
  return cost;
}

// Jacobians of the renormalized Euler step wrt state and control.
void step_jacobians(const State10& x, const Ctrl4& u, double d, double g,
                    Mat10* a, Mat104* b) {
  const double w = x(kStateQuat + 0), qx = x(kStateQuat + 1);
  const double qy = x(kStateQuat + 2), qz = x(kStateQuat + 3);
  const double c = u(0);

  a->setIdentity();
  a->block<3, 3>(kStatePos, kStateVel) = d * Eigen::Matrix3d::Identity();

  // d(vdot)/dq for vdot = c * R(q) e3, columns ordered (w, x, y, z).
  Eigen::Matrix<double, 3, 4> dv_dq;
  // clang-format off
  dv_dq << 2 * qy,  2 * qz,  2 * w,   2 * qx,
          -2 * qx, -2 * w,   2 * qz,  2 * qy,
           0.0,    -4 * qx, -4 * qy,  0.0;
  // clang-format on
  a->block<3, 4>(kStateVel, kStateQuat) = d * c * dv_dq;

  const Vec3d omega(u(1), u(2), u(3));
  a->block<4, 4>(kStateQuat, kStateQuat) +=
      d * 0.5 * bodyrate_matrix(omega);

  b->setZero();
  const Vec3d body_z(2 * (qx * qz + w * qy), 2 * (qy * qz - w * qx),
                     1 - 2 * (qx * qx + qy * qy));
  b->block<3, 1>(kStateVel, 0) = d * body_z;
  Eigen::Matrix<double, 4, 3> dq_dw;
  // clang-format off
  dq_dw << -qx, -qy, -qz,
            w,  -qz,  qy,
            qz,  w,  -qx,
           -qy,  qx,  w;
  // clang-format on
  b->block<4, 3>(kStateQuat, 1) = d * 0.5 * dq_dw;

  // Chain through the quaternion renormalization of the stepped state.
  const State10 pre = euler_step(
      [g](const State10& xs, const Ctrl4& us) { return drone_derivative(xs, us, g); },
      x, u, d);
  const Vec4d qt = pre.segment<4>(kStateQuat);
  const double n = qt.norm();
  const Vec4d qn = qt / n;
  const Mat4<double> jn =
      (Mat4<double>::Identity() - qn * qn.transpose()) / n;
  a->block<4, 10>(kStateQuat, 0) = jn * a->block<4, 10>(kStateQuat, 0);
  b->block<4, 4>(kStateQuat, 0) = jn * b->block<4, 4>(kStateQuat, 0);
}

// Adjoint sweep: gradient of the total cost wrt every control.
void cost_gradient(const CostContext& ctx, const std::vector<State10>& xs,
                   const CtrlSeq& u, double g, CtrlSeq* grad) {
  const int h = ctx.horizon;
  State10 lam;
  ctx.state_cost_grad(h, xs[h], &lam);
  Mat10 a;
  Mat104 b;
  State10 stage;
  for (int k = h - 1; k >= 0; --k) {
    step_jacobians(xs[k], u.col(k), ctx.dt, g, &a, &b);
    const Ctrl4 e = u.col(k) - ctx.u_hover;
    grad->col(k) = 2.0 * (ctx.w->q_u.asDiagonal() * e) + b.transpose() * lam;
    if (k > 0) {
      ctx.state_cost_grad(k, xs[k], &stage);
      lam = stage + a.transpose() * lam;
    }
  }
}

CtrlSeq project(const CtrlSeq& u, const DroneLimits& lim) {
  CtrlSeq out = u;
  out.row(0) = out.row(0).cwiseMax(lim.c_min).cwiseMin(lim.c_max);
  for (int r = 1; r < 4; ++r) {
    out.row(r) = out.row(r).cwiseMax(-lim.omega_max).cwiseMin(lim.omega_max);
  }
  return out;
}

void validate_request(const MpcRequest& req, const MpcConfig& cfg) {
  if (!(req.lambda >= 0.0 && req.lambda <= 1.0)) {
    throw std::invalid_argument("solve: lambda outside [0, 1]");
  }
  const double t_h = cfg.horizon_time();
  if (!(req.t_p >= 0.0 && req.t_p <= t_h + 1e-12)) {
    throw std::invalid_argument("solve: t_p outside [0, horizon]");
  }
  if (!req.x0.to_vec().allFinite() || !req.x_target.to_vec().allFinite()) {
    throw std::invalid_argument("solve: non-finite request state");
  }
  if (std::abs(req.x0.q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("solve: x0 quaternion not normalized");
  }
  if (cfg.horizon < 1 || cfg.dt <= 0.0) {
    throw std::invalid_argument("solve: bad horizon configuration");
  }
}

}  // namespace

DroneState gate_reference_embed(const GateObservation& obs) {
  DroneState s;
  s.p = obs.center;
  s.v = obs.center_vel;
  s.q = Quatd::Identity();
  return s;
}

static double cost_on_vectors(const std::vector<DroneState>& states,
                              const std::vector<ControlInput>& controls,
                              const MpcRequest& req, const MpcConfig& cfg,
                              double lambda) {
  if (states.size() != static_cast<std::size_t>(cfg.horizon) + 1 ||
      controls.size() != static_cast<std::size_t>(cfg.horizon)) {
    throw std::invalid_argument("cost: trajectory length mismatch");
  }
  MpcRequest r = req;
  r.lambda = lambda;
  const CostContext ctx(r, cfg);
  double cost = 0.0;
  for (int k = 0; k <= cfg.horizon; ++k) {
    cost += ctx.state_cost(k, states[k].to_vec());
    if (k < cfg.horizon) cost += ctx.control_cost(controls[k].to_vec());
  }
  return cost;
}

double cost_follow(const std::vector<DroneState>& states,
                   const std::vector<ControlInput>& controls,
                   const MpcRequest& req, const MpcConfig& cfg) {
  return cost_on_vectors(states, controls, req, cfg, 1.0);
}

double cost_pass(const std::vector<DroneState>& states,
                 const std::vector<ControlInput>& controls,
                 const MpcRequest& req, const MpcConfig& cfg) {
  return cost_on_vectors(states, controls, req, cfg, 0.0);
}

double hybrid_cost(const std::vector<DroneState>& states,
                   const std::vector<ControlInput>& controls,
                   const MpcRequest& req, const MpcConfig& cfg) {
  return cost_on_vectors(states, controls, req, cfg, req.lambda);
}

Eigen::Matrix<double, 4, Eigen::Dynamic> hybrid_cost_gradient(
    const MpcRequest& req, const MpcConfig& cfg,
    const std::vector<ControlInput>& controls) {
  if (controls.size() != static_cast<std::size_t>(cfg.horizon)) {
    throw std::invalid_argument("hybrid_cost_gradient: control length mismatch");
  }
  const CostContext ctx(req, cfg);
  CtrlSeq u(4, cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) u.col(k) = controls[k].to_vec();
  std::vector<State10> xs;
  rollout_cost(ctx, req.x0.to_vec(), u, &xs);
  CtrlSeq grad(4, cfg.horizon);
  cost_gradient(ctx, xs, u, cfg.limits.g, &grad);
  return grad;
}

MpcSolution solve(const MpcRequest& req, const MpcConfig& cfg,
                  const MpcSolution* warm_start) {
  validate_request(req, cfg);
  MpcRequest r = req;
  r.x0.q = quat_renormalize(r.x0.q);
  const CostContext ctx(r, cfg);
  const int h = cfg.horizon;

  CtrlSeq u(4, h);
  if (warm_start && !warm_start->controls.empty()) {
    const auto& ws = warm_start->controls;
    for (int k = 0; k < h; ++k) {
      u.col(k) = ws[std::min<std::size_t>(k, ws.size() - 1)].to_vec();
    }
  } else {
    u.colwise() = ctx.u_hover;
  }
  u = project(u, cfg.limits);

  const State10 x0 = r.x0.to_vec();
  std::vector<State10> xs, xs_trial;
  double cost = rollout_cost(ctx, x0, u, &xs);
  if (!std::isfinite(cost)) {
    throw std::runtime_error("solve: non-finite initial cost");
  }
  CtrlSeq grad(4, h), grad_next(4, h);
  cost_gradient(ctx, xs, u, cfg.limits.g, &grad);

  MpcSolution sol;
  sol.iteration_costs.push_back(cost);

  std::ofstream debug;
  if (!cfg.solver.debug_csv.empty()) {
    debug.open(cfg.solver.debug_csv, std::ios::app);
  }

  double alpha_bb = 0.0;
  bool converged = false;
  int accepted = 0;
  for (int iter = 0; iter < cfg.solver.max_iters; ++iter) {
    const double pg =
        (u - project(u - grad, cfg.limits)).cwiseAbs().maxCoeff();
    if (debug.is_open()) {
      debug << accepted << "," << cost << "," << pg << "," << alpha_bb << "\n";
    }
    if (pg < cfg.solver.grad_tol) {
      converged = true;
      break;
    }

    double alpha = alpha_bb > 0.0
                       ? alpha_bb
                       : 1.0 / (grad.cwiseAbs().maxCoeff() + 1e-12);
    bool accepted_step = false;
    CtrlSeq u_trial;
    double cost_trial = 0.0;
    for (int ls = 0; ls < cfg.solver.max_linesearch; ++ls) {
      u_trial = project(u - alpha * grad, cfg.limits);
      cost_trial = rollout_cost(ctx, x0, u_trial, &xs_trial);
      if (!std::isfinite(cost_trial)) {
        throw std::runtime_error("solve: non-finite cost in line search");
      }
      const double decrease =
          (grad.array() * (u_trial - u).array()).sum();
      if (cost_trial <= cost + cfg.solver.armijo * decrease) {
        accepted_step = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted_step) break;

    cost_gradient(ctx, xs_trial, u_trial, cfg.limits.g, &grad_next);
    const CtrlSeq s = u_trial - u;
    const CtrlSeq y = grad_next - grad;
    const double sy = (s.array() * y.array()).sum();
    alpha_bb = sy > 1e-16 ? (s.array() * s.array()).sum() / sy : 0.0;

    u = u_trial;
    xs.swap(xs_trial);
    cost = cost_trial;
    grad.swap(grad_next);
    ++accepted;
    sol.iteration_costs.push_back(cost);
  }

  sol.states.resize(h + 1);
  sol.controls.resize(h);
  for (int k = 0; k <= h; ++k) sol.states[k] = DroneState::from_vec(xs[k]);
  for (int k = 0; k < h; ++k) sol.controls[k] = ControlInput::from_vec(u.col(k));
  sol.cost = cost;
  sol.iterations = accepted;
  sol.converged = converged;
  return sol;
}

}  // namespace hympc
