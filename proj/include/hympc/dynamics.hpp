#pragma once

#include <algorithm>
#include <cmath>

#include "hympc/core_math.hpp"

namespace hympc {

using State10 = Eigen::Matrix<double, 10, 1>;
using Ctrl4 = Eigen::Matrix<double, 4, 1>;

// State vector layout: [p(3), v(3), q(w,x,y,z)].
inline constexpr int kStatePos = 0;
inline constexpr int kStateVel = 3;
inline constexpr int kStateQuat = 6;
inline constexpr int kStateDim = 10;
inline constexpr int kCtrlDim = 4;

struct DroneState {
  Vec3d p = Vec3d::Zero();
  Vec3d v = Vec3d::Zero();
  Quatd q = Quatd::Identity();

  State10 to_vec() const {
    State10 x;
    x.segment<3>(kStatePos) = p;
    x.segment<3>(kStateVel) = v;
    x.segment<4>(kStateQuat) = quat_coeffs(q);
    return x;
  }
  static DroneState from_vec(const State10& x) {
    DroneState s;
    s.p = x.segment<3>(kStatePos);
    s.v = x.segment<3>(kStateVel);
    s.q = quat_from_coeffs<double>(x.segment<4>(kStateQuat));
    return s;
  }
};

// Control layout: [c, wx, wy, wz] (mass-normalized thrust, body rates).
struct ControlInput {
  double c = 0.0;
  Vec3d omega = Vec3d::Zero();

  Ctrl4 to_vec() const { return Ctrl4(c, omega.x(), omega.y(), omega.z()); }
  static ControlInput from_vec(const Ctrl4& u) {
    return ControlInput{u(0), Vec3d(u(1), u(2), u(3))};
  }
};

struct DroneLimits {
  double c_min = 2.0;
  double c_max = 20.0;
  double omega_max = 6.0;
  double g = 9.81;
  // Thrust ceiling the plant actually delivers; the planner keeps using c_max.
  double sim_c_max = 20.0;
};

/// State rate of the rate-controlled quadrotor model.
inline State10 drone_derivative(const State10& x, const Ctrl4& u, double g) {
  const Quatd q = quat_from_coeffs<double>(x.segment<4>(kStateQuat));
  const Vec3d omega(u(1), u(2), u(3));
  State10 dx;
  dx.segment<3>(kStatePos) = x.segment<3>(kStateVel);
  dx.segment<3>(kStateVel) =
      quat_rotate(q, Vec3d(0, 0, u(0))) - Vec3d(0, 0, g);
  dx.segment<4>(kStateQuat) = quat_derivative(q, omega);
  return dx;
}

inline State10 renormalize_quat_block(State10 x) {
  const double n = x.segment<4>(kStateQuat).norm();
  x.segment<4>(kStateQuat) /= n;
  return x;
}

/// Explicit Euler step with post-step quaternion renormalization.
/// This is the prediction model used inside the trajectory optimizer.
inline State10 drone_step_euler(const State10& x, const Ctrl4& u, double d,
                                double g) {
  return renormalize_quat_block(
      euler_step([g](const State10& xs, const Ctrl4& us) { return drone_derivative(xs, us, g); },
                 x, u, d));
}

inline DroneState drone_step_euler(const DroneState& s, const ControlInput& u,
                                   double d, double g) {
  return DroneState::from_vec(drone_step_euler(s.to_vec(), u.to_vec(), d, g));
}

/// RK4 step with post-step quaternion renormalization (plant-side integrator).
inline DroneState drone_step_rk4(const DroneState& s, const ControlInput& u,
                                 double d, double g) {
  State10 x = rk4_step([g](const State10& xs, const Ctrl4& us) { return drone_derivative(xs, us, g); },
                       s.to_vec(), u.to_vec(), d);
  return DroneState::from_vec(renormalize_quat_block(x));
}

/// Clamp a command to what the plant can deliver.
inline ControlInput apply_plant_limits(const ControlInput& u,
                                       const DroneLimits& lim) {
  ControlInput out;
  out.c = std::clamp(u.c, lim.c_min, lim.sim_c_max);
  for (int i = 0; i < 3; ++i) {
    out.omega(i) = std::clamp(u.omega(i), -lim.omega_max, lim.omega_max);
  }
  return out;
}

// Swinging gate: a planar pendulum whose bob carries the gate frame.
struct GateState {
  double theta = 0.0;
  double theta_dot = 0.0;
};

struct GateGeometry {
  Vec3d pivot{2.0, 0.0, 3.0};
  double arm_length = 2.0;
  double height = 0.8;
  double width = 1.0;
  Vec3d normal{1.0, 0.0, 0.0};  // gate plane normal, fixed
};

struct GateObservation {
  Vec3d center = Vec3d::Zero();
  Vec3d center_vel = Vec3d::Zero();
};

/// RK4 step of thetaddot = -(g/L) sin(theta) - damping * thetadot.
inline GateState gate_step(const GateState& s, double d, double g, double L,
                           double damping = 0.0) {
  using V2 = Eigen::Vector2d;
  const V2 x0(s.theta, s.theta_dot);
  const V2 x1 = rk4_step(
      [g, L, damping](const V2& x, int) {
        return V2(x(1), -(g / L) * std::sin(x(0)) - damping * x(1));
      },
      x0, 0, d);
  return GateState{x1(0), x1(1)};
}

/// Gate center pose and velocity in world frame; theta = 0 hangs straight down.
inline GateObservation gate_observe(const GateState& s,
                                    const GateGeometry& geo) {
  const double L = geo.arm_length;
  GateObservation o;
  o.center = geo.pivot + L * Vec3d(0.0, std::sin(s.theta), -std::cos(s.theta));
  o.center_vel = L * s.theta_dot * Vec3d(0.0, std::cos(s.theta), std::sin(s.theta));
  return o;
}

/// Pendulum energy per unit mass; conserved when damping is zero.
inline double gate_energy(const GateState& s, double g, double L) {
  return 0.5 * L * L * s.theta_dot * s.theta_dot - g * L * std::cos(s.theta);
}

}  // namespace hympc
