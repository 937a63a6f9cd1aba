#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

namespace hympc {

template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Mat4 = Eigen::Matrix<S, 4, 4>;
template <typename S> using Quat = Eigen::Quaternion<S>;

using Vec3d = Vec3<double>;
using Vec4d = Vec4<double>;
using Quatd = Quat<double>;

/// Quaternion coefficients in scalar-first order [w, x, y, z].
template <typename S>
Vec4<S> quat_coeffs(const Quat<S>& q) {
  return Vec4<S>(q.w(), q.x(), q.y(), q.z());
}

template <typename S>
Quat<S> quat_from_coeffs(const Vec4<S>& c) {
  return Quat<S>(c(0), c(1), c(2), c(3));
}

template <typename S>
Quat<S> quat_renormalize(const Quat<S>& q) {
  const S n = q.norm();
  if (!(n > S(0)) || !std::isfinite(static_cast<double>(n))) {
    throw std::invalid_argument("quat_renormalize: degenerate quaternion");
  }
  Quat<S> out(q);
  out.coeffs() /= n;
  return out;
}

/// Rotate a vector by a unit quaternion.
template <typename S>
Vec3<S> quat_rotate(const Quat<S>& q, const Vec3<S>& v) {
  return q * v;
}

/// Skew-symmetric body-rate matrix L(w) with qdot = 0.5 * L(w) * q
/// for scalar-first coefficients and body-frame rates.
template <typename S>
Mat4<S> bodyrate_matrix(const Vec3<S>& w) {
  Mat4<S> m;
  // clang-format off
  m << S(0), -w.x(), -w.y(), -w.z(),
       w.x(),  S(0),  w.z(), -w.y(),
       w.y(), -w.z(),  S(0),  w.x(),
       w.z(),  w.y(), -w.x(),  S(0);
  // clang-format on
  return m;
}

/// Quaternion kinematics qdot = 0.5 * q (x) [0, w], returned scalar-first.
template <typename S>
Vec4<S> quat_derivative(const Quat<S>& q, const Vec3<S>& w) {
  return S(0.5) * (bodyrate_matrix(w) * quat_coeffs(q)).eval();
}

/// One explicit Euler step of xdot = f(x, u).
template <typename F, typename X, typename U>
X euler_step(F&& f, const X& x, const U& u, double d) {
  return x + d * f(x, u);
}

/// One classical Runge-Kutta (RK4) step of xdot = f(x, u) with u held constant.
template <typename F, typename X, typename U>
X rk4_step(F&& f, const X& x, const U& u, double d) {
  const X k1 = f(x, u);
  const X k2 = f((x + (0.5 * d) * k1).eval(), u);
  const X k3 = f((x + (0.5 * d) * k2).eval(), u);
  const X k4 = f((x + d * k3).eval(), u);
  X out = x + (d / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) {
    throw std::runtime_error("rk4_step: non-finite state");
  }
  return out;
}

/// SplitMix64-derived stream: maps (master seed, index) to an independent seed.
inline std::uint64_t spawn_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace hympc
