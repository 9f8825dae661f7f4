#include "crowdnav/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crowdnav {

namespace {

bool finite(const RobotState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.theta);
}

bool finite(const ControlInput& u) { return std::isfinite(u.v) && std::isfinite(u.omega); }

RobotState offset(const RobotState& s, const Eigen::Vector3d& d, double scale) {
  return {s.x + scale * d[0], s.y + scale * d[1], s.theta + scale * d[2]};
}

Eigen::Matrix3d derivative_wrt_state(double theta, double v) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  a(0, 2) = -v * std::sin(theta);
  a(1, 2) = v * std::cos(theta);
  return a;
}

Eigen::Matrix<double, 3, 2> derivative_wrt_input(double theta) {
  Eigen::Matrix<double, 3, 2> b = Eigen::Matrix<double, 3, 2>::Zero();
  b(0, 0) = std::cos(theta);
  b(1, 0) = std::sin(theta);
  b(2, 1) = 1.0;
  return b;
}

}  // namespace

double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  if (angle > -pi && angle <= pi) return angle;
  double wrapped = std::remainder(angle, 2.0 * pi);
  if (wrapped <= -pi) wrapped += 2.0 * pi;
  return wrapped;
}

double Bounds::clamp(double value) const { return std::clamp(value, lo, hi); }

ControlInput ControlLimits::project(const ControlInput& input) const {
  return {v.clamp(input.v), omega.clamp(input.omega)};
}

bool ControlLimits::contains(const ControlInput& input) const {
  return input.v >= v.lo && input.v <= v.hi && input.omega >= omega.lo &&
         input.omega <= omega.hi;
}

Eigen::Vector3d unicycle_derivative(const RobotState& state, const ControlInput& input) {
  return {input.v * std::cos(state.theta), input.v * std::sin(state.theta), input.omega};
}

RobotState rk4_step(const RobotState& state, const ControlInput& input, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt) || !finite(state) || !finite(input)) {
    throw std::invalid_argument("rk4_step: non-finite state/input or non-positive dt");
  }
  const Eigen::Vector3d k1 = unicycle_derivative(state, input);
  const Eigen::Vector3d k2 = unicycle_derivative(offset(state, k1, 0.5 * dt), input);
  const Eigen::Vector3d k3 = unicycle_derivative(offset(state, k2, 0.5 * dt), input);
  const Eigen::Vector3d k4 = unicycle_derivative(offset(state, k3, dt), input);
  const Eigen::Vector3d incr = (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
  return {state.x + incr[0], state.y + incr[1], wrap_angle(state.theta + incr[2])};
}

StepJacobian rk4_step_jacobian(const RobotState& state, const ControlInput& input, double dt) {
  // Forward-mode differentiation through the four stages.
  const double h = dt;

  const Eigen::Vector3d k1 = unicycle_derivative(state, input);
  const Eigen::Matrix3d dk1_dx = derivative_wrt_state(state.theta, input.v);
  const Eigen::Matrix<double, 3, 2> dk1_du = derivative_wrt_input(state.theta);

  const double th2 = state.theta + 0.5 * h * k1[2];
  const Eigen::Matrix3d a2 = derivative_wrt_state(th2, input.v);
  const Eigen::Matrix<double, 3, 2> b2 = derivative_wrt_input(th2);
  const Eigen::Matrix3d dk2_dx = a2 * (Eigen::Matrix3d::Identity() + 0.5 * h * dk1_dx);
  const Eigen::Matrix<double, 3, 2> dk2_du = a2 * (0.5 * h * dk1_du) + b2;
  const Eigen::Vector3d k2 = unicycle_derivative(offset(state, k1, 0.5 * h), input);

  const double th3 = state.theta + 0.5 * h * k2[2];
  const Eigen::Matrix3d a3 = derivative_wrt_state(th3, input.v);
  const Eigen::Matrix<double, 3, 2> b3 = derivative_wrt_input(th3);
  const Eigen::Matrix3d dk3_dx = a3 * (Eigen::Matrix3d::Identity() + 0.5 * h * dk2_dx);
  const Eigen::Matrix<double, 3, 2> dk3_du = a3 * (0.5 * h * dk2_du) + b3;
  const Eigen::Vector3d k3 = unicycle_derivative(offset(state, k2, 0.5 * h), input);

  const double th4 = state.theta + h * k3[2];
  const Eigen::Matrix3d a4 = derivative_wrt_state(th4, input.v);
  const Eigen::Matrix<double, 3, 2> b4 = derivative_wrt_input(th4);
  const Eigen::Matrix3d dk4_dx = a4 * (Eigen::Matrix3d::Identity() + h * dk3_dx);
  const Eigen::Matrix<double, 3, 2> dk4_du = a4 * (h * dk3_du) + b4;

  StepJacobian jac;
  jac.wrt_state = Eigen::Matrix3d::Identity() +
                  (h / 6.0) * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx);
  jac.wrt_input = (h / 6.0) * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du);
  return jac;
}

RobotState rk4_substepped(const RobotState& state, const ControlInput& input, double dt,
                          int substeps) {
  if (substeps < 1) throw std::invalid_argument("rk4_substepped: substeps must be >= 1");
  RobotState s = state;
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) s = rk4_step(s, input, h);
  return s;
}

RobotTrajectory rollout(const RobotState& initial, std::span<const ControlInput> inputs,
                        double dt) {
  if (inputs.empty()) throw std::invalid_argument("rollout: empty input sequence");
  RobotTrajectory traj;
  traj.dt = dt;
  traj.states.reserve(inputs.size() + 1);
  traj.states.push_back(initial);
  for (const auto& u : inputs) traj.states.push_back(rk4_step(traj.states.back(), u, dt));
  return traj;
}

}  // namespace crowdnav
