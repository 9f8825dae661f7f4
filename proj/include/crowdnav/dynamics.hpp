#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace crowdnav {

using Vec2 = Eigen::Vector2d;

/// Default control period [s]; the planner and the plant share it unless
/// configured otherwise.
inline constexpr double kDefaultDt = 0.1;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Pose of the differential-drive robot.
struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const RobotState&) const = default;
};

/// Linear / angular velocity command.
struct ControlInput {
  double v = 0.0;
  double omega = 0.0;

  bool operator==(const ControlInput&) const = default;
};

/// Closed interval used for control limits.
struct Bounds {
  double lo = -1.0;
  double hi = 1.0;

  double clamp(double value) const;
};

/// Admissible control set, a box in (v, omega).
struct ControlLimits {
  Bounds v{-1.0, 1.0};
  Bounds omega{-1.0, 1.0};

  ControlInput project(const ControlInput& input) const;
  bool contains(const ControlInput& input) const;
};

struct RobotTrajectory {
  std::vector<RobotState> states;
  double dt = kDefaultDt;
};

/// Continuous unicycle kinematics: (v cos theta, v sin theta, omega).
Eigen::Vector3d unicycle_derivative(const RobotState& state, const ControlInput& input);

/// One classic RK4 step with the control held constant over [0, dt].
/// The returned heading is wrapped to (-pi, pi]. Throws std::invalid_argument
/// on non-finite input or dt <= 0.
RobotState rk4_step(const RobotState& state, const ControlInput& input, double dt);

/// Partial derivatives of rk4_step with respect to the state (3x3) and the
/// control (3x2). The wrap of the heading is treated as the identity.
struct StepJacobian {
  Eigen::Matrix3d wrt_state;
  Eigen::Matrix<double, 3, 2> wrt_input;
};
StepJacobian rk4_step_jacobian(const RobotState& state, const ControlInput& input, double dt);

/// Integrates one control period with `substeps` RK4 sub-steps. Used by the
/// plant in model-mismatch mode.
RobotState rk4_substepped(const RobotState& state, const ControlInput& input, double dt,
                          int substeps);

/// Chained rk4_step; the result holds inputs.size() + 1 states with element 0
/// equal to `initial`. Throws std::invalid_argument on an empty input sequence.
RobotTrajectory rollout(const RobotState& initial, std::span<const ControlInput> inputs,
                        double dt);

}  // namespace crowdnav
