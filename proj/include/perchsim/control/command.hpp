#pragma once

#include "perchsim/core/types.hpp"

namespace perchsim::control {

/// Output of the flight controller, consumed by the physics step.
struct ControlCommand {
  double collective_thrust = 0.0;  // N, along body z
  Quat attitude_command = Quat::Identity();
  double timestamp = 0.0;
};

}  // namespace perchsim::control
