#pragma once

#include <numbers>

#include "perchsim/control/command.hpp"
#include "perchsim/planner/planner.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::control {

struct GainSet {
  Vec3 kp_pos{4.0, 4.0, 4.0};  // 1/s^2
  Vec3 kd_pos{3.4, 3.4, 3.4};  // 1/s
  /// Fraction of the yaw error closed per command, in [0, 1]; the attitude
  /// model supplies the dynamics.
  double yaw_gain = 1.0;
  double max_tilt = 35.0 * std::numbers::pi / 180.0;  // rad
  void validate() const;
};

enum class DecayProfile { Linear };

struct GentlePerchConfig {
  double duration = 4.0;  // s, hover to zero
  double rate = 100.0;    // Hz, schedule update grid
  DecayProfile profile = DecayProfile::Linear;
  void validate() const;
};

/// PD plus gravity compensation with acceleration feed-forward. The
/// horizontal demand is limited to `max_tilt` from vertical.
ControlCommand track(const sim::VehicleState& state, const planner::Setpoint& sp, const GainSet& gains,
                     const sim::VehicleParams& params, const sim::PhysicalConstants& constants, double timestamp = 0.0);

/// Thrust schedule after grasp, held constant between grid points.
double gentle_perch_thrust(double elapsed, double hover_thrust, const GentlePerchConfig& cfg);

/// Level attitude at the given yaw, used while the thrust decays.
ControlCommand gentle_perch_command(double elapsed, double yaw, const GentlePerchConfig& cfg,
                                    const sim::VehicleParams& params, const sim::PhysicalConstants& constants,
                                    double timestamp = 0.0);

}  // namespace perchsim::control
