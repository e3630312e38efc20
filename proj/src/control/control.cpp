#include "perchsim/control/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace perchsim::control {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

void GainSet::validate() const {
  require((kp_pos.array() >= 0.0).all() && (kd_pos.array() >= 0.0).all(), "position gains must be >= 0");
  require(yaw_gain >= 0.0 && yaw_gain <= 1.0, "yaw_gain must lie in [0, 1]");
  require(max_tilt > 0.0 && max_tilt < std::numbers::pi / 2.0, "max_tilt must lie in (0, 90 deg)");
}

void GentlePerchConfig::validate() const {
  require(duration > 0.0, "gentle perch duration must be positive");
  require(rate > 0.0, "gentle perch rate must be positive");
}

ControlCommand track(const sim::VehicleState& state, const planner::Setpoint& sp, const GainSet& gains,
                     const sim::VehicleParams& params, const sim::PhysicalConstants& constants, double timestamp) {
  const Vec3 pos_err = sp.position - state.position;
  const Vec3 vel_err = sp.velocity - state.velocity;
  Vec3 a_des = gains.kp_pos.cwiseProduct(pos_err) + gains.kd_pos.cwiseProduct(vel_err) + sp.acceleration;
  a_des.z() += constants.g;

  // Keep some upward demand so the tilt limit stays meaningful.
  a_des.z() = std::max(a_des.z(), 0.1 * constants.g);
  const Vec3 lateral = horizontal(a_des);
  const double lateral_cap = a_des.z() * std::tan(gains.max_tilt);
  if (lateral.norm() > lateral_cap) {
    const Vec3 capped = lateral * (lateral_cap / lateral.norm());
    a_des.x() = capped.x();
    a_des.y() = capped.y();
  }

  const double current_yaw = heading_yaw(state.body_x());
  const double yaw = current_yaw + gains.yaw_gain * wrap_angle(sp.yaw - current_yaw);

  ControlCommand cmd;
  cmd.collective_thrust = std::clamp(params.mass * a_des.norm(), 0.0, params.max_thrust);
  cmd.attitude_command = attitude_from_z_and_yaw(a_des.normalized(), yaw);
  cmd.timestamp = timestamp;
  return cmd;
}

double gentle_perch_thrust(double elapsed, double hover_thrust, const GentlePerchConfig& cfg) {
  // Snap to the last grid point at or before `elapsed`; the epsilon absorbs
  // tick-derived rounding such as 0.3 * 100 = 29.999999999999996.
  const double k = std::floor(std::max(0.0, elapsed) * cfg.rate + 1e-9);
  const double t_grid = k / cfg.rate;
  switch (cfg.profile) {
    case DecayProfile::Linear:
      return hover_thrust * std::max(0.0, 1.0 - t_grid / cfg.duration);
  }
  return 0.0;
}

ControlCommand gentle_perch_command(double elapsed, double yaw, const GentlePerchConfig& cfg,
                                    const sim::VehicleParams& params, const sim::PhysicalConstants& constants,
                                    double timestamp) {
  ControlCommand cmd;
  cmd.collective_thrust = gentle_perch_thrust(elapsed, params.hover_thrust(constants), cfg);
  cmd.attitude_command = attitude_from_z_and_yaw(kWorldUp, yaw);
  cmd.timestamp = timestamp;
  return cmd;
}

}  // namespace perchsim::control
