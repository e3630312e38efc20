#include "perchsim/sim/types.hpp"

#include <cmath>

namespace perchsim {
namespace gripper {

std::string_view to_string(GripperStatus status) {
  switch (status) {
    case GripperStatus::Stowed: return "Stowed";
    case GripperStatus::Armed: return "Armed";
    case GripperStatus::Triggered: return "Triggered";
    case GripperStatus::Engaged: return "Engaged";
    case GripperStatus::Slipped: return "Slipped";
    case GripperStatus::MechanicalFailure: return "MechanicalFailure";
  }
  return "Unknown";
}

}  // namespace gripper

namespace sim {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

}  // namespace

void PhysicalConstants::validate() const { require(g > 0.0 && std::isfinite(g), "g must be positive"); }

void VehicleParams::validate(const PhysicalConstants& c) const {
  require(mass > 0.0, "vehicle mass must be positive");
  require(max_thrust > mass * c.g, "max_thrust must exceed hover thrust");
  require(attitude_time_constant > 0.0, "attitude_time_constant must be positive");
  require(physics_rate > 0 && control_rate > 0, "rates must be positive");
  require(physics_rate % control_rate == 0, "physics_rate must be an integer multiple of control_rate");
}

void PivotParams::validate() const {
  require(arm_length > 0.0, "pivot arm_length must be positive");
  require(body_inertia >= 0.0, "pivot body_inertia must be non-negative");
  require(damping >= 0.0, "pivot damping must be non-negative");
  require(brace_angle > 0.0 && brace_angle < std::numbers::pi / 2.0,
          "brace_angle must lie in (0, 90 deg) so gravity holds the vehicle on the brace");
}

void SensorParams::validate() const {
  require(imu_noise_sigma >= 0.0, "imu_noise_sigma must be non-negative");
  require(tof_min_range >= 0.0 && tof_min_range < tof_max_range, "ToF range window must be ordered");
}

void SimConfig::validate() const {
  constants.validate();
  vehicle.validate(constants);
  pivot.validate();
  sensors.validate();
}

bool VehicleState::finite() const {
  return position.allFinite() && velocity.allFinite() && attitude.coeffs().allFinite() &&
         angular_velocity.allFinite();
}

double TreeModel::distance_to_axis(const Vec3& p) const {
  const Vec3 w = p - base_point;
  return (w - w.dot(axis_direction) * axis_direction).norm();
}

void TreeModel::validate() const {
  require(radius > 0.0, "tree radius must be positive");
  require(height > 0.0, "tree height must be positive");
  require(std::abs(axis_direction.norm() - 1.0) <= 1e-9, "tree axis_direction must be unit length");
}

const char* to_string(PhaseKind k) {
  switch (k) {
    case PhaseKind::FreeFlight: return "FreeFlight";
    case PhaseKind::PerchedPivot: return "PerchedPivot";
    case PhaseKind::FreeFall: return "FreeFall";
    case PhaseKind::Grounded: return "Grounded";
  }
  return "Unknown";
}

}  // namespace sim
}  // namespace perchsim
