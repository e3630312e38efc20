#pragma once

#include <cstdint>
#include <numbers>
#include <variant>

#include "perchsim/core/types.hpp"
#include "perchsim/gripper/state.hpp"

namespace perchsim::sim {

struct PhysicalConstants {
  double g = 9.8;  // m/s^2

  Vec3 gravity() const { return {0.0, 0.0, -g}; }
  void validate() const;
};

struct VehicleParams {
  double mass = 1.2;                     // kg, at takeoff
  double max_thrust = 2.0 * 1.2 * 9.8;   // N, twice hover
  double attitude_time_constant = 0.15;  // s, first-order attitude tracking
  int physics_rate = 1000;               // Hz
  int control_rate = 100;                // Hz

  double physics_dt() const { return 1.0 / physics_rate; }
  double control_dt() const { return 1.0 / control_rate; }
  int physics_steps_per_control() const { return physics_rate / control_rate; }
  double hover_thrust(const PhysicalConstants& c) const { return mass * c.g; }
  void validate(const PhysicalConstants& c) const;
};

/// Single-DOF perched dynamics about the gripper elbow. The centre of mass sits
/// `arm_length` behind the pivot along the body x axis; the brace is a hard stop.
struct PivotParams {
  double arm_length = 0.20;         // m, pivot to centre of mass
  double body_inertia = 0.02;       // kg m^2, about the pitch axis through the CoM
  double damping = 0.5;             // N m s / rad, viscous, >= 0
  double brace_angle = 80.0 * std::numbers::pi / 180.0;  // rad, tail contacts trunk

  double inertia_about_pivot(double mass) const {
    return mass * arm_length * arm_length + body_inertia;
  }
  void validate() const;
};

struct SensorParams {
  double imu_noise_sigma = 0.05;         // m/s^2 per axis
  Vec3 tof_offset{0.20, 0.0, 0.0};       // body frame, ToF sensor between the bands
  double tof_min_range = 0.04;           // m
  double tof_max_range = 4.0;            // m
  void validate() const;
};

struct SimConfig {
  PhysicalConstants constants;
  VehicleParams vehicle;
  PivotParams pivot;
  SensorParams sensors;
  void validate() const;
};

struct VehicleState {
  Vec3 position = Vec3::Zero();          // m, world
  Vec3 velocity = Vec3::Zero();          // m/s, world
  Quat attitude = Quat::Identity();      // body -> world
  Vec3 angular_velocity = Vec3::Zero();  // rad/s, world

  Vec3 body_x() const { return attitude * Vec3::UnitX(); }
  Vec3 body_z() const { return attitude * Vec3::UnitZ(); }
  bool finite() const;
};

/// Solid right circular cylinder standing on the ground.
struct TreeModel {
  Vec3 base_point{10.0, 3.0, 0.0};
  Vec3 axis_direction = Vec3::UnitZ();
  double radius = 0.15;
  double height = 3.0;
  bool bark_soft = true;

  /// Point on the axis at height `s` along it.
  Vec3 axis_point(double s) const { return base_point + s * axis_direction; }
  /// Distance from p to the (infinite) axis line.
  double distance_to_axis(const Vec3& p) const;
  void validate() const;
};

namespace phase {
struct FreeFlight {};
struct PerchedPivot {
  Vec3 pivot_point = Vec3::Zero();
  Vec3 pivot_axis = Vec3::UnitY();
  Vec3 outward = -Vec3::UnitX();  // horizontal, trunk toward vehicle
  double pitch_angle = 0.0;       // rad, 0 = level
  double pitch_rate = 0.0;        // rad/s
  double stop_angle = 0.0;        // rad, brace hard stop, <= pivot limit
};
struct FreeFall {};
struct Grounded {};
}  // namespace phase

using SimPhase = std::variant<phase::FreeFlight, phase::PerchedPivot, phase::FreeFall, phase::Grounded>;

enum class PhaseKind { FreeFlight, PerchedPivot, FreeFall, Grounded };
inline PhaseKind kind(const SimPhase& p) { return static_cast<PhaseKind>(p.index()); }
const char* to_string(PhaseKind k);

struct ImuSample {
  Vec3 specific_force = Vec3::Zero();  // m/s^2, body frame
  double timestamp = 0.0;
};

struct TofSample {
  double range = 0.0;  // m
  bool valid = false;
  double timestamp = 0.0;
};

/// Full simulation truth. A value type: copying it snapshots the simulation.
struct WorldState {
  VehicleState vehicle;
  TreeModel tree;
  gripper::GripperState gripper = gripper::Stowed{};
  SimPhase phase = phase::FreeFlight{};
  std::int64_t tick = 0;  // physics steps since t = 0
  double time = 0.0;      // s, tick / physics_rate
  /// Non-gravitational acceleration of the vehicle over the last step, world frame.
  Vec3 specific_force_world{0.0, 0.0, 9.8};
  double applied_thrust = 0.0;
};

}  // namespace perchsim::sim
