#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "perchsim/core/types.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::planner {

/// One axis of a quintic in normalised time s = t / duration:
///   p(s) = sum_k c[k] s^k.
using AxisPoly = std::array<double, 6>;

struct PolySegment {
  std::array<AxisPoly, 3> axes{};
  double duration = 0.0;  // s

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
};

struct Setpoint {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();  // feed-forward for the tracker
  double yaw = 0.0;                  // rad
};

struct Trajectory {
  std::vector<PolySegment> segments;
  double duration = 0.0;
  Vec3 approach_normal = -Vec3::UnitX();  // horizontal, trunk toward free space
  double yaw = 0.0;                       // faces -approach_normal
};

struct PlannerConfig {
  double terminal_speed = 0.1;   // m/s, into the trunk
  double cruise_speed = 0.5;     // m/s, sets the initial duration guess
  double v_max = 1.0;            // m/s
  double a_max = 2.0;            // m/s^2
  double min_duration = 2.0;     // s
  double max_duration = 60.0;    // s, inflation cap
  double inflation = 1.1;        // duration growth per failed limit check
  double check_rate = 1000.0;    // Hz, limit grid
  double replan_threshold = 0.1; // m, tracked target motion that forces a new plan
  void validate() const;
};

struct Boundary {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

/// Quintic meeting position, velocity and acceleration at both ends.
PolySegment solve_segment(const Boundary& start, const Boundary& end, double duration);

/// Peak speed and acceleration over a uniform grid at `rate` Hz (endpoints included).
struct Peaks {
  double speed = 0.0;
  double accel = 0.0;
};
Peaks sampled_peaks(const PolySegment& segment, double rate);

/// Throws Error(DegenerateTrajectory) when start and target coincide at rest,
/// Error(InfeasibleLimits) when the duration cap is reached, and
/// Error(ConfigError) for a non-horizontal or non-unit approach normal.
Trajectory plan_perch_trajectory(const sim::VehicleState& start, const Vec3& target_pose,
                                 const Vec3& approach_normal, const PlannerConfig& cfg);

/// Clamps t to [0, duration].
Setpoint sample(const Trajectory& traj, double t);

/// Hover point `offset` metres out along the approach normal, facing the trunk.
Setpoint recovery_setpoint(const Vec3& perch_pose, const Vec3& approach_normal, double offset = 1.0);

/// CSV with header t,px,py,pz,vx,vy,vz sampled at `rate` Hz.
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path, double rate = 100.0);

}  // namespace perchsim::planner
