#pragma once

#include "perchsim/control/command.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::sim {

/// Advances the world by one physics step of length dt = 1 / physics_rate.
/// Throws Error(InvalidCommand) for a non-finite or out-of-range command.
WorldState step_dynamics(const WorldState& world, const control::ControlCommand& command, double dt,
                         const SimConfig& cfg);

/// Accelerometer reading: specific force in the body frame plus zero-mean
/// Gaussian noise of the configured sigma (no draw when sigma is zero).
ImuSample read_imu(const WorldState& world, Rng& rng, const SensorParams& sensors);

/// Range along the gripper axis (body x from the ToF mount) to the trunk.
TofSample read_tof(const WorldState& world, const SensorParams& sensors);

/// World position of a body-frame mount point.
Vec3 mount_point(const VehicleState& vehicle, const Vec3& body_offset);

/// Attach the vehicle to the trunk: the pivot is placed `arm_length` ahead of
/// the centre of mass, level, with `outward` the horizontal trunk-to-vehicle
/// direction. The brace stop is min(brace_angle, pivot_limit).
WorldState engage_pivot(const WorldState& world, const Vec3& outward, double pivot_limit,
                        const SimConfig& cfg);

/// Spines let go: the vehicle detaches and falls with its current attitude.
WorldState release_to_free_fall(const WorldState& world);

/// Propellers respond again after a free fall.
WorldState resume_free_flight(const WorldState& world);

/// Vehicle pose implied by a pivot phase (used by the stepper and in tests).
VehicleState pivot_vehicle_state(const phase::PerchedPivot& pivot, const PivotParams& params);

/// Mechanical energy (kinetic + potential about the pivot height) of a pivot phase.
double pivot_energy(const phase::PerchedPivot& pivot, double mass, const PivotParams& params,
                    const PhysicalConstants& constants);

}  // namespace perchsim::sim
