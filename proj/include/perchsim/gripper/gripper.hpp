#pragma once

#include <array>
#include <numbers>

#include "perchsim/core/types.hpp"
#include "perchsim/gripper/state.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::gripper {

struct GripperParams {
  double trigger_distance = 0.15;  // m, ToF threshold
  double closure_time = 0.006;     // s, band snap-around time
  double pivot_limit = 120.0 * std::numbers::pi / 180.0;  // rad, elbow travel
  std::array<double, 2> graspable_radius_range{0.05, 0.30};  // m
  void validate() const;
};

/// Grasp outcome is mechanical success times hold-through-window; both rates
/// default to the observed flight-trial breakdown (17/20 and 15/17).
struct GraspModel {
  double p_mechanical = 0.85;
  double p_hold = 15.0 / 17.0;
  double spine_sharpness = 1.0;    // [0, 1]; 0 means dulled spines never hold
  double v_sufficient_max = 0.5;   // m/s, upper edge of the velocity sufficiency region
  double slip_window = 10.0;       // s, attachment must survive this long
  void validate() const;

  double hold_probability() const { return p_hold * spine_sharpness; }
};

enum class GripperEvent { Arm, Trigger, CloseEngaged, CloseFailed, CloseSlipped, Slip, ManualReset };

/// The only legal state changes:
///   Stowed -Arm-> Armed -Trigger-> Triggered -Close*-> {Engaged, MechanicalFailure, Slipped}
///   Engaged -Slip-> Slipped; ManualReset returns any state to Stowed.
/// Throws Error(IllegalTransition) otherwise.
GripperState apply(const GripperState& state, GripperEvent event, double time);

bool check_trigger(const sim::TofSample& tof, const GripperState& state, const GripperParams& params);

/// Time at which band closure completes for a triggered gripper.
double closure_complete_at(const Triggered& triggered, const GripperParams& params);

/// Draws the grasp outcome once closure has completed. Throws
/// Error(NotTriggered) when the gripper is not Triggered or the bands are
/// still closing at `now`.
GripperState resolve_grasp(const GripperState& state, double now, double impact_speed_normal,
                           const sim::TreeModel& tree, const GripperParams& params, const GraspModel& model,
                           Rng& rng);

/// Engaged -> Slipped once the drawn hold deadline has passed; otherwise unchanged.
GripperState update_hold(const GripperState& state, double now);

}  // namespace perchsim::gripper
