#include "perchsim/gripper/gripper.hpp"

#include <cmath>
#include <string>

namespace perchsim::gripper {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

[[noreturn]] void illegal(const GripperState& state, GripperEvent event) {
  throw Error(ErrorCode::IllegalTransition,
              "gripper event " + std::to_string(static_cast<int>(event)) + " not allowed in state " +
                  std::string(to_string(status(state))));
}

}  // namespace

void GripperParams::validate() const {
  require(trigger_distance > 0.0, "trigger_distance must be positive");
  require(closure_time > 0.0, "closure_time must be positive");
  require(pivot_limit > 0.0, "pivot_limit must be positive");
  require(graspable_radius_range[0] > 0.0 && graspable_radius_range[0] <= graspable_radius_range[1],
          "graspable_radius_range must be positive and ordered");
}

void GraspModel::validate() const {
  require(is_probability(p_mechanical) && is_probability(p_hold), "grasp probabilities must lie in [0, 1]");
  require(is_probability(spine_sharpness), "spine_sharpness must lie in [0, 1]");
  require(v_sufficient_max > 0.0, "v_sufficient_max must be positive");
  require(slip_window > 0.0, "slip_window must be positive");
}

GripperState apply(const GripperState& state, GripperEvent event, double time) {
  if (event == GripperEvent::ManualReset) return Stowed{};
  switch (status(state)) {
    case GripperStatus::Stowed:
      if (event == GripperEvent::Arm) return Armed{};
      break;
    case GripperStatus::Armed:
      if (event == GripperEvent::Trigger) return Triggered{time};
      break;
    case GripperStatus::Triggered:
      if (event == GripperEvent::CloseEngaged) return Engaged{time, std::nullopt};
      if (event == GripperEvent::CloseFailed) return MechanicalFailure{time};
      if (event == GripperEvent::CloseSlipped) return Slipped{time};
      break;
    case GripperStatus::Engaged:
      if (event == GripperEvent::Slip) return Slipped{time};
      break;
    case GripperStatus::Slipped:
    case GripperStatus::MechanicalFailure:
      break;
  }
  illegal(state, event);
}

bool check_trigger(const sim::TofSample& tof, const GripperState& state, const GripperParams& params) {
  if (status(state) != GripperStatus::Armed) return false;
  return tof.valid && tof.range <= params.trigger_distance;
}

double closure_complete_at(const Triggered& triggered, const GripperParams& params) {
  return triggered.t_trigger + params.closure_time;
}

GripperState resolve_grasp(const GripperState& state, double now, double impact_speed_normal,
                           const sim::TreeModel& tree, const GripperParams& params, const GraspModel& model,
                           Rng& rng) {
  const auto* triggered = std::get_if<Triggered>(&state);
  if (triggered == nullptr) {
    throw Error(ErrorCode::NotTriggered,
                "resolve_grasp called in state " + std::string(to_string(status(state))));
  }
  // Tolerate the representation error of tick-derived times.
  if (now + 1e-12 < closure_complete_at(*triggered, params)) {
    throw Error(ErrorCode::NotTriggered, "bands still closing");
  }

  // Each draw is taken unconditionally so the stream position does not depend
  // on the branch taken.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double mech_draw = unit(rng);
  const double hold_draw = unit(rng);
  const double slip_draw = unit(rng);

  if (mech_draw >= model.p_mechanical) return apply(state, GripperEvent::CloseFailed, now);

  const bool outside_sufficiency = impact_speed_normal > model.v_sufficient_max;
  const bool ungraspable =
      tree.radius < params.graspable_radius_range[0] || tree.radius > params.graspable_radius_range[1];
  if (outside_sufficiency || ungraspable) return apply(state, GripperEvent::CloseSlipped, now);

  auto engaged = std::get<Engaged>(apply(state, GripperEvent::CloseEngaged, now));
  if (hold_draw >= model.hold_probability()) {
    // Uniform on (0, slip_window].
    engaged.hold_deadline = now + (1.0 - slip_draw) * model.slip_window;
  }
  return engaged;
}

GripperState update_hold(const GripperState& state, double now) {
  if (const auto* engaged = std::get_if<Engaged>(&state)) {
    if (engaged->hold_deadline && now >= *engaged->hold_deadline) {
      return apply(state, GripperEvent::Slip, now);
    }
  }
  return state;
}

}  // namespace perchsim::gripper
