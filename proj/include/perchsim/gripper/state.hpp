#pragma once

#include <optional>
#include <string_view>
#include <variant>

namespace perchsim::gripper {

struct Stowed {};
struct Armed {};
struct Triggered {
  double t_trigger = 0.0;
};
/// Bands closed and spines holding. `hold_deadline` is the time at which the
/// spines will let go, if a slip has been drawn.
struct Engaged {
  double t_engaged = 0.0;
  std::optional<double> hold_deadline;
};
struct Slipped {
  double t_slip = 0.0;
};
struct MechanicalFailure {
  double t_failure = 0.0;
};

using GripperState = std::variant<Stowed, Armed, Triggered, Engaged, Slipped, MechanicalFailure>;

enum class GripperStatus { Stowed, Armed, Triggered, Engaged, Slipped, MechanicalFailure };

inline GripperStatus status(const GripperState& state) {
  return static_cast<GripperStatus>(state.index());
}

std::string_view to_string(GripperStatus status);

}  // namespace perchsim::gripper
