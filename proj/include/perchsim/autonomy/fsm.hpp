#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perchsim/autonomy/events.hpp"
#include "perchsim/control/control.hpp"
#include "perchsim/gripper/state.hpp"
#include "perchsim/perception/perception.hpp"
#include "perchsim/planner/planner.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::autonomy {

struct FailureDetectorConfig {
  double accel_threshold = 7.0;     // m/s^2
  double window = 0.02;             // s, trailing mean
  double actuation_latency = 0.10;  // s, detection to motor response
  std::vector<AutonomyState> armed_states{AutonomyState::PerchSequence, AutonomyState::Perched};
  void validate(double g) const;
  bool armed_in(AutonomyState s) const;
};

struct ConfirmPolicy {
  enum class Kind { Human, AutoAccept, AutoReject };
  Kind kind = Kind::AutoAccept;
  double delay = 0.5;  // s, AutoAccept only
};

std::string_view to_string(ConfirmPolicy::Kind k);
std::optional<ConfirmPolicy::Kind> parse_confirm_policy(std::string_view name);

struct FsmConfig {
  ConfirmPolicy policy;
  FailureDetectorConfig detector;
  control::GentlePerchConfig gentle;
  double arrival_tolerance = 0.05;  // m
  /// CoM stand-off from the trunk surface while waiting for the perch confirm.
  double staging_standoff = 0.55;   // m
  double creep_speed = 0.1;         // m/s, final approach until the ToF trigger
  double hold_window = 10.0;        // s, attachment that counts as a perch
  double disarm_grace = 1.0;        // s of zero thrust before the hold check may disarm
  double recovery_offset = 1.0;     // m from the perch site
  double safe_hover_radius = 0.2;   // m
  double safe_hover_speed = 0.1;    // m/s
  double safe_hover_dwell = 1.0;    // s in SafeHover before the trial ends
  double search_yaw_rate = 0.3;     // rad/s while no candidate is in view
  void validate(double g) const;
};

enum class OperatorCommand { ConfirmDetection, EngagePerch, Abort };

std::string_view to_string(OperatorCommand c);

struct PlanOutcome {
  bool ok = false;
  double duration = 0.0;
  std::string error;
};

/// Everything the FSM sees on one control tick.
struct FsmInputs {
  double time = 0.0;
  bool start = false;
  nlohmann::json start_info = nlohmann::json::object();  // merged into the start event
  std::optional<perception::PerchCandidate> detection;  // accepted candidate from this tick's frame
  std::optional<perception::PerchCandidate> tracked;    // perch site moved enough to replan
  std::optional<PlanOutcome> plan;                      // planner verdict while in Planning
  sim::VehicleState vehicle;
  gripper::GripperStatus gripper = gripper::GripperStatus::Stowed;
  double tof_range = 0.0;
  std::optional<double> impact_speed;                   // normal speed the grasp was resolved with
  double applied_thrust = 0.0;
  std::span<const sim::ImuSample> imu;                  // newest last
  bool ground_contact = false;
  std::vector<OperatorCommand> commands;
};

enum class GuidanceMode { Off, Hover, Trajectory, Creep, GentlePerch, Recovery };

struct FsmActions {
  GuidanceMode mode = GuidanceMode::Hover;
  planner::Setpoint setpoint;   // Hover, Creep and Recovery
  double gentle_elapsed = 0.0;  // GentlePerch
  bool request_plan = false;
  bool arm_gripper = false;
  bool resume_flight = false;
  bool trial_over = false;
};

struct AutonomyContext {
  AutonomyState state = AutonomyState::Idle;
  double entered_at = 0.0;
  std::optional<perception::PerchCandidate> target;
  Vec3 staging = Vec3::Zero();
  Vec3 hold_point = Vec3::Zero();
  double hold_yaw = 0.0;
  double search_yaw0 = 0.0;
  gripper::GripperStatus last_gripper = gripper::GripperStatus::Stowed;
  std::optional<double> gentle_start;
  std::optional<double> engaged_at;
  std::optional<double> zero_thrust_since;
  AutonomyState fall_from = AutonomyState::Idle;
  std::optional<double> freefall_at;
  planner::Setpoint recovery;
  bool detector_enabled = true;
  bool ended = false;
};

struct FsmStep {
  AutonomyContext context;
  FsmActions actions;
  std::vector<Event> events;
};

/// Where the vehicle waits for the perch confirm: out along the approach normal.
Vec3 staging_point(const perception::PerchCandidate& c, const FsmConfig& cfg);

/// Pure transition table shared by the live FSM and replay. Returns nullopt
/// when the event does not change state.
std::optional<AutonomyState> transition(AutonomyState state, EventKind event);

/// One control tick: consumes the input snapshot, returns the next context,
/// the guidance/actuation actions and the events to append (in order).
FsmStep fsm_step(const AutonomyContext& ctx, const FsmInputs& in, const FsmConfig& cfg);

/// Mean accelerometer magnitude over samples with timestamp in (now - window, now].
std::optional<double> trailing_mean_norm(std::span<const sim::ImuSample> history, double now, double window);

/// True iff armed in `state` and the trailing mean is below threshold.
bool detect_freefall(std::span<const sim::ImuSample> history, double now, const FailureDetectorConfig& cfg,
                     AutonomyState state);

struct RecoveryAction {
  double switch_time = 0.0;
  planner::Setpoint setpoint;
};

RecoveryAction recovery_reaction(double detection_time, const Vec3& perch_pose, const Vec3& approach_normal,
                                 const FsmConfig& cfg);

struct ReplayResult {
  std::vector<AutonomyState> recorded;  // from state_enter entries
  std::vector<AutonomyState> replayed;  // from the transition table
  bool matches() const { return recorded == replayed; }
};

ReplayResult replay(const EventLog& log);

}  // namespace perchsim::autonomy
