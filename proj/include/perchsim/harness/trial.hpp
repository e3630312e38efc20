#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "perchsim/autonomy/events.hpp"
#include "perchsim/autonomy/fsm.hpp"
#include "perchsim/harness/scenario.hpp"

namespace perchsim::harness {

enum class TrialOutcome {
  PerchSuccess,
  SpineSlip,
  MechanicalFailure,
  RecoverySuccess,
  RecoveryFailure,
  DetectFailure,
  PlanFailure,
  Timeout,
  Aborted,
};

inline constexpr int kOutcomeCount = 9;
std::string_view to_string(TrialOutcome o);
std::optional<TrialOutcome> parse_outcome(std::string_view name);
/// Exit-code sense: the mission ended with the vehicle safe on the tree or in hover by design.
bool is_success(TrialOutcome o);

/// Derives the outcome from the event log alone.
TrialOutcome classify(const autonomy::EventLog& log);

struct TrialTimings {
  std::optional<double> detect;
  std::optional<double> arrival;
  std::optional<double> trigger;
  std::optional<double> engage;
  std::optional<double> perched;
  std::optional<double> freefall;
  std::optional<double> recovery_start;
  std::optional<double> safe_hover;
  double end = 0.0;
};

struct TraceRow {
  double t = 0.0;
  autonomy::AutonomyState state = autonomy::AutonomyState::Idle;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 setpoint = Vec3::Zero();
  double thrust = 0.0;
  double pitch = 0.0;  // rad, pivot angle while perched, else 0
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::string scenario_hash;
  TrialOutcome outcome = TrialOutcome::Timeout;
  autonomy::AutonomyState final_state = autonomy::AutonomyState::Idle;
  TrialTimings timings;
  double max_altitude_loss = 0.0;  // m, from failure onset to the lowest point before recovery
  std::optional<double> recovery_latency;     // s, detector fire to setpoint switch
  std::optional<double> safe_hover_distance;  // m, vehicle to perch site once in SafeHover
  std::optional<double> final_pitch;          // rad, pivot angle at trial end
  double pivot_stop_angle = 0.0;              // rad
  double max_pitch_backoff = 0.0;             // rad, largest drop of pitch below its running maximum
  bool detector_fired = false;
  autonomy::EventLog log;
  std::vector<TraceRow> trace;  // control-rate rows, only when requested
};

struct TelemetrySnapshot {
  double time = 0.0;
  autonomy::AutonomyState state = autonomy::AutonomyState::Idle;
  sim::VehicleState vehicle;
  planner::Setpoint setpoint;
  double thrust = 0.0;
  double max_thrust = 1.0;
  gripper::GripperStatus gripper = gripper::GripperStatus::Stowed;
  sim::PhaseKind phase = sim::PhaseKind::FreeFlight;
};

struct FrameSnapshot {
  const perception::DepthImage* image = nullptr;
  std::optional<perception::PerchCandidate> candidate;
};

/// Optional observers and the operator command source, all called on the
/// trial thread at control-tick boundaries.
struct TrialHooks {
  std::function<void(const TelemetrySnapshot&)> on_tick;
  std::function<void(const FrameSnapshot&)> on_frame;
  std::function<void(const autonomy::Event&)> on_event;
  std::function<std::vector<autonomy::OperatorCommand>()> poll_commands;
  double display_frame_rate = 5.0;  // Hz, frames pushed to on_frame
};

struct TrialOptions {
  bool record_trace = false;
};

/// Runs one seeded trial to a terminal state or the timeout. Throws
/// Error(ConfigError) on an invalid scenario.
TrialResult run_trial(const ScenarioConfig& cfg, std::uint64_t seed, const TrialOptions& options = {},
                      const TrialHooks& hooks = {});

nlohmann::json summary_json(const TrialResult& r);

}  // namespace perchsim::harness
