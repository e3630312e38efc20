#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace perchsim::autonomy {

enum class AutonomyState {
  Idle,
  SearchTree,
  AwaitDetectConfirm,
  Planning,
  FlyToPerch,
  AwaitPerchConfirm,
  PerchSequence,
  Perched,
  FreeFallDetected,
  Recovering,
  SafeHover,
  Landed,
  Aborted,
};

std::string_view to_string(AutonomyState s);
std::optional<AutonomyState> parse_state(std::string_view name);
bool is_terminal(AutonomyState s);

enum class EventKind {
  Start,
  StateEnter,
  StateExit,
  Detect,
  Confirm,
  Reject,
  Plan,
  PlanFailed,
  Replan,
  TrackLost,
  Arrive,
  Trigger,
  Engage,
  GripperFailure,
  Slip,
  Perched,
  FreeFall,
  RecoveryStart,
  RecoveryComplete,
  HoldComplete,
  DetectorDisarmed,
  GroundContact,
  IllegalEvent,
  Abort,
  TrialEnd,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view name);

/// Enter/exit records and bookkeeping are left out of the mission milestone view.
bool is_milestone(EventKind k);

struct Event {
  double timestamp = 0.0;  // s, sim time
  EventKind kind = EventKind::Start;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Append-only, time-ordered. Throws Error(IllegalEvent) on a timestamp that
/// goes backwards.
class EventLog {
 public:
  void append(Event e);
  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool contains(EventKind k) const;
  const Event* first(EventKind k) const;

  std::vector<EventKind> milestones() const;

  /// One compact JSON object per line.
  std::string to_jsonl() const;
  static EventLog from_jsonl(std::string_view text);
  void write(const std::filesystem::path& path) const;
  static EventLog read(const std::filesystem::path& path);

 private:
  std::vector<Event> events_;
};

}  // namespace perchsim::autonomy
