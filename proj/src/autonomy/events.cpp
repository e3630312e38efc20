#include "perchsim/autonomy/events.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <utility>

#include "perchsim/core/types.hpp"

namespace perchsim::autonomy {
namespace {

constexpr std::array<std::pair<AutonomyState, std::string_view>, 13> kStateNames{{
    {AutonomyState::Idle, "Idle"},
    {AutonomyState::SearchTree, "SearchTree"},
    {AutonomyState::AwaitDetectConfirm, "AwaitDetectConfirm"},
    {AutonomyState::Planning, "Planning"},
    {AutonomyState::FlyToPerch, "FlyToPerch"},
    {AutonomyState::AwaitPerchConfirm, "AwaitPerchConfirm"},
    {AutonomyState::PerchSequence, "PerchSequence"},
    {AutonomyState::Perched, "Perched"},
    {AutonomyState::FreeFallDetected, "FreeFallDetected"},
    {AutonomyState::Recovering, "Recovering"},
    {AutonomyState::SafeHover, "SafeHover"},
    {AutonomyState::Landed, "Landed"},
    {AutonomyState::Aborted, "Aborted"},
}};

constexpr std::array<std::pair<EventKind, std::string_view>, 25> kEventNames{{
    {EventKind::Start, "start"},
    {EventKind::StateEnter, "state_enter"},
    {EventKind::StateExit, "state_exit"},
    {EventKind::Detect, "detect"},
    {EventKind::Confirm, "confirm"},
    {EventKind::Reject, "reject"},
    {EventKind::Plan, "plan"},
    {EventKind::PlanFailed, "plan_failed"},
    {EventKind::Replan, "replan"},
    {EventKind::TrackLost, "track_lost"},
    {EventKind::Arrive, "arrive"},
    {EventKind::Trigger, "trigger"},
    {EventKind::Engage, "engage"},
    {EventKind::GripperFailure, "gripper_failure"},
    {EventKind::Slip, "slip"},
    {EventKind::Perched, "perched"},
    {EventKind::FreeFall, "freefall"},
    {EventKind::RecoveryStart, "recovery_start"},
    {EventKind::RecoveryComplete, "recovery_complete"},
    {EventKind::HoldComplete, "hold_complete"},
    {EventKind::DetectorDisarmed, "detector_disarmed"},
    {EventKind::GroundContact, "ground_contact"},
    {EventKind::IllegalEvent, "illegal_event"},
    {EventKind::Abort, "abort"},
    {EventKind::TrialEnd, "trial_end"},
}};

}  // namespace

std::string_view to_string(AutonomyState s) {
  for (const auto& [state, name] : kStateNames) {
    if (state == s) return name;
  }
  return "Unknown";
}

std::optional<AutonomyState> parse_state(std::string_view name) {
  for (const auto& [state, n] : kStateNames) {
    if (n == name) return state;
  }
  return std::nullopt;
}

bool is_terminal(AutonomyState s) {
  return s == AutonomyState::SafeHover || s == AutonomyState::Landed || s == AutonomyState::Aborted;
}

std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kEventNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
  for (const auto& [kind, n] : kEventNames) {
    if (n == name) return kind;
  }
  return std::nullopt;
}

bool is_milestone(EventKind k) {
  switch (k) {
    case EventKind::StateEnter:
    case EventKind::StateExit:
    case EventKind::Replan:
    case EventKind::TrackLost:
    case EventKind::HoldComplete:
    case EventKind::DetectorDisarmed:
    case EventKind::IllegalEvent:
    case EventKind::TrialEnd:
      return false;
    default:
      return true;
  }
}

nlohmann::json to_json(const Event& e) {
  return nlohmann::json{{"t", e.timestamp}, {"kind", std::string(to_string(e.kind))}, {"payload", e.payload}};
}

Event event_from_json(const nlohmann::json& j) {
  try {
    Event e;
    e.timestamp = j.at("t").get<double>();
    const auto name = j.at("kind").get<std::string>();
    const auto kind = parse_event_kind(name);
    if (!kind) throw Error(ErrorCode::IoError, "unknown event kind '" + name + "'");
    e.kind = *kind;
    if (j.contains("payload")) e.payload = j.at("payload");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::IoError, std::string("malformed event: ") + ex.what());
  }
}

void EventLog::append(Event e) {
  if (!events_.empty() && e.timestamp < events_.back().timestamp) {
    throw Error(ErrorCode::IllegalEvent, "event timestamp " + std::to_string(e.timestamp) +
                                             " precedes the previous entry");
  }
  events_.push_back(std::move(e));
}

bool EventLog::contains(EventKind k) const { return first(k) != nullptr; }

const Event* EventLog::first(EventKind k) const {
  for (const auto& e : events_) {
    if (e.kind == k) return &e;
  }
  return nullptr;
}

std::vector<EventKind> EventLog::milestones() const {
  std::vector<EventKind> out;
  for (const auto& e : events_) {
    if (is_milestone(e.kind)) out.push_back(e.kind);
  }
  return out;
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

EventLog EventLog::from_jsonl(std::string_view text) {
  EventLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(ErrorCode::IoError, "event log line " + std::to_string(line_no) + ": " + ex.what());
    }
    log.append(event_from_json(j));
  }
  return log;
}

void EventLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << to_jsonl();
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

EventLog EventLog::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_jsonl(buffer.str());
}

}  // namespace perchsim::autonomy
