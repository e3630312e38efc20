#include "perchsim/autonomy/fsm.hpp"

#include <algorithm>
#include <cmath>

namespace perchsim::autonomy {
namespace {

using gripper::GripperStatus;
using nlohmann::json;

constexpr double kTimeEps = 1e-9;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json candidate_json(const perception::PerchCandidate& c) {
  return json{{"bbox", json::array({c.bbox.u_min, c.bbox.v_min, c.bbox.u_max, c.bbox.v_max})},
              {"centroid_px", json::array({c.centroid_px.x(), c.centroid_px.y()})},
              {"centroid_depth", c.centroid_depth},
              {"diameter", c.diameter_est},
              {"target", vec_json(c.target_pose)},
              {"normal", vec_json(c.approach_normal)}};
}

struct Emitter {
  AutonomyContext& ctx;
  std::vector<Event>& events;
  double t;

  void emit(EventKind kind, json payload = json::object()) {
    events.push_back(Event{t, kind, std::move(payload)});
    if (const auto next = transition(ctx.state, kind)) {
      events.push_back(Event{t, EventKind::StateExit, json{{"state", std::string(to_string(ctx.state))}}});
      ctx.state = *next;
      ctx.entered_at = t;
      events.push_back(Event{t, EventKind::StateEnter, json{{"state", std::string(to_string(ctx.state))}}});
    }
  }
};

bool awaiting_gate(AutonomyState s) {
  return s == AutonomyState::AwaitDetectConfirm || s == AutonomyState::AwaitPerchConfirm;
}

void apply_policy(AutonomyContext& c, Emitter& em, const FsmConfig& cfg, double t) {
  if (!awaiting_gate(c.state)) return;
  const char* gate = c.state == AutonomyState::AwaitDetectConfirm ? "detection" : "perch";
  switch (cfg.policy.kind) {
    case ConfirmPolicy::Kind::Human:
      break;
    case ConfirmPolicy::Kind::AutoReject:
      em.emit(EventKind::Reject, json{{"gate", gate}, {"source", "policy"}});
      break;
    case ConfirmPolicy::Kind::AutoAccept:
      if (t - c.entered_at >= cfg.policy.delay - kTimeEps) {
        em.emit(EventKind::Confirm, json{{"gate", gate}, {"source", "policy"}});
      }
      break;
  }
}

FsmActions guidance(const AutonomyContext& c, AutonomyState state, const FsmInputs& in, const FsmConfig& cfg) {
  FsmActions a;
  a.setpoint.position = c.hold_point;
  a.setpoint.yaw = c.hold_yaw;
  const double t = in.time;
  switch (state) {
    case AutonomyState::Idle:
      a.setpoint.position = in.vehicle.position;
      a.setpoint.yaw = heading_yaw(in.vehicle.body_x());
      break;
    case AutonomyState::SearchTree:
      a.setpoint.yaw = c.search_yaw0 + cfg.search_yaw_rate * (t - c.entered_at);
      break;
    case AutonomyState::AwaitDetectConfirm:
    case AutonomyState::Planning:
    case AutonomyState::AwaitPerchConfirm:
    case AutonomyState::Aborted:
      break;
    case AutonomyState::FlyToPerch:
      a.mode = GuidanceMode::Trajectory;
      break;
    case AutonomyState::PerchSequence:
    case AutonomyState::Perched:
      if (c.gentle_start) {
        a.mode = GuidanceMode::GentlePerch;
        a.gentle_elapsed = t - *c.gentle_start;
      } else if (c.target) {
        const Vec3 n = c.target->approach_normal;
        a.mode = GuidanceMode::Creep;
        a.setpoint.position = c.staging - n * cfg.creep_speed * (t - c.entered_at);
        a.setpoint.velocity = -n * cfg.creep_speed;
      }
      break;
    case AutonomyState::FreeFallDetected:
      // Motors keep executing the last guidance until the reaction lands.
      return guidance(c, c.fall_from, in, cfg);
    case AutonomyState::Recovering:
    case AutonomyState::SafeHover:
      a.mode = GuidanceMode::Recovery;
      a.setpoint = c.recovery;
      break;
    case AutonomyState::Landed:
      a.mode = GuidanceMode::Off;
      break;
  }
  return a;
}

}  // namespace

void FailureDetectorConfig::validate(double g) const {
  require(accel_threshold > 0.0 && accel_threshold < g, "accel_threshold must lie in (0, g)");
  require(window > 0.0, "detector window must be positive");
  require(actuation_latency >= 0.0, "actuation_latency must be non-negative");
}

bool FailureDetectorConfig::armed_in(AutonomyState s) const {
  return std::find(armed_states.begin(), armed_states.end(), s) != armed_states.end();
}

std::string_view to_string(ConfirmPolicy::Kind k) {
  switch (k) {
    case ConfirmPolicy::Kind::Human: return "Human";
    case ConfirmPolicy::Kind::AutoAccept: return "AutoAccept";
    case ConfirmPolicy::Kind::AutoReject: return "AutoReject";
  }
  return "Unknown";
}

std::optional<ConfirmPolicy::Kind> parse_confirm_policy(std::string_view name) {
  for (auto k : {ConfirmPolicy::Kind::Human, ConfirmPolicy::Kind::AutoAccept, ConfirmPolicy::Kind::AutoReject}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void FsmConfig::validate(double g) const {
  detector.validate(g);
  gentle.validate();
  require(policy.delay >= 0.0, "confirm delay must be non-negative");
  require(arrival_tolerance > 0.0, "arrival_tolerance must be positive");
  require(staging_standoff > 0.0, "staging_standoff must be positive");
  require(creep_speed > 0.0, "creep_speed must be positive");
  require(hold_window > 0.0, "hold_window must be positive");
  require(disarm_grace >= 0.0, "disarm_grace must be non-negative");
  require(recovery_offset >= 0.0, "recovery_offset must be non-negative");
  require(safe_hover_radius > 0.0 && safe_hover_speed > 0.0, "safe hover tolerances must be positive");
  require(safe_hover_dwell >= 0.0, "safe_hover_dwell must be non-negative");
}

std::string_view to_string(OperatorCommand c) {
  switch (c) {
    case OperatorCommand::ConfirmDetection: return "confirm_detection";
    case OperatorCommand::EngagePerch: return "engage_perch";
    case OperatorCommand::Abort: return "abort";
  }
  return "unknown";
}

std::optional<AutonomyState> transition(AutonomyState s, EventKind e) {
  using S = AutonomyState;
  if (is_terminal(s)) return std::nullopt;
  switch (e) {
    case EventKind::Start:
      if (s == S::Idle) return S::SearchTree;
      break;
    case EventKind::Detect:
      if (s == S::SearchTree) return S::AwaitDetectConfirm;
      break;
    case EventKind::Confirm:
      if (s == S::AwaitDetectConfirm) return S::Planning;
      if (s == S::AwaitPerchConfirm) return S::PerchSequence;
      break;
    case EventKind::Reject:
      if (awaiting_gate(s)) return S::Aborted;
      break;
    case EventKind::Plan:
      if (s == S::Planning) return S::FlyToPerch;
      break;
    case EventKind::PlanFailed:
      if (s == S::Planning) return S::Aborted;
      break;
    case EventKind::Arrive:
      if (s == S::FlyToPerch) return S::AwaitPerchConfirm;
      break;
    case EventKind::Perched:
      if (s == S::PerchSequence) return S::Perched;
      break;
    case EventKind::FreeFall:
      if (s == S::PerchSequence || s == S::Perched) return S::FreeFallDetected;
      break;
    case EventKind::RecoveryStart:
      if (s == S::FreeFallDetected) return S::Recovering;
      break;
    case EventKind::RecoveryComplete:
      if (s == S::Recovering) return S::SafeHover;
      break;
    case EventKind::Abort:
      return S::Aborted;
    case EventKind::GroundContact:
      if (s != S::Idle) return S::Landed;
      break;
    default:
      break;
  }
  return std::nullopt;
}

std::optional<double> trailing_mean_norm(std::span<const sim::ImuSample> history, double now, double window) {
  double sum = 0.0;
  int count = 0;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->timestamp > now + kTimeEps) continue;
    if (it->timestamp <= now - window + kTimeEps) break;
    sum += it->specific_force.norm();
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

bool detect_freefall(std::span<const sim::ImuSample> history, double now, const FailureDetectorConfig& cfg,
                     AutonomyState state) {
  if (!cfg.armed_in(state)) return false;
  const auto mean = trailing_mean_norm(history, now, cfg.window);
  return mean && *mean < cfg.accel_threshold;
}

RecoveryAction recovery_reaction(double detection_time, const Vec3& perch_pose, const Vec3& approach_normal,
                                 const FsmConfig& cfg) {
  return RecoveryAction{detection_time + cfg.detector.actuation_latency,
                        planner::recovery_setpoint(perch_pose, approach_normal, cfg.recovery_offset)};
}

FsmStep fsm_step(const AutonomyContext& ctx, const FsmInputs& in, const FsmConfig& cfg) {
  FsmStep out{ctx, {}, {}};
  AutonomyContext& c = out.context;
  const double t = in.time;
  if (c.ended) {
    out.actions = guidance(c, c.state, in, cfg);
    out.actions.trial_over = true;
    return out;
  }
  Emitter em{c, out.events, t};
  const AutonomyState state_at_tick = c.state;

  for (const OperatorCommand cmd : in.commands) {
    const json who{{"source", "operator"}};
    switch (cmd) {
      case OperatorCommand::Abort:
        if (!is_terminal(c.state)) {
          c.hold_point = in.vehicle.position;
          c.hold_yaw = heading_yaw(in.vehicle.body_x());
          em.emit(EventKind::Abort, who);
        }
        break;
      case OperatorCommand::ConfirmDetection:
      case OperatorCommand::EngagePerch: {
        const auto gate = cmd == OperatorCommand::ConfirmDetection ? AutonomyState::AwaitDetectConfirm
                                                                   : AutonomyState::AwaitPerchConfirm;
        if (c.state == gate) {
          em.emit(EventKind::Confirm, json{{"gate", gate == AutonomyState::AwaitDetectConfirm ? "detection" : "perch"},
                                           {"source", "operator"}});
        } else {
          em.emit(EventKind::IllegalEvent, json{{"command", std::string(to_string(cmd))},
                                                {"state", std::string(to_string(c.state))}});
        }
        break;
      }
    }
  }

  if (in.ground_contact && !is_terminal(c.state) && c.state != AutonomyState::Idle) {
    em.emit(EventKind::GroundContact, json{{"position", vec_json(in.vehicle.position)}});
  }

  if (in.gripper != c.last_gripper) {
    const Vec3 n = c.target ? c.target->approach_normal : Vec3::Zero();
    const double normal_speed = in.impact_speed.value_or(std::max(0.0, -in.vehicle.velocity.dot(n)));
    const bool closed = in.gripper == GripperStatus::Engaged || in.gripper == GripperStatus::MechanicalFailure ||
                        in.gripper == GripperStatus::Slipped;
    const bool was_closing = c.last_gripper == GripperStatus::Armed || c.last_gripper == GripperStatus::Triggered;
    // Closure (6 ms) can complete inside one control period, so the trigger
    // is reported on the same tick as the grasp outcome.
    if (in.gripper == GripperStatus::Triggered || (closed && c.last_gripper == GripperStatus::Armed)) {
      em.emit(EventKind::Trigger, json{{"tof_range", in.tof_range}, {"impact_speed", normal_speed}});
    }
    switch (in.gripper) {
      case GripperStatus::Triggered:
        break;
      case GripperStatus::Engaged:
        c.engaged_at = t;
        em.emit(EventKind::Engage);
        break;
      case GripperStatus::MechanicalFailure:
        em.emit(EventKind::GripperFailure);
        break;
      case GripperStatus::Slipped:
        em.emit(EventKind::Slip, json{{"at_closure", was_closing}});
        break;
      case GripperStatus::Stowed:
      case GripperStatus::Armed:
        break;
    }
    if (closed && was_closing && !c.gentle_start) c.gentle_start = t;
    c.last_gripper = in.gripper;
  }

  if (in.applied_thrust > 0.0) {
    c.zero_thrust_since.reset();
  } else if (!c.zero_thrust_since) {
    c.zero_thrust_since = t;
  }

  switch (c.state) {
    case AutonomyState::Idle:
      if (in.start) {
        c.hold_point = in.vehicle.position;
        c.hold_yaw = heading_yaw(in.vehicle.body_x());
        c.search_yaw0 = c.hold_yaw;
        json info = in.start_info.is_object() ? in.start_info : json::object();
        info["position"] = vec_json(in.vehicle.position);
        em.emit(EventKind::Start, std::move(info));
      }
      break;
    case AutonomyState::SearchTree:
      if (in.detection && in.detection->accepted()) {
        c.target = in.detection;
        c.staging = staging_point(*c.target, cfg);
        c.hold_point = in.vehicle.position;
        c.hold_yaw = heading_yaw(in.vehicle.body_x());
        em.emit(EventKind::Detect, candidate_json(*c.target));
      }
      break;
    case AutonomyState::AwaitDetectConfirm:
    case AutonomyState::AwaitPerchConfirm:
      apply_policy(c, em, cfg, t);
      break;
    case AutonomyState::Planning:
      if (in.plan) {
        if (in.plan->ok) {
          em.emit(EventKind::Plan, json{{"duration", in.plan->duration}, {"staging", vec_json(c.staging)}});
        } else {
          em.emit(EventKind::PlanFailed, json{{"error", in.plan->error}});
        }
      }
      break;
    case AutonomyState::FlyToPerch:
      if (in.tracked) {
        c.target = in.tracked;
        c.staging = staging_point(*c.target, cfg);
      }
      if ((in.vehicle.position - c.staging).norm() <= cfg.arrival_tolerance) {
        c.hold_point = c.staging;
        c.hold_yaw = heading_yaw(-c.target->approach_normal);
        em.emit(EventKind::Arrive, json{{"error", (in.vehicle.position - c.staging).norm()}});
      }
      break;
    case AutonomyState::PerchSequence:
      if (in.gripper == GripperStatus::Engaged && c.gentle_start &&
          t - *c.gentle_start >= cfg.gentle.duration - kTimeEps) {
        em.emit(EventKind::Perched);
      }
      break;
    case AutonomyState::Perched:
      if (in.gripper == GripperStatus::Engaged && c.engaged_at && c.zero_thrust_since &&
          t - *c.engaged_at >= cfg.hold_window - kTimeEps &&
          t - *c.zero_thrust_since >= cfg.disarm_grace - kTimeEps) {
        em.emit(EventKind::HoldComplete, json{{"held", t - *c.engaged_at}});
        c.detector_enabled = false;
        em.emit(EventKind::DetectorDisarmed);
        em.emit(EventKind::TrialEnd, json{{"reason", "hold_complete"}});
        c.ended = true;
      }
      break;
    case AutonomyState::FreeFallDetected:
      if (c.freefall_at && t - *c.freefall_at >= cfg.detector.actuation_latency - kTimeEps) {
        const auto reaction = recovery_reaction(*c.freefall_at, c.target->target_pose, c.target->approach_normal, cfg);
        c.recovery = reaction.setpoint;
        em.emit(EventKind::RecoveryStart, json{{"setpoint", vec_json(c.recovery.position)},
                                               {"latency", t - *c.freefall_at}});
        out.actions.resume_flight = true;
      }
      break;
    case AutonomyState::Recovering: {
      const double err = (in.vehicle.position - c.recovery.position).norm();
      if (err <= cfg.safe_hover_radius && in.vehicle.velocity.norm() < cfg.safe_hover_speed) {
        const double from_site = (in.vehicle.position - c.target->target_pose).norm();
        em.emit(EventKind::RecoveryComplete, json{{"error", err}, {"distance_to_site", from_site}});
      }
      break;
    }
    case AutonomyState::SafeHover:
      if (t - c.entered_at >= cfg.safe_hover_dwell - kTimeEps) {
        em.emit(EventKind::TrialEnd, json{{"reason", "safe_hover"}});
        c.ended = true;
      }
      break;
    case AutonomyState::Landed:
    case AutonomyState::Aborted:
      break;
  }

  // The detector runs on every armed tick, including the one that entered the state.
  if (!c.ended && c.detector_enabled && detect_freefall(in.imu, t, cfg.detector, c.state)) {
    c.fall_from = c.state;
    c.freefall_at = t;
    em.emit(EventKind::FreeFall,
            json{{"mean_specific_force", trailing_mean_norm(in.imu, t, cfg.detector.window).value_or(0.0)}});
  }

  if (!c.ended && (c.state == AutonomyState::Landed || c.state == AutonomyState::Aborted)) {
    em.emit(EventKind::TrialEnd, json{{"reason", std::string(to_string(c.state))}});
    c.ended = true;
  }

  const FsmActions flags = out.actions;
  out.actions = guidance(c, c.state, in, cfg);
  out.actions.resume_flight = flags.resume_flight;
  // Arm on the tick the perch confirm lands, whether it came from the policy or the operator.
  out.actions.arm_gripper = c.state == AutonomyState::PerchSequence && state_at_tick != AutonomyState::PerchSequence;
  out.actions.request_plan = c.state == AutonomyState::Planning;
  out.actions.trial_over = c.ended;
  return out;
}

Vec3 staging_point(const perception::PerchCandidate& c, const FsmConfig& cfg) {
  return c.target_pose + cfg.staging_standoff * c.approach_normal;
}

ReplayResult replay(const EventLog& log) {
  ReplayResult r;
  AutonomyState state = AutonomyState::Idle;
  for (const Event& e : log.events()) {
    if (e.kind == EventKind::StateEnter) {
      const auto s = parse_state(e.payload.value("state", std::string{}));
      if (!s) throw Error(ErrorCode::IoError, "state_enter entry without a valid state");
      r.recorded.push_back(*s);
      continue;
    }
    if (e.kind == EventKind::StateExit) continue;
    if (const auto next = transition(state, e.kind)) {
      state = *next;
      r.replayed.push_back(state);
    }
  }
  return r;
}

}  // namespace perchsim::autonomy
