#include "perchsim/harness/trial.hpp"

#include <algorithm>
#include <cmath>

#include "perchsim/sim/dynamics.hpp"

namespace perchsim::harness {
namespace {

using autonomy::AutonomyState;
using autonomy::Event;
using autonomy::EventKind;
using gripper::GripperStatus;
using nlohmann::json;

constexpr std::array<std::pair<TrialOutcome, std::string_view>, kOutcomeCount> kOutcomeNames{{
    {TrialOutcome::PerchSuccess, "PerchSuccess"},
    {TrialOutcome::SpineSlip, "SpineSlip"},
    {TrialOutcome::MechanicalFailure, "MechanicalFailure"},
    {TrialOutcome::RecoverySuccess, "RecoverySuccess"},
    {TrialOutcome::RecoveryFailure, "RecoveryFailure"},
    {TrialOutcome::DetectFailure, "DetectFailure"},
    {TrialOutcome::PlanFailure, "PlanFailure"},
    {TrialOutcome::Timeout, "Timeout"},
    {TrialOutcome::Aborted, "Aborted"},
}};

int period_ticks(int control_rate, double rate) {
  return std::max(1, static_cast<int>(std::lround(control_rate / rate)));
}

std::optional<double> first_time(const autonomy::EventLog& log, EventKind k) {
  const Event* e = log.first(k);
  return e ? std::optional<double>(e->timestamp) : std::nullopt;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Everything needed to turn frames into perch candidates on the trial thread.
struct Eyes {
  const ScenarioConfig& cfg;
  perception::CameraModel camera;
  Rng& depth_rng;

  perception::DepthImage render(const sim::WorldState& world) const {
    return perception::render_depth(camera, world, depth_rng, {cfg.sensing.depth_noise_rel});
  }

  std::optional<perception::PerchCandidate> detect(const perception::DepthImage& img,
                                                   const sim::VehicleState& vehicle) const {
    try {
      return perception::detect_perch_site(img, camera, cfg.detector, vehicle);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EmptyFrame || e.code() == ErrorCode::DepthOutOfRange) return std::nullopt;
      throw;
    }
  }
};

}  // namespace

std::string_view to_string(TrialOutcome o) {
  for (const auto& [k, name] : kOutcomeNames) {
    if (k == o) return name;
  }
  return "Unknown";
}

std::optional<TrialOutcome> parse_outcome(std::string_view name) {
  for (const auto& [k, n] : kOutcomeNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool is_success(TrialOutcome o) { return o == TrialOutcome::PerchSuccess || o == TrialOutcome::RecoverySuccess; }

TrialOutcome classify(const autonomy::EventLog& log) {
  if (log.contains(EventKind::Abort)) return TrialOutcome::Aborted;
  if (log.contains(EventKind::Reject) || !log.contains(EventKind::Detect)) return TrialOutcome::DetectFailure;
  if (log.contains(EventKind::PlanFailed)) return TrialOutcome::PlanFailure;

  std::optional<TrialOutcome> cause;
  if (log.contains(EventKind::GripperFailure)) {
    cause = TrialOutcome::MechanicalFailure;
  } else if (log.contains(EventKind::Slip)) {
    cause = TrialOutcome::SpineSlip;
  }
  if (cause) {
    if (!log.contains(EventKind::RecoveryComplete)) return TrialOutcome::RecoveryFailure;
    const Event* start = log.first(EventKind::Start);
    const bool induced = start && start->payload.value("induced_failure", false);
    return induced ? TrialOutcome::RecoverySuccess : *cause;
  }
  if (log.contains(EventKind::HoldComplete)) return TrialOutcome::PerchSuccess;
  if (log.contains(EventKind::GroundContact)) return TrialOutcome::RecoveryFailure;
  return TrialOutcome::Timeout;
}

TrialResult run_trial(const ScenarioConfig& cfg, std::uint64_t seed, const TrialOptions& options,
                      const TrialHooks& hooks) {
  cfg.validate();
  const sim::SimConfig& sc = cfg.sim;
  const double dt = sc.vehicle.physics_dt();
  const int steps_per_control = sc.vehicle.physics_steps_per_control();
  const int control_rate = sc.vehicle.control_rate;
  const double hover = sc.vehicle.hover_thrust(sc.constants);

  Rng scenario_rng = make_rng(seed, RngStream::Scenario);
  Rng imu_rng = make_rng(seed, RngStream::Imu);
  Rng depth_rng = make_rng(seed, RngStream::Depth);
  Rng grasp_rng = make_rng(seed, RngStream::Grasp);
  const Eyes eyes{cfg, cfg.camera.make(), depth_rng};

  TrialResult r;
  r.seed = seed;
  r.scenario_hash = scenario_hash(cfg);

  sim::WorldState world;
  world.tree = cfg.tree;
  {
    std::normal_distribution<double> unit(0.0, 1.0);
    Vec3 jitter;
    for (int i = 0; i < 3; ++i) jitter[i] = cfg.start.position_jitter * unit(scenario_rng);
    const double yaw = cfg.start.yaw + cfg.start.yaw_jitter * unit(scenario_rng);
    world.vehicle.position = cfg.start.position + jitter;
    world.vehicle.attitude = attitude_from_z_and_yaw(kWorldUp, yaw);
    world.specific_force_world = -sc.constants.gravity();
    world.applied_thrust = hover;
  }

  std::vector<sim::ImuSample> imu;
  const std::size_t imu_keep =
      std::max<std::size_t>(64, static_cast<std::size_t>(4.0 * cfg.fsm.detector.window * sc.vehicle.physics_rate));
  imu.reserve(2 * imu_keep);

  const json start_info{{"seed", seed},
                        {"scenario", r.scenario_hash},
                        {"induced_failure", cfg.grasp.spine_sharpness == 0.0}};

  auto log_event = [&](const Event& e) {
    r.log.append(e);
    if (hooks.on_event) hooks.on_event(e);
  };

  autonomy::AutonomyContext ctx;
  control::ControlCommand cmd{hover, world.vehicle.attitude, 0.0};
  planner::Trajectory traj;
  double traj_t0 = 0.0;
  Vec3 planned_staging = Vec3::Zero();
  std::optional<planner::Trajectory> pending_plan;
  std::optional<perception::PerchCandidate> tracked;
  bool track_lost_logged = false;
  std::optional<double> impact_speed;

  const int search_period = period_ticks(control_rate, cfg.sensing.search_frame_rate);
  const int track_period = period_ticks(control_rate, cfg.sensing.track_frame_rate);
  const int display_period = period_ticks(control_rate, hooks.display_frame_rate);

  std::optional<double> failure_ref_z;
  double min_z_after_failure = 0.0;
  double max_pitch = 0.0;
  std::int64_t control_index = 0;

  for (;;) {
    if (world.tick % steps_per_control == 0) {
      const double t = world.time;
      autonomy::FsmInputs in;
      in.time = t;
      in.start = true;
      in.start_info = start_info;
      in.vehicle = world.vehicle;
      in.gripper = gripper::status(world.gripper);
      in.tof_range = sim::read_tof(world, sc.sensors).range;
      in.impact_speed = impact_speed;
      in.applied_thrust = world.applied_thrust;
      in.imu = imu;
      in.ground_contact = sim::kind(world.phase) == sim::PhaseKind::Grounded;
      if (hooks.poll_commands) in.commands = hooks.poll_commands();

      std::optional<perception::DepthImage> frame;
      std::optional<perception::PerchCandidate> frame_candidate;
      if (ctx.state == AutonomyState::SearchTree && control_index % search_period == 0) {
        frame = eyes.render(world);
        frame_candidate = eyes.detect(*frame, world.vehicle);
        in.detection = frame_candidate;
      } else if (ctx.state == AutonomyState::FlyToPerch && control_index % track_period == 0 &&
                 (world.vehicle.position - ctx.staging).norm() > cfg.sensing.track_freeze_distance) {
        frame = eyes.render(world);
        frame_candidate = eyes.detect(*frame, world.vehicle);
        try {
          tracked = perception::track_candidate(tracked.value_or(*ctx.target), frame_candidate, cfg.tracker);
          // Small drifts stay inside the tracker; the plan and the arrival
          // check only follow moves worth a new trajectory.
          if ((autonomy::staging_point(*tracked, cfg.fsm) - ctx.staging).norm() > cfg.planner.replan_threshold) {
            in.tracked = tracked;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::TrackLost) throw;
          if (!track_lost_logged) {
            log_event(Event{t, EventKind::TrackLost, json{{"detail", e.what()}}});
            track_lost_logged = true;
          }
        }
      }
      if (hooks.on_frame && control_index % display_period == 0) {
        if (!frame) {
          // Display-only frames never touch the trial's noise streams.
          Rng display_rng = make_rng(seed, RngStream::Depth);
          frame = perception::render_depth(eyes.camera, world, display_rng, {});
          try {
            frame_candidate = perception::evaluate_perch_site(*frame, eyes.camera, cfg.detector, world.vehicle);
          } catch (const Error&) {
            frame_candidate.reset();
          }
        }
        hooks.on_frame(FrameSnapshot{&*frame, frame_candidate});
      }

      if (ctx.state == AutonomyState::Planning && ctx.target) {
        autonomy::PlanOutcome outcome;
        try {
          pending_plan =
              planner::plan_perch_trajectory(world.vehicle, ctx.staging, ctx.target->approach_normal, cfg.planner);
          outcome.ok = true;
          outcome.duration = pending_plan->duration;
        } catch (const Error& e) {
          outcome.error = e.what();
        }
        in.plan = outcome;
      }

      const AutonomyState before = ctx.state;
      autonomy::FsmStep step = autonomy::fsm_step(ctx, in, cfg.fsm);
      for (const Event& e : step.events) log_event(e);
      ctx = std::move(step.context);
      const autonomy::FsmActions& act = step.actions;

      if (before == AutonomyState::Planning && ctx.state == AutonomyState::FlyToPerch && pending_plan) {
        traj = *pending_plan;
        traj_t0 = t;
        planned_staging = ctx.staging;
        pending_plan.reset();
      }
      if (ctx.state == AutonomyState::FlyToPerch &&
          (ctx.staging - planned_staging).norm() > cfg.planner.replan_threshold) {
        try {
          traj = planner::plan_perch_trajectory(world.vehicle, ctx.staging, ctx.target->approach_normal, cfg.planner);
          traj_t0 = t;
          log_event(Event{t, EventKind::Replan, json{{"duration", traj.duration}}});
        } catch (const Error& e) {
          log_event(Event{t, EventKind::Replan, json{{"error", e.what()}}});
        }
        planned_staging = ctx.staging;
      }

      if (act.arm_gripper && gripper::status(world.gripper) == GripperStatus::Stowed) {
        world.gripper = gripper::apply(world.gripper, gripper::GripperEvent::Arm, t);
      }
      if (act.resume_flight) world = sim::resume_free_flight(world);

      planner::Setpoint sp = act.setpoint;
      switch (act.mode) {
        case autonomy::GuidanceMode::Off:
          cmd = control::ControlCommand{0.0, world.vehicle.attitude, t};
          break;
        case autonomy::GuidanceMode::Trajectory: {
          const double local = t - traj_t0;
          sp = planner::sample(traj, local);
          if (local > traj.duration) {
            // Past the end the vehicle holds the staging point.
            sp.velocity.setZero();
            sp.acceleration.setZero();
          }
          cmd = control::track(world.vehicle, sp, cfg.gains, sc.vehicle, sc.constants, t);
          break;
        }
        case autonomy::GuidanceMode::GentlePerch:
          cmd = control::gentle_perch_command(act.gentle_elapsed, ctx.hold_yaw, cfg.fsm.gentle, sc.vehicle,
                                              sc.constants, t);
          sp.position = world.vehicle.position;
          break;
        case autonomy::GuidanceMode::Hover:
        case autonomy::GuidanceMode::Creep:
        case autonomy::GuidanceMode::Recovery:
          cmd = control::track(world.vehicle, sp, cfg.gains, sc.vehicle, sc.constants, t);
          break;
      }

      const auto* pivot = std::get_if<sim::phase::PerchedPivot>(&world.phase);
      if (hooks.on_tick) {
        hooks.on_tick(TelemetrySnapshot{t, ctx.state, world.vehicle, sp, world.applied_thrust, sc.vehicle.max_thrust,
                                        gripper::status(world.gripper), sim::kind(world.phase)});
      }
      if (options.record_trace) {
        r.trace.push_back(TraceRow{t, ctx.state, world.vehicle.position, world.vehicle.velocity, sp.position,
                                   world.applied_thrust, pivot ? pivot->pitch_angle : 0.0});
      }

      if (act.trial_over) break;
      if (t >= cfg.timeout - 1e-9) {
        log_event(Event{t, EventKind::TrialEnd, json{{"reason", "timeout"}}});
        break;
      }
      ++control_index;
    }

    world = sim::step_dynamics(world, cmd, dt, sc);
    imu.push_back(sim::read_imu(world, imu_rng, sc.sensors));
    if (imu.size() >= 2 * imu_keep) imu.erase(imu.begin(), imu.end() - static_cast<std::ptrdiff_t>(imu_keep));

    // Gripper electronics run at the physics rate.
    const GripperStatus was = gripper::status(world.gripper);
    if (was == GripperStatus::Armed && gripper::check_trigger(sim::read_tof(world, sc.sensors), world.gripper,
                                                              cfg.gripper)) {
      world.gripper = gripper::apply(world.gripper, gripper::GripperEvent::Trigger, world.time);
    } else if (const auto* trig = std::get_if<gripper::Triggered>(&world.gripper);
               trig && world.time + 1e-12 >= gripper::closure_complete_at(*trig, cfg.gripper)) {
      const Vec3 n = ctx.target ? ctx.target->approach_normal : Vec3::Zero();
      const double impact = std::max(0.0, -world.vehicle.velocity.dot(n));
      impact_speed = impact;
      world.gripper =
          gripper::resolve_grasp(world.gripper, world.time, impact, world.tree, cfg.gripper, cfg.grasp, grasp_rng);
      switch (gripper::status(world.gripper)) {
        case GripperStatus::Engaged:
          world = sim::engage_pivot(world, horizontal(-world.vehicle.body_x()), cfg.gripper.pivot_limit, sc);
          break;
        case GripperStatus::Slipped:
          world = sim::release_to_free_fall(world);
          break;
        default:
          break;
      }
    } else if (was == GripperStatus::Engaged) {
      world.gripper = gripper::update_hold(world.gripper, world.time);
      if (gripper::status(world.gripper) == GripperStatus::Slipped) world = sim::release_to_free_fall(world);
    }

    const GripperStatus now_status = gripper::status(world.gripper);
    if (!failure_ref_z && (now_status == GripperStatus::Slipped || now_status == GripperStatus::MechanicalFailure)) {
      failure_ref_z = world.vehicle.position.z();
      min_z_after_failure = *failure_ref_z;
    }
    if (failure_ref_z && ctx.state != AutonomyState::SafeHover) {
      min_z_after_failure = std::min(min_z_after_failure, world.vehicle.position.z());
    }
    if (const auto* pv = std::get_if<sim::phase::PerchedPivot>(&world.phase)) {
      max_pitch = std::max(max_pitch, pv->pitch_angle);
      r.max_pitch_backoff = std::max(r.max_pitch_backoff, max_pitch - pv->pitch_angle);
      r.pivot_stop_angle = pv->stop_angle;
    }
  }

  if (const auto* pv = std::get_if<sim::phase::PerchedPivot>(&world.phase)) r.final_pitch = pv->pitch_angle;
  r.final_state = ctx.state;
  r.outcome = classify(r.log);
  r.max_altitude_loss = failure_ref_z ? *failure_ref_z - min_z_after_failure : 0.0;
  r.detector_fired = r.log.contains(EventKind::FreeFall);

  r.timings.detect = first_time(r.log, EventKind::Detect);
  r.timings.arrival = first_time(r.log, EventKind::Arrive);
  r.timings.trigger = first_time(r.log, EventKind::Trigger);
  r.timings.engage = first_time(r.log, EventKind::Engage);
  r.timings.perched = first_time(r.log, EventKind::Perched);
  r.timings.freefall = first_time(r.log, EventKind::FreeFall);
  r.timings.recovery_start = first_time(r.log, EventKind::RecoveryStart);
  r.timings.safe_hover = first_time(r.log, EventKind::RecoveryComplete);
  r.timings.end = r.log.events().empty() ? 0.0 : r.log.events().back().timestamp;
  if (r.timings.freefall && r.timings.recovery_start) {
    r.recovery_latency = *r.timings.recovery_start - *r.timings.freefall;
  }
  if (const Event* done = r.log.first(EventKind::RecoveryComplete)) {
    r.safe_hover_distance = done->payload.value("distance_to_site", 0.0);
  }
  return r;
}

nlohmann::json summary_json(const TrialResult& r) {
  return json{{"seed", r.seed},
              {"scenario", r.scenario_hash},
              {"outcome", std::string(to_string(r.outcome))},
              {"final_state", std::string(autonomy::to_string(r.final_state))},
              {"timings",
               {{"detect", opt(r.timings.detect)},
                {"arrival", opt(r.timings.arrival)},
                {"trigger", opt(r.timings.trigger)},
                {"engage", opt(r.timings.engage)},
                {"perched", opt(r.timings.perched)},
                {"freefall", opt(r.timings.freefall)},
                {"recovery_start", opt(r.timings.recovery_start)},
                {"safe_hover", opt(r.timings.safe_hover)},
                {"end", r.timings.end}}},
              {"max_altitude_loss", r.max_altitude_loss},
              {"recovery_latency", opt(r.recovery_latency)},
              {"safe_hover_distance", opt(r.safe_hover_distance)},
              {"final_pitch", opt(r.final_pitch)},
              {"max_pitch_backoff", r.max_pitch_backoff},
              {"detector_fired", r.detector_fired},
              {"events", r.log.size()}};
}

}  // namespace perchsim::harness
