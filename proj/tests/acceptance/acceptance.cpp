// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Exits non-zero when any criterion fails or overruns its time limit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "perchsim/autonomy/fsm.hpp"
#include "perchsim/control/control.hpp"
#include "perchsim/harness/batch.hpp"
#include "perchsim/perception/perception.hpp"
#include "perchsim/planner/planner.hpp"
#include "perchsim/sim/dynamics.hpp"
#include "support/gen.hpp"

using namespace perchsim;

namespace {

constexpr double kDeg = M_PI / 180.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Verdict()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// --- free fall ---

Verdict free_fall() {
  const sim::SimConfig cfg;
  sim::WorldState w;
  w.vehicle.position = {0, 0, 2};
  w.specific_force_world = -cfg.constants.gravity();
  const control::ControlCommand off{0.0, Quat::Identity(), 0.0};
  const double dt = cfg.vehicle.physics_dt();
  const int steps = static_cast<int>(std::lround(0.1 / dt));
  for (int i = 0; i < steps; ++i) w = sim::step_dynamics(w, off, dt, cfg);
  const double drop = 2.0 - w.vehicle.position.z();
  return {std::abs(drop - 0.049) <= 1e-4, fmt("drop %.9f m after %.3f s", drop, w.time)};
}

// --- detector threshold ---

Verdict detector_threshold() {
  const autonomy::FailureDetectorConfig cfg;
  const std::pair<double, bool> cases[] = {{9.8, false}, {7.1, false}, {6.9, true}, {0.0, true}};
  bool ok = true;
  std::string got;
  for (const auto& [a, expect] : cases) {
    std::vector<sim::ImuSample> imu;
    for (int i = 0; i <= 200; ++i) imu.push_back({Vec3(0, 0, a), i * 0.005});
    const bool fire = autonomy::detect_freefall(imu, 1.0, cfg, autonomy::AutonomyState::Perched);
    ok = ok && fire == expect;
    got += fmt("%.1f->%s ", a, fire ? "fire" : "quiet");
  }
  return {ok, got};
}

// --- recovery ---

Verdict recovery() {
  harness::ScenarioConfig cfg;
  cfg.grasp.spine_sharpness = 0.0;
  const double tick = 1.0 / cfg.sim.vehicle.control_rate;
  const auto batch = harness::run_batch(cfg, 100, 1, workers());
  int good = 0;
  double worst_latency = 0.0, dmin = 1e9, dmax = -1e9, slip_loss = 0.0, fail_loss = 0.0;
  for (const auto& r : batch.trials) {
    const bool hovered = r.final_state == autonomy::AutonomyState::SafeHover && r.recovery_latency &&
                         r.safe_hover_distance;
    if (!hovered) continue;
    const double lat_err = std::abs(*r.recovery_latency - cfg.fsm.detector.actuation_latency);
    worst_latency = std::max(worst_latency, lat_err);
    dmin = std::min(dmin, *r.safe_hover_distance);
    dmax = std::max(dmax, *r.safe_hover_distance);
    double& loss = r.log.contains(autonomy::EventKind::Slip) ? slip_loss : fail_loss;
    loss = std::max(loss, r.max_altitude_loss);
    if (lat_err <= tick + 1e-9 && std::abs(*r.safe_hover_distance - 1.0) <= 0.2) ++good;
  }
  return {good == 100, fmt("%d/100 in SafeHover; latency error <= %.2e s; distance %.3f..%.3f m; "
                           "max altitude loss %.3f m (slip), %.3f m (failed closure)",
                           good, worst_latency, dmin, dmax, slip_loss, fail_loss)};
}

// --- perch statistics ---

Verdict perch_statistics() {
  const auto batch = harness::run_batch(harness::ScenarioConfig{}, 1000, 1, workers());
  const auto& s = batch.summary;
  const double rate = s.rate(harness::TrialOutcome::PerchSuccess);
  const auto ci = s.interval(harness::TrialOutcome::PerchSuccess);
  return {rate >= 0.72 && rate <= 0.78,
          fmt("PerchSuccess %zu/1000 = %.3f (95%% CI %.3f..%.3f); slip %zu, mechanical %zu, other %zu",
              s.count(harness::TrialOutcome::PerchSuccess), rate, ci.lo, ci.hi,
              s.count(harness::TrialOutcome::SpineSlip), s.count(harness::TrialOutcome::MechanicalFailure),
              1000 - s.count(harness::TrialOutcome::PerchSuccess) - s.count(harness::TrialOutcome::SpineSlip) -
                  s.count(harness::TrialOutcome::MechanicalFailure))};
}

// --- trajectory contract ---

Verdict trajectory_contract() {
  const planner::PlannerConfig cfg;
  testgen::Gen gen(2718);
  double boundary = 0.0, speed_err = 0.0, dir_err = 0.0, fd_err = 0.0;
  const double h = 1e-3;
  for (int i = 0; i < 1000; ++i) {
    sim::VehicleState start;
    start.position = gen.box(Vec3(-8, -8, 0.5), Vec3(8, 8, 3));
    start.velocity = 0.3 * gen.uniform(0, 1) * gen.unit();
    const Vec3 target = gen.box(Vec3(-8, -8, 0.5), Vec3(8, 8, 3));
    const Vec3 normal = gen.horizontal_unit();
    const auto traj = planner::plan_perch_trajectory(start, target, normal, cfg);
    const auto s0 = planner::sample(traj, 0.0);
    const auto s1 = planner::sample(traj, traj.duration);
    boundary = std::max({boundary, (s0.position - start.position).norm(), (s0.velocity - start.velocity).norm(),
                         s0.acceleration.norm(), (s1.position - target).norm(), s1.acceleration.norm()});
    speed_err = std::max(speed_err, std::abs(s1.velocity.norm() - cfg.terminal_speed));
    dir_err = std::max(dir_err, (s1.velocity + cfg.terminal_speed * normal).norm());
    for (int k = 0; k < 50; ++k) {
      const double t = gen.uniform(h, traj.duration - h);
      const Vec3 fd = (planner::sample(traj, t + h).position - planner::sample(traj, t - h).position) / (2 * h);
      fd_err = std::max(fd_err, (fd - planner::sample(traj, t).velocity).norm());
    }
  }
  return {boundary <= 1e-9 && speed_err <= 1e-9 && dir_err <= 1e-9 && fd_err <= 1e-5,
          fmt("boundary residual %.2e; terminal speed error %.2e; anti-parallel error %.2e; "
              "finite-difference error %.2e m/s",
              boundary, speed_err, dir_err, fd_err)};
}

// --- gentle perch ---

Verdict gentle_perch() {
  const control::GentlePerchConfig g;
  const sim::SimConfig sc;
  const double hover = sc.vehicle.hover_thrust(sc.constants);
  bool schedule = control::gentle_perch_thrust(0.0, hover, g) == hover;
  double prev = hover;
  for (int k = 0; k <= 800; ++k) {
    const double t = k / g.rate;
    const double f = control::gentle_perch_thrust(t, hover, g);
    schedule = schedule && f <= prev && f >= 0.0 && (t < g.duration - 1e-12 || f == 0.0);
    prev = f;
  }

  harness::ScenarioConfig cfg;
  // A clean grasp every time, so each trial actually reaches the brace.
  cfg.grasp.p_mechanical = 1.0;
  cfg.grasp.p_hold = 1.0;
  const auto batch = harness::run_batch(cfg, 50, 1, workers());
  int settled = 0, false_fires = 0;
  double worst_pitch = 0.0, worst_backoff = 0.0;
  for (const auto& r : batch.trials) {
    if (r.detector_fired) ++false_fires;
    if (!r.final_pitch) continue;
    const double err = std::abs(*r.final_pitch - r.pivot_stop_angle);
    worst_pitch = std::max(worst_pitch, err);
    worst_backoff = std::max(worst_backoff, r.max_pitch_backoff);
    if (r.outcome == harness::TrialOutcome::PerchSuccess && err <= 1e-6 && !r.detector_fired) ++settled;
  }
  return {schedule && settled == 50,
          fmt("schedule %s; %d/50 settled at the %.0f deg brace (worst error %.1e rad, worst backoff %.2f deg); "
              "%d detector false-fires",
              schedule ? "ok" : "BROKEN", settled, sc.pivot.brace_angle / kDeg, worst_pitch, worst_backoff / kDeg,
              false_fires)};
}

// --- perception oracle ---

std::optional<double> oracle_depth(const perception::CameraModel& cam, const sim::WorldState& w, int u, int v) {
  const auto pose = cam.world_from_optical(w.vehicle);
  const Vec3 d = pose.linear() * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  const Vec3 o = pose.translation();
  auto t = testgen::ray_vertical_cylinder(o, d, w.tree.base_point.x(), w.tree.base_point.y(), w.tree.radius,
                                          w.tree.height);
  if (d.z() < 0.0) {
    const double tg = -o.z() / d.z();
    if (!t || tg < *t) t = tg;
  }
  return t;
}

double worst_render_error(const perception::CameraModel& cam, const sim::WorldState& w) {
  Rng rng = make_rng(1, RngStream::Depth);
  const auto img = perception::render_depth(cam, w, rng);
  double worst = 0.0;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const auto t = oracle_depth(cam, w, u, v);
      const bool visible = !cam.occluded(u, v) && t && *t >= cam.depth_min && *t <= cam.depth_max;
      worst = std::max(worst, std::abs(img.at(u, v) - (visible ? *t : 0.0)));
    }
  }
  return worst;
}

sim::WorldState random_pose(testgen::Gen& gen) {
  sim::WorldState w;
  w.tree.base_point = {gen.uniform(8, 12), gen.uniform(2, 4), 0.0};
  w.tree.radius = gen.uniform(0.05, 0.3);
  const double bearing = gen.uniform(-M_PI, M_PI);
  const double range = gen.uniform(w.tree.radius + 0.4, 3.2);
  const Vec3 toward(-std::cos(bearing), -std::sin(bearing), 0.0);
  w.vehicle.position = w.tree.base_point - range * toward;
  w.vehicle.position.z() = gen.uniform(0.5, 2.8);
  const double yaw = std::atan2(toward.y(), toward.x()) + gen.uniform(-0.6, 0.6);
  w.vehicle.attitude = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                            Eigen::AngleAxisd(gen.uniform(-0.3, 0.3), Vec3::UnitY()) *
                            Eigen::AngleAxisd(gen.uniform(-0.2, 0.2), Vec3::UnitX()));
  return w;
}

Verdict perception_oracle() {
  // 1000 poses on a 160x120 camera with the default field of view, plus a
  // handful of full-resolution frames through the default camera and mask.
  perception::CameraModel small = perception::CameraModel::make_default();
  small.width = 160;
  small.height = 120;
  small.fx = small.fy = 100.0;
  small.cx = 80.0;
  small.cy = 60.0;
  small.occlusion_mask.clear();
  testgen::Gen gen(4242);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) worst = std::max(worst, worst_render_error(small, random_pose(gen)));
  const auto full = perception::CameraModel::make_default();
  for (int i = 0; i < 20; ++i) worst = std::max(worst, worst_render_error(full, random_pose(gen)));

  // Nominal trunk 2 m from the camera.
  sim::WorldState w;
  const Vec3 mount = full.body_extrinsic.translation();
  w.vehicle.position = w.tree.base_point + Vec3(-2.0 - mount.x(), 0.0, 1.5);
  Rng rng = make_rng(1, RngStream::Depth);
  const auto img = perception::render_depth(full, w, rng);
  const auto c = perception::detect_perch_site(img, full, perception::DetectorConfig{}, w.vehicle);
  double diam_err = 1.0, pose_err = 1e9;
  if (c) {
    diam_err = std::abs(c->diameter_est - 2 * w.tree.radius) / (2 * w.tree.radius);
    const Vec3 axis = w.tree.axis_point(c->target_pose.z());
    const Vec3 truth = axis + w.tree.radius * horizontal(w.vehicle.position - axis).normalized();
    pose_err = (c->target_pose - truth).norm();
  }

  // Same scene with the trunk top leaning 15 deg toward the camera.
  sim::WorldState lean = w;
  lean.tree.axis_direction = Vec3(-std::sin(15 * kDeg), 0.0, std::cos(15 * kDeg));
  lean.tree.base_point.x() += 0.4;
  Rng rng2 = make_rng(1, RngStream::Depth);
  const auto lean_img = perception::render_depth(full, lean, rng2);
  const bool rejected = !perception::detect_perch_site(lean_img, full, perception::DetectorConfig{}, lean.vehicle);

  return {worst <= 1e-9 && c && diam_err <= 0.10 && pose_err <= 0.05 && rejected,
          fmt("render error %.2e m over 1020 poses; diameter error %.1f%%; pose error %.3f m; overhang %s",
              worst, 100 * diam_err, pose_err, rejected ? "rejected" : "ACCEPTED")};
}

// --- determinism ---

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const harness::ScenarioConfig cfg;
  const auto root = std::filesystem::temp_directory_path() / "perchsim_acceptance_determinism";
  std::filesystem::remove_all(root);
  const auto serial = harness::write_batch_logs(harness::run_batch(cfg, 100, 1, 1), root / "j1");
  const auto parallel = harness::write_batch_logs(harness::run_batch(cfg, 100, 1, 8), root / "j8");
  int identical = 0;
  for (std::size_t i = 0; i < serial.size() && i < parallel.size(); ++i) {
    if (serial[i].filename() == parallel[i].filename() && slurp(serial[i]) == slurp(parallel[i])) ++identical;
  }
  std::filesystem::remove_all(root);
  const int total = static_cast<int>(serial.size());
  return {identical == total && serial.size() == parallel.size(),
          fmt("%d/%d files byte-identical (100 event logs + summary), jobs 1 vs 8", identical, total)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"free_fall_drop", 1.0, free_fall},
      {"detector_threshold", 1.0, detector_threshold},
      {"recovery_latency_and_offset", 60.0, recovery},
      {"perch_success_rate", 300.0, perch_statistics},
      {"trajectory_contract", 10.0, trajectory_contract},
      {"gentle_perch", 60.0, gentle_perch},
      {"perception_oracle", 30.0, perception_oracle},
      {"determinism", 60.0, determinism},
  };
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& ex) {
      v = {false, std::string("threw: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = v.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %-28s %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(),
                secs, c.limit_s, in_time ? "" : ", TOO SLOW");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
