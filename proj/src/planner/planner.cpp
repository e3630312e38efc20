#include "perchsim/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace perchsim::planner {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

double eval(const AxisPoly& c, double s) {
  double acc = c[5];
  for (int k = 4; k >= 0; --k) acc = acc * s + c[k];
  return acc;
}

double eval_d1(const AxisPoly& c, double s) {
  double acc = 5.0 * c[5];
  for (int k = 4; k >= 1; --k) acc = acc * s + k * c[k];
  return acc;
}

double eval_d2(const AxisPoly& c, double s) {
  double acc = 20.0 * c[5];
  for (int k = 4; k >= 2; --k) acc = acc * s + k * (k - 1) * c[k];
  return acc;
}

/// Normalised-time quintic: derivatives in s are the time derivatives times T^n.
AxisPoly solve_axis(double p0, double v0, double a0, double p1, double v1, double a1) {
  const double dp = p1 - p0 - v0 - 0.5 * a0;
  const double dv = v1 - v0 - a0;
  const double da = a1 - a0;
  AxisPoly c{};
  c[0] = p0;
  c[1] = v0;
  c[2] = 0.5 * a0;
  c[3] = 10.0 * dp - 4.0 * dv + 0.5 * da;
  c[4] = -15.0 * dp + 7.0 * dv - da;
  c[5] = 6.0 * dp - 3.0 * dv + 0.5 * da;
  return c;
}

double clamp_time(double t, double duration) { return std::clamp(t, 0.0, duration); }

}  // namespace

Vec3 PolySegment::position(double t) const {
  const double s = clamp_time(t, duration) / duration;
  return {eval(axes[0], s), eval(axes[1], s), eval(axes[2], s)};
}

Vec3 PolySegment::velocity(double t) const {
  const double s = clamp_time(t, duration) / duration;
  return Vec3(eval_d1(axes[0], s), eval_d1(axes[1], s), eval_d1(axes[2], s)) / duration;
}

Vec3 PolySegment::acceleration(double t) const {
  const double s = clamp_time(t, duration) / duration;
  return Vec3(eval_d2(axes[0], s), eval_d2(axes[1], s), eval_d2(axes[2], s)) / (duration * duration);
}

void PlannerConfig::validate() const {
  require(terminal_speed > 0.0 && terminal_speed < cruise_speed && cruise_speed <= v_max,
          "planner speeds must satisfy 0 < terminal_speed < cruise_speed <= v_max");
  require(a_max > 0.0, "a_max must be positive");
  require(min_duration > 0.0 && min_duration < max_duration, "planner durations must be ordered");
  require(inflation > 1.0, "inflation factor must exceed 1");
  require(check_rate > 0.0, "check_rate must be positive");
  require(replan_threshold > 0.0, "replan_threshold must be positive");
}

PolySegment solve_segment(const Boundary& start, const Boundary& end, double duration) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw Error(ErrorCode::DegenerateTrajectory, "segment duration must be positive");
  }
  PolySegment seg;
  seg.duration = duration;
  const double t = duration;
  for (int i = 0; i < 3; ++i) {
    seg.axes[i] = solve_axis(start.position[i], start.velocity[i] * t, start.acceleration[i] * t * t,
                             end.position[i], end.velocity[i] * t, end.acceleration[i] * t * t);
  }
  return seg;
}

Peaks sampled_peaks(const PolySegment& segment, double rate) {
  Peaks peaks;
  const auto steps = static_cast<long>(std::ceil(segment.duration * rate));
  for (long k = 0; k <= steps; ++k) {
    const double t = std::min(segment.duration, static_cast<double>(k) / rate);
    peaks.speed = std::max(peaks.speed, segment.velocity(t).norm());
    peaks.accel = std::max(peaks.accel, segment.acceleration(t).norm());
  }
  return peaks;
}

Trajectory plan_perch_trajectory(const sim::VehicleState& start, const Vec3& target_pose,
                                 const Vec3& approach_normal, const PlannerConfig& cfg) {
  cfg.validate();
  if (!start.position.allFinite() || !start.velocity.allFinite() || !target_pose.allFinite()) {
    throw Error(ErrorCode::DegenerateTrajectory, "non-finite planning input");
  }
  require(std::abs(approach_normal.norm() - 1.0) <= 1e-6 && std::abs(approach_normal.z()) <= 1e-6,
          "approach_normal must be a horizontal unit vector");

  const double distance = (target_pose - start.position).norm();
  if (distance < 1e-9 && start.velocity.norm() < 1e-9) {
    throw Error(ErrorCode::DegenerateTrajectory, "start and target coincide with zero start velocity");
  }

  const Boundary from{start.position, start.velocity, Vec3::Zero()};
  const Boundary to{target_pose, -cfg.terminal_speed * approach_normal, Vec3::Zero()};

  Trajectory traj;
  traj.approach_normal = approach_normal;
  traj.yaw = heading_yaw(-approach_normal);
  for (double duration = std::max(distance / cfg.cruise_speed, cfg.min_duration);;
       duration *= cfg.inflation) {
    if (duration > cfg.max_duration) {
      throw Error(ErrorCode::InfeasibleLimits, "no duration up to " + std::to_string(cfg.max_duration) +
                                                   " s satisfies v_max and a_max");
    }
    const PolySegment seg = solve_segment(from, to, duration);
    const Peaks peaks = sampled_peaks(seg, cfg.check_rate);
    if (peaks.speed <= cfg.v_max && peaks.accel <= cfg.a_max) {
      traj.segments = {seg};
      traj.duration = duration;
      return traj;
    }
  }
}

Setpoint sample(const Trajectory& traj, double t) {
  Setpoint sp;
  sp.yaw = traj.yaw;
  if (traj.segments.empty()) return sp;
  double local = std::clamp(t, 0.0, traj.duration);
  for (std::size_t i = 0; i < traj.segments.size(); ++i) {
    const PolySegment& seg = traj.segments[i];
    if (local <= seg.duration || i + 1 == traj.segments.size()) {
      sp.position = seg.position(local);
      sp.velocity = seg.velocity(local);
      sp.acceleration = seg.acceleration(local);
      return sp;
    }
    local -= seg.duration;
  }
  return sp;
}

Setpoint recovery_setpoint(const Vec3& perch_pose, const Vec3& approach_normal, double offset) {
  Setpoint sp;
  sp.position = perch_pose + offset * approach_normal;
  sp.yaw = heading_yaw(-approach_normal);
  return sp;
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path, double rate) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "t,px,py,pz,vx,vy,vz\n";
  out.precision(9);
  const auto steps = static_cast<long>(std::ceil(traj.duration * rate));
  for (long k = 0; k <= steps; ++k) {
    const double t = std::min(traj.duration, static_cast<double>(k) / rate);
    const Setpoint sp = sample(traj, t);
    out << t << ',' << sp.position.x() << ',' << sp.position.y() << ',' << sp.position.z() << ','
        << sp.velocity.x() << ',' << sp.velocity.y() << ',' << sp.velocity.z() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace perchsim::planner
