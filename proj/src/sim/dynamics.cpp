#include "perchsim/sim/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "perchsim/sim/geometry.hpp"

namespace perchsim::sim {
namespace {

constexpr int kPivotIterations = 8;

WorldState advance_clock(WorldState next, const SimConfig& cfg) {
  next.tick += 1;
  next.time = static_cast<double>(next.tick) / cfg.vehicle.physics_rate;
  return next;
}

void step_free_flight(WorldState& w, const control::ControlCommand& cmd, double dt, const SimConfig& cfg) {
  VehicleState& v = w.vehicle;
  const Vec3 thrust_accel = (cmd.collective_thrust / cfg.vehicle.mass) * v.body_z();
  const Vec3 accel = cfg.constants.gravity() + thrust_accel;

  // Constant acceleration over the step is integrated exactly.
  v.position += v.velocity * dt + 0.5 * accel * dt * dt;
  v.velocity += accel * dt;

  // First-order relaxation of attitude toward the command.
  const double alpha = 1.0 - std::exp(-dt / cfg.vehicle.attitude_time_constant);
  Quat target = cmd.attitude_command.normalized();
  if (v.attitude.dot(target) < 0.0) target.coeffs() *= -1.0;
  const Quat next = v.attitude.slerp(alpha, target).normalized();
  const Eigen::AngleAxisd delta(next * v.attitude.conjugate());
  v.angular_velocity = delta.axis() * (delta.angle() / dt);
  if (!v.angular_velocity.allFinite()) v.angular_velocity.setZero();
  v.attitude = next;

  w.specific_force_world = thrust_accel;
  w.applied_thrust = cmd.collective_thrust;

  if (v.position.z() < 0.0) {
    v.position.z() = 0.0;
    v.velocity.setZero();
    v.angular_velocity.setZero();
    w.phase = phase::Grounded{};
    w.specific_force_world = -cfg.constants.gravity();
  }
}

void step_free_fall(WorldState& w, double dt, const SimConfig& cfg) {
  VehicleState& v = w.vehicle;
  const Vec3 accel = cfg.constants.gravity();
  v.position += v.velocity * dt + 0.5 * accel * dt * dt;
  v.velocity += accel * dt;
  v.angular_velocity.setZero();
  w.specific_force_world.setZero();
  w.applied_thrust = 0.0;
  if (v.position.z() < 0.0) {
    v.position.z() = 0.0;
    v.velocity.setZero();
    w.phase = phase::Grounded{};
    w.specific_force_world = -cfg.constants.gravity();
  }
}

/// Potential energy of the CoM relative to the pivot height.
double pivot_potential(double theta, double mass, double arm, double g) {
  return -mass * g * arm * std::sin(theta);
}

double pivot_potential_slope(double theta, double mass, double arm, double g) {
  return -mass * g * arm * std::cos(theta);
}

/// Unconstrained angular acceleration of the pivot pendulum.
double pivot_accel(double theta, double rate, double thrust, double mass, const PivotParams& p, double g) {
  const double inertia = p.inertia_about_pivot(mass);
  const double torque = mass * g * p.arm_length * std::cos(theta) - thrust * p.arm_length - p.damping * rate;
  return torque / inertia;
}

void step_pivot(WorldState& w, phase::PerchedPivot& pv, const control::ControlCommand& cmd, double dt,
                const SimConfig& cfg) {
  const double m = cfg.vehicle.mass;
  const double g = cfg.constants.g;
  const PivotParams& p = cfg.pivot;
  const double inertia = p.inertia_about_pivot(m);
  const double thrust_torque = -cmd.collective_thrust * p.arm_length;

  // Discrete-gradient midpoint step: with zero thrust the energy change per
  // step is exactly -damping * dt * w^2.
  const double theta0 = pv.pitch_angle;
  const double omega0 = pv.pitch_rate;
  double mid_rate = omega0;
  for (int i = 0; i < kPivotIterations; ++i) {
    const double theta1 = theta0 + dt * mid_rate;
    const double dtheta = theta1 - theta0;
    const double slope = std::abs(dtheta) > 1e-12
                             ? (pivot_potential(theta1, m, p.arm_length, g) -
                                pivot_potential(theta0, m, p.arm_length, g)) /
                                   dtheta
                             : pivot_potential_slope(0.5 * (theta0 + theta1), m, p.arm_length, g);
    mid_rate = (2.0 * inertia * omega0 / dt - slope + thrust_torque) / (2.0 * inertia / dt + p.damping);
  }
  double theta1 = theta0 + dt * mid_rate;
  double omega1 = 2.0 * mid_rate - omega0;

  bool at_stop = false;
  bool at_level = false;
  if (theta1 >= pv.stop_angle) {
    theta1 = pv.stop_angle;
    omega1 = std::min(omega1, 0.0);
    at_stop = true;
  } else if (theta1 <= 0.0) {
    theta1 = 0.0;
    omega1 = std::max(omega1, 0.0);
    at_level = true;
  }
  pv.pitch_angle = theta1;
  pv.pitch_rate = omega1;

  double alpha = pivot_accel(theta1, omega1, cmd.collective_thrust, m, p, g);
  if ((at_stop && alpha > 0.0) || (at_level && alpha < 0.0)) alpha = 0.0;

  const VehicleState next = pivot_vehicle_state(pv, p);
  // CoM acceleration along the arm circle; the contact impulse at the stops
  // is not seen by the accelerometer.
  const Vec3& h = pv.outward;
  const Vec3 u = kWorldUp;
  const double s = std::sin(theta1);
  const double c = std::cos(theta1);
  const Vec3 tangent = p.arm_length * (-h * s - u * c);
  const Vec3 normal = p.arm_length * (-h * c + u * s);
  const Vec3 com_accel = tangent * alpha + normal * omega1 * omega1;

  w.vehicle = next;
  w.specific_force_world = com_accel - cfg.constants.gravity();
  w.applied_thrust = cmd.collective_thrust;
}

}  // namespace

VehicleState pivot_vehicle_state(const phase::PerchedPivot& pv, const PivotParams& params) {
  const Vec3& h = pv.outward;
  const Vec3 u = kWorldUp;
  const double s = std::sin(pv.pitch_angle);
  const double c = std::cos(pv.pitch_angle);
  VehicleState v;
  v.position = pv.pivot_point + params.arm_length * (h * c - u * s);
  v.velocity = params.arm_length * (-h * s - u * c) * pv.pitch_rate;
  const Vec3 bx = -h * c + u * s;
  const Vec3 bz = u * c + h * s;
  const Vec3 by = bz.cross(bx);
  Mat3 r;
  r.col(0) = bx;
  r.col(1) = by;
  r.col(2) = bz;
  v.attitude = Quat(r).normalized();
  v.angular_velocity = pv.pivot_axis * pv.pitch_rate;
  return v;
}

double pivot_energy(const phase::PerchedPivot& pv, double mass, const PivotParams& params,
                    const PhysicalConstants& constants) {
  const double inertia = params.inertia_about_pivot(mass);
  return 0.5 * inertia * pv.pitch_rate * pv.pitch_rate +
         pivot_potential(pv.pitch_angle, mass, params.arm_length, constants.g);
}

WorldState step_dynamics(const WorldState& world, const control::ControlCommand& command, double dt,
                         const SimConfig& cfg) {
  if (!std::isfinite(command.collective_thrust) || !command.attitude_command.coeffs().allFinite() ||
      command.attitude_command.norm() < 1e-9) {
    throw Error(ErrorCode::InvalidCommand, "non-finite control command");
  }
  if (command.collective_thrust < 0.0 || command.collective_thrust > cfg.vehicle.max_thrust) {
    throw Error(ErrorCode::InvalidCommand,
                "thrust " + std::to_string(command.collective_thrust) + " N outside [0, max_thrust]");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::InvalidCommand, "non-positive time step");
  }

  WorldState next = world;
  switch (kind(next.phase)) {
    case PhaseKind::FreeFlight:
      step_free_flight(next, command, dt, cfg);
      break;
    case PhaseKind::PerchedPivot:
      step_pivot(next, std::get<phase::PerchedPivot>(next.phase), command, dt, cfg);
      break;
    case PhaseKind::FreeFall:
      step_free_fall(next, dt, cfg);
      break;
    case PhaseKind::Grounded:
      next.specific_force_world = -cfg.constants.gravity();
      next.applied_thrust = 0.0;
      break;
  }
  return advance_clock(std::move(next), cfg);
}

ImuSample read_imu(const WorldState& world, Rng& rng, const SensorParams& sensors) {
  ImuSample sample;
  sample.timestamp = world.time;
  sample.specific_force = world.vehicle.attitude.conjugate() * world.specific_force_world;
  if (sensors.imu_noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sensors.imu_noise_sigma);
    for (int i = 0; i < 3; ++i) sample.specific_force[i] += noise(rng);
  }
  return sample;
}

Vec3 mount_point(const VehicleState& vehicle, const Vec3& body_offset) {
  return vehicle.position + vehicle.attitude * body_offset;
}

TofSample read_tof(const WorldState& world, const SensorParams& sensors) {
  TofSample sample;
  sample.timestamp = world.time;
  const Ray ray{mount_point(world.vehicle, sensors.tof_offset), world.vehicle.body_x()};
  if (const auto hit = intersect_tree(ray, world.tree)) {
    sample.range = *hit;
    sample.valid = *hit >= sensors.tof_min_range && *hit <= sensors.tof_max_range;
  }
  return sample;
}

WorldState engage_pivot(const WorldState& world, const Vec3& outward, double pivot_limit, const SimConfig& cfg) {
  WorldState next = world;
  phase::PerchedPivot pv;
  pv.outward = horizontal(outward).normalized();
  pv.pivot_axis = kWorldUp.cross(pv.outward);
  pv.pivot_point = world.vehicle.position - cfg.pivot.arm_length * pv.outward;
  pv.pitch_angle = 0.0;
  // Only the velocity component along the arm circle survives the grasp.
  const Vec3 tangent = -cfg.pivot.arm_length * kWorldUp;
  pv.pitch_rate = std::max(0.0, world.vehicle.velocity.dot(tangent) / tangent.squaredNorm());
  pv.stop_angle = std::min(cfg.pivot.brace_angle, pivot_limit);
  next.vehicle = pivot_vehicle_state(pv, cfg.pivot);
  next.phase = pv;
  return next;
}

WorldState release_to_free_fall(const WorldState& world) {
  WorldState next = world;
  next.vehicle.angular_velocity.setZero();
  next.phase = phase::FreeFall{};
  return next;
}

WorldState resume_free_flight(const WorldState& world) {
  WorldState next = world;
  if (kind(next.phase) == PhaseKind::FreeFall) next.phase = phase::FreeFlight{};
  return next;
}

}  // namespace perchsim::sim
