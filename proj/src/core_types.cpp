#include "perchsim/core/types.hpp"

#include <cmath>

namespace perchsim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidCommand: return "InvalidCommand";
    case ErrorCode::EmptyFrame: return "EmptyFrame";
    case ErrorCode::DepthOutOfRange: return "DepthOutOfRange";
    case ErrorCode::TrackLost: return "TrackLost";
    case ErrorCode::DegenerateTrajectory: return "DegenerateTrajectory";
    case ErrorCode::InfeasibleLimits: return "InfeasibleLimits";
    case ErrorCode::NotTriggered: return "NotTriggered";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::IllegalEvent: return "IllegalEvent";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ProtocolError: return "ProtocolError";
  }
  return "Unknown";
}

Rng make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffULL),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double heading_yaw(const Vec3& direction) { return std::atan2(direction.y(), direction.x()); }

Quat attitude_from_z_and_yaw(const Vec3& body_z, double yaw) {
  const Vec3 z = body_z.normalized();
  const Vec3 heading(std::cos(yaw), std::sin(yaw), 0.0);
  Vec3 y = z.cross(heading);
  if (y.norm() < 1e-9) {
    // Thrust axis parallel to the heading; pick any perpendicular.
    y = z.unitOrthogonal();
  }
  y.normalize();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Quat q(r);
  q.normalize();
  return q;
}

}  // namespace perchsim
