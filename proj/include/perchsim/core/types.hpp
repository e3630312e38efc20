#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

namespace perchsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// World frame is z-up; gravity acts along -z.
inline const Vec3 kWorldUp = Vec3::UnitZ();

enum class ErrorCode {
  InvalidCommand,
  EmptyFrame,
  DepthOutOfRange,
  TrackLost,
  DegenerateTrajectory,
  InfeasibleLimits,
  NotTriggered,
  IllegalTransition,
  IllegalEvent,
  ConfigError,
  IoError,
  ProtocolError,
};

const char* to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Deterministic noise source. One engine per consumer stream so that, for
/// example, the number of IMU draws never perturbs the grasp outcome.
using Rng = std::mt19937_64;

enum class RngStream : std::uint64_t {
  Scenario = 1,
  Imu = 2,
  Depth = 3,
  Grasp = 4,
};

Rng make_rng(std::uint64_t seed, RngStream stream);

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// Horizontal component of v (projection onto the world x-y plane).
inline Vec3 horizontal(const Vec3& v) { return {v.x(), v.y(), 0.0}; }

/// Yaw of a horizontal heading vector.
double heading_yaw(const Vec3& direction);

/// Attitude with body z along `body_z` and body x as close as possible to `yaw`.
Quat attitude_from_z_and_yaw(const Vec3& body_z, double yaw);

}  // namespace perchsim
