#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "perchsim/core/types.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::perception {

/// Pixel-aligned rectangle, inclusive bounds.
struct PixelRect {
  int u_min = 0;
  int v_min = 0;
  int u_max = -1;
  int v_max = -1;

  bool contains(int u, int v) const { return u >= u_min && u <= u_max && v >= v_min && v <= v_max; }
  int width() const { return u_max - u_min + 1; }
  int height() const { return v_max - v_min + 1; }
};

/// Pinhole depth camera. Pixel (u, v) integer coordinates name pixel centres.
/// The optical frame is x right, y down, z forward. `body_extrinsic` maps the
/// camera mount frame (x forward, y left, z up, like the body) into the body
/// frame, so the identity extrinsic is a camera at the CoM looking along body x.
struct CameraModel {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double depth_min = 0.3;  // m
  double depth_max = 3.0;  // m
  Eigen::Isometry3d body_extrinsic = Eigen::Isometry3d::Identity();
  /// Row-major, true = occluded by the gripper.
  std::vector<std::uint8_t> occlusion_mask;

  static CameraModel make_default();

  bool occluded(int u, int v) const {
    return !occlusion_mask.empty() && occlusion_mask[static_cast<std::size_t>(v) * width + u] != 0;
  }
  void set_occlusion(const std::vector<PixelRect>& rects);
  /// Camera optical frame -> world, for a vehicle pose.
  Eigen::Isometry3d world_from_optical(const sim::VehicleState& vehicle) const;
  /// Projects a world point; nullopt when behind the camera.
  std::optional<Vec2> project(const Vec3& world_point, const sim::VehicleState& vehicle) const;
  void validate() const;
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // m, row-major, 0 = invalid
  double timestamp = 0.0;

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
};

struct RenderOptions {
  double depth_noise_rel = 0.0;  // sigma of multiplicative Gaussian depth noise
};

/// External bark-texture verdict; receives the frame and the stripe bounding box.
using TextureClassifier = std::function<bool(const DepthImage&, const PixelRect&)>;

struct DetectorConfig {
  std::array<double, 2> diameter_range{0.10, 0.60};  // m
  double overhang_tilt_limit = 5.0 * std::numbers::pi / 180.0;  // rad, lean toward camera
  int min_stripe_height = 40;          // px
  double depth_noise_gate = 0.03;      // m, row-to-row continuity within a column
  double column_depth_gate = 0.25;     // m, column-to-column continuity within a stripe
  double max_structure_slope = 1.0;    // |d depth / d height| for a column run to count as upright
  int centroid_window = 3;             // half-width of the median depth window, px
  bool texture_stub_pass = true;
  TextureClassifier texture_classifier;  // overrides the stub when set
  void validate() const;
};

struct PerchCandidate {
  PixelRect bbox;
  Vec2 centroid_px = Vec2::Zero();
  double centroid_depth = 0.0;  // m
  double diameter_est = 0.0;    // m
  double tilt = 0.0;            // rad, positive = top leans toward the camera
  bool diameter_ok = false;
  bool texture_ok = false;
  bool overhang_ok = false;
  Vec3 target_pose = Vec3::Zero();      // world, trunk surface
  Vec3 approach_normal = Vec3::UnitX(); // horizontal unit, trunk toward free space
  int staleness = 0;                    // consecutive tracking misses

  bool accepted() const { return diameter_ok && texture_ok && overhang_ok; }
};

struct TrackerConfig {
  double gate = 0.3;        // m
  double smoothing = 0.5;   // weight on the fresh measurement
  int staleness_limit = 10;
};

DepthImage render_depth(const CameraModel& camera, const sim::WorldState& world, Rng& rng,
                        const RenderOptions& options = {});

/// Runs every filter and returns the best stripe with its flags set, accepted
/// or not. Throws Error(EmptyFrame) when no pixel is valid.
std::optional<PerchCandidate> evaluate_perch_site(const DepthImage& depth, const CameraModel& camera,
                                                  const DetectorConfig& cfg, const sim::VehicleState& vehicle);

/// Accepted candidates only.
std::optional<PerchCandidate> detect_perch_site(const DepthImage& depth, const CameraModel& camera,
                                                const DetectorConfig& cfg, const sim::VehicleState& vehicle);

/// Metric diameter from the width of a stripe centred on the optical axis.
double estimate_diameter(double stripe_width_px, double depth, const CameraModel& camera);

struct TargetPose {
  Vec3 target_pose;
  Vec3 approach_normal;
};

/// Back-projects an image point at a known depth into the world. Throws
/// Error(DepthOutOfRange) outside the camera's depth window.
TargetPose pixel_to_pose(const Vec2& centroid_px, double centroid_depth, const CameraModel& camera,
                         const sim::VehicleState& vehicle);

/// Gated exponential smoothing of the tracked perch site. Throws
/// Error(TrackLost) once the miss count exceeds the limit.
PerchCandidate track_candidate(const PerchCandidate& previous, const std::optional<PerchCandidate>& fresh,
                               const TrackerConfig& cfg);

}  // namespace perchsim::perception
