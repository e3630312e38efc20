#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "perchsim/autonomy/fsm.hpp"
#include "perchsim/control/control.hpp"
#include "perchsim/gripper/gripper.hpp"
#include "perchsim/perception/perception.hpp"
#include "perchsim/planner/planner.hpp"
#include "perchsim/sim/types.hpp"

namespace perchsim::harness {

struct StartPose {
  Vec3 position{7.5, 3.0, 1.5};
  double yaw = 0.0;               // rad
  double position_jitter = 0.05;  // m, per-axis Gaussian sigma drawn from the scenario stream
  double yaw_jitter = 0.02;       // rad
};

/// Serializable camera description; the occlusion mask is rebuilt from rectangles.
struct CameraSpec {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double depth_min = 0.3;
  double depth_max = 3.0;
  Vec3 mount_offset{0.10, 0.0, 0.05};  // body frame
  Quat mount_rotation = Quat::Identity();
  std::vector<perception::PixelRect> occlusion{{240, 400, 399, 479}};

  perception::CameraModel make() const;
};

struct SensingConfig {
  double search_frame_rate = 5.0;      // Hz, frames while searching
  double track_frame_rate = 2.0;       // Hz, frames while flying to the perch
  double track_freeze_distance = 1.0;  // m from staging; tracking stops inside it
  double depth_noise_rel = 0.0;
};

struct ScenarioConfig {
  std::string name = "default";
  Vec3 arena{16.0, 6.0, 3.0};  // m, x-y-z extent from the origin
  sim::TreeModel tree;
  StartPose start;
  sim::SimConfig sim;
  CameraSpec camera;
  perception::DetectorConfig detector;
  perception::TrackerConfig tracker;
  SensingConfig sensing;
  planner::PlannerConfig planner;
  control::GainSet gains;
  autonomy::FsmConfig fsm;
  gripper::GripperParams gripper;
  gripper::GraspModel grasp;
  std::uint64_t seed = 1;
  double timeout = 60.0;  // s, simulated

  /// Throws Error(ConfigError) naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical JSON dump, as 16 lowercase hex digits.
std::string scenario_hash(const ScenarioConfig& cfg);

}  // namespace perchsim::harness
