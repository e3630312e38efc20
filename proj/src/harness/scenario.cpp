#include "perchsim/harness/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace perchsim::harness {
namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, path + ": " + what);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

/// Reads an object field by field, rejecting anything it was not asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& ex) {
      config_error(path_ + "." + key, ex.what());
    }
  }

  void get(const char* key, Vec3& out) {
    if (!take(key)) return;
    const json& a = j_.at(key);
    if (!a.is_array() || a.size() != 3 || !a[0].is_number() || !a[1].is_number() || !a[2].is_number()) {
      config_error(path_ + "." + key, "expected [x, y, z]");
    }
    out = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  }

  void get(const char* key, std::array<double, 2>& out) {
    if (!take(key)) return;
    const json& a = j_.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
      config_error(path_ + "." + key, "expected [lo, hi]");
    }
    out = {a[0].get<double>(), a[1].get<double>()};
  }

  void object(const char* key, const std::function<void(Reader&)>& fn) {
    if (!take(key)) return;
    Reader sub(j_.at(key), path_ + "." + key);
    fn(sub);
    sub.finish();
  }

  const json* raw(const char* key) {
    if (!take(key)) return nullptr;
    return &j_.at(key);
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) config_error(path_ + "." + item.key(), "unknown field");
    }
  }

 private:
  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json rect_json(const perception::PixelRect& r) { return json::array({r.u_min, r.v_min, r.u_max, r.v_max}); }

perception::PixelRect rect_from(const json& a, const std::string& path) {
  if (!a.is_array() || a.size() != 4) config_error(path, "expected [u_min, v_min, u_max, v_max]");
  for (const auto& x : a) {
    if (!x.is_number_integer()) config_error(path, "pixel bounds must be integers");
  }
  return {a[0].get<int>(), a[1].get<int>(), a[2].get<int>(), a[3].get<int>()};
}

}  // namespace

perception::CameraModel CameraSpec::make() const {
  perception::CameraModel cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.depth_min = depth_min;
  cam.depth_max = depth_max;
  cam.body_extrinsic = Eigen::Isometry3d::Identity();
  cam.body_extrinsic.linear() = mount_rotation.normalized().toRotationMatrix();
  cam.body_extrinsic.translation() = mount_offset;
  if (width > 0 && height > 0) cam.set_occlusion(occlusion);
  return cam;
}

void ScenarioConfig::validate() const {
  require((arena.array() > 0.0).all(), "arena dimensions must be positive");
  tree.validate();
  const Vec3 base = tree.base_point;
  require(base.x() - tree.radius >= 0.0 && base.x() + tree.radius <= arena.x() && base.y() - tree.radius >= 0.0 &&
              base.y() + tree.radius <= arena.y() && base.z() >= 0.0 && base.z() + tree.height <= arena.z() + 1e-9,
          "tree must lie inside the arena");
  require(start.position.z() > 0.0 && (start.position.array() <= arena.array()).all() &&
              (start.position.array() >= 0.0).all(),
          "start position must lie inside the arena");
  require(start.position_jitter >= 0.0 && start.yaw_jitter >= 0.0, "start jitter must be non-negative");
  sim.validate();
  camera.make().validate();
  detector.validate();
  require(tracker.gate > 0.0 && tracker.smoothing > 0.0 && tracker.smoothing <= 1.0 && tracker.staleness_limit >= 0,
          "tracker gate > 0, smoothing in (0, 1], staleness_limit >= 0");
  require(sensing.search_frame_rate > 0.0 && sensing.track_frame_rate > 0.0, "frame rates must be positive");
  require(sensing.track_freeze_distance >= 0.0 && sensing.depth_noise_rel >= 0.0,
          "sensing distances and noise must be non-negative");
  planner.validate();
  gains.validate();
  fsm.validate(sim.constants.g);
  gripper.validate();
  grasp.validate();
  require(timeout > 0.0, "timeout must be positive");
}

nlohmann::json to_json(const ScenarioConfig& c) {
  json occl = json::array();
  for (const auto& r : c.camera.occlusion) occl.push_back(rect_json(r));
  json armed = json::array();
  for (auto s : c.fsm.detector.armed_states) armed.push_back(std::string(autonomy::to_string(s)));
  const Quat& q = c.camera.mount_rotation;

  return json{
      {"name", c.name},
      {"arena", vec3(c.arena)},
      {"tree",
       {{"base_point", vec3(c.tree.base_point)},
        {"axis_direction", vec3(c.tree.axis_direction)},
        {"radius", c.tree.radius},
        {"height", c.tree.height},
        {"bark_soft", c.tree.bark_soft}}},
      {"start",
       {{"position", vec3(c.start.position)},
        {"yaw", c.start.yaw},
        {"position_jitter", c.start.position_jitter},
        {"yaw_jitter", c.start.yaw_jitter}}},
      {"sim",
       {{"g", c.sim.constants.g},
        {"vehicle",
         {{"mass", c.sim.vehicle.mass},
          {"max_thrust", c.sim.vehicle.max_thrust},
          {"attitude_time_constant", c.sim.vehicle.attitude_time_constant},
          {"physics_rate", c.sim.vehicle.physics_rate},
          {"control_rate", c.sim.vehicle.control_rate}}},
        {"pivot",
         {{"arm_length", c.sim.pivot.arm_length},
          {"body_inertia", c.sim.pivot.body_inertia},
          {"damping", c.sim.pivot.damping},
          {"brace_angle", c.sim.pivot.brace_angle}}},
        {"sensors",
         {{"imu_noise_sigma", c.sim.sensors.imu_noise_sigma},
          {"tof_offset", vec3(c.sim.sensors.tof_offset)},
          {"tof_min_range", c.sim.sensors.tof_min_range},
          {"tof_max_range", c.sim.sensors.tof_max_range}}}}},
      {"camera",
       {{"fx", c.camera.fx},
        {"fy", c.camera.fy},
        {"cx", c.camera.cx},
        {"cy", c.camera.cy},
        {"width", c.camera.width},
        {"height", c.camera.height},
        {"depth_min", c.camera.depth_min},
        {"depth_max", c.camera.depth_max},
        {"mount_offset", vec3(c.camera.mount_offset)},
        {"mount_rotation_wxyz", json::array({q.w(), q.x(), q.y(), q.z()})},
        {"occlusion", occl}}},
      {"detector",
       {{"diameter_range", json::array({c.detector.diameter_range[0], c.detector.diameter_range[1]})},
        {"overhang_tilt_limit", c.detector.overhang_tilt_limit},
        {"min_stripe_height", c.detector.min_stripe_height},
        {"depth_noise_gate", c.detector.depth_noise_gate},
        {"column_depth_gate", c.detector.column_depth_gate},
        {"max_structure_slope", c.detector.max_structure_slope},
        {"centroid_window", c.detector.centroid_window},
        {"texture_stub_pass", c.detector.texture_stub_pass}}},
      {"tracker",
       {{"gate", c.tracker.gate}, {"smoothing", c.tracker.smoothing}, {"staleness_limit", c.tracker.staleness_limit}}},
      {"sensing",
       {{"search_frame_rate", c.sensing.search_frame_rate},
        {"track_frame_rate", c.sensing.track_frame_rate},
        {"track_freeze_distance", c.sensing.track_freeze_distance},
        {"depth_noise_rel", c.sensing.depth_noise_rel}}},
      {"planner",
       {{"terminal_speed", c.planner.terminal_speed},
        {"cruise_speed", c.planner.cruise_speed},
        {"v_max", c.planner.v_max},
        {"a_max", c.planner.a_max},
        {"min_duration", c.planner.min_duration},
        {"max_duration", c.planner.max_duration},
        {"inflation", c.planner.inflation},
        {"check_rate", c.planner.check_rate},
        {"replan_threshold", c.planner.replan_threshold}}},
      {"gains",
       {{"kp_pos", vec3(c.gains.kp_pos)},
        {"kd_pos", vec3(c.gains.kd_pos)},
        {"yaw_gain", c.gains.yaw_gain},
        {"max_tilt", c.gains.max_tilt}}},
      {"fsm",
       {{"policy", std::string(autonomy::to_string(c.fsm.policy.kind))},
        {"confirm_delay", c.fsm.policy.delay},
        {"accel_threshold", c.fsm.detector.accel_threshold},
        {"detector_window", c.fsm.detector.window},
        {"actuation_latency", c.fsm.detector.actuation_latency},
        {"armed_states", armed},
        {"gentle_duration", c.fsm.gentle.duration},
        {"gentle_rate", c.fsm.gentle.rate},
        {"gentle_profile", "Linear"},
        {"arrival_tolerance", c.fsm.arrival_tolerance},
        {"staging_standoff", c.fsm.staging_standoff},
        {"creep_speed", c.fsm.creep_speed},
        {"hold_window", c.fsm.hold_window},
        {"disarm_grace", c.fsm.disarm_grace},
        {"recovery_offset", c.fsm.recovery_offset},
        {"safe_hover_radius", c.fsm.safe_hover_radius},
        {"safe_hover_speed", c.fsm.safe_hover_speed},
        {"safe_hover_dwell", c.fsm.safe_hover_dwell},
        {"search_yaw_rate", c.fsm.search_yaw_rate}}},
      {"gripper",
       {{"trigger_distance", c.gripper.trigger_distance},
        {"closure_time", c.gripper.closure_time},
        {"pivot_limit", c.gripper.pivot_limit},
        {"graspable_radius_range",
         json::array({c.gripper.graspable_radius_range[0], c.gripper.graspable_radius_range[1]})}}},
      {"grasp",
       {{"p_mechanical", c.grasp.p_mechanical},
        {"p_hold", c.grasp.p_hold},
        {"spine_sharpness", c.grasp.spine_sharpness},
        {"v_sufficient_max", c.grasp.v_sufficient_max},
        {"slip_window", c.grasp.slip_window}}},
      {"seed", c.seed},
      {"timeout", c.timeout},
  };
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  Reader r(j, "scenario");
  r.get("name", c.name);
  r.get("arena", c.arena);
  r.object("tree", [&](Reader& t) {
    t.get("base_point", c.tree.base_point);
    t.get("axis_direction", c.tree.axis_direction);
    t.get("radius", c.tree.radius);
    t.get("height", c.tree.height);
    t.get("bark_soft", c.tree.bark_soft);
  });
  r.object("start", [&](Reader& s) {
    s.get("position", c.start.position);
    s.get("yaw", c.start.yaw);
    s.get("position_jitter", c.start.position_jitter);
    s.get("yaw_jitter", c.start.yaw_jitter);
  });
  r.object("sim", [&](Reader& s) {
    s.get("g", c.sim.constants.g);
    s.object("vehicle", [&](Reader& v) {
      v.get("mass", c.sim.vehicle.mass);
      v.get("max_thrust", c.sim.vehicle.max_thrust);
      v.get("attitude_time_constant", c.sim.vehicle.attitude_time_constant);
      v.get("physics_rate", c.sim.vehicle.physics_rate);
      v.get("control_rate", c.sim.vehicle.control_rate);
    });
    s.object("pivot", [&](Reader& p) {
      p.get("arm_length", c.sim.pivot.arm_length);
      p.get("body_inertia", c.sim.pivot.body_inertia);
      p.get("damping", c.sim.pivot.damping);
      p.get("brace_angle", c.sim.pivot.brace_angle);
    });
    s.object("sensors", [&](Reader& n) {
      n.get("imu_noise_sigma", c.sim.sensors.imu_noise_sigma);
      n.get("tof_offset", c.sim.sensors.tof_offset);
      n.get("tof_min_range", c.sim.sensors.tof_min_range);
      n.get("tof_max_range", c.sim.sensors.tof_max_range);
    });
  });
  r.object("camera", [&](Reader& k) {
    k.get("fx", c.camera.fx);
    k.get("fy", c.camera.fy);
    k.get("cx", c.camera.cx);
    k.get("cy", c.camera.cy);
    k.get("width", c.camera.width);
    k.get("height", c.camera.height);
    k.get("depth_min", c.camera.depth_min);
    k.get("depth_max", c.camera.depth_max);
    k.get("mount_offset", c.camera.mount_offset);
    if (const json* q = k.raw("mount_rotation_wxyz")) {
      if (!q->is_array() || q->size() != 4) config_error(k.path() + ".mount_rotation_wxyz", "expected [w, x, y, z]");
      c.camera.mount_rotation = Quat((*q)[0].get<double>(), (*q)[1].get<double>(), (*q)[2].get<double>(),
                                     (*q)[3].get<double>());
    }
    if (const json* o = k.raw("occlusion")) {
      if (!o->is_array()) config_error(k.path() + ".occlusion", "expected a list of rectangles");
      c.camera.occlusion.clear();
      for (const auto& rect : *o) c.camera.occlusion.push_back(rect_from(rect, k.path() + ".occlusion"));
    }
  });
  r.object("detector", [&](Reader& d) {
    d.get("diameter_range", c.detector.diameter_range);
    d.get("overhang_tilt_limit", c.detector.overhang_tilt_limit);
    d.get("min_stripe_height", c.detector.min_stripe_height);
    d.get("depth_noise_gate", c.detector.depth_noise_gate);
    d.get("column_depth_gate", c.detector.column_depth_gate);
    d.get("max_structure_slope", c.detector.max_structure_slope);
    d.get("centroid_window", c.detector.centroid_window);
    d.get("texture_stub_pass", c.detector.texture_stub_pass);
  });
  r.object("tracker", [&](Reader& t) {
    t.get("gate", c.tracker.gate);
    t.get("smoothing", c.tracker.smoothing);
    t.get("staleness_limit", c.tracker.staleness_limit);
  });
  r.object("sensing", [&](Reader& s) {
    s.get("search_frame_rate", c.sensing.search_frame_rate);
    s.get("track_frame_rate", c.sensing.track_frame_rate);
    s.get("track_freeze_distance", c.sensing.track_freeze_distance);
    s.get("depth_noise_rel", c.sensing.depth_noise_rel);
  });
  r.object("planner", [&](Reader& p) {
    p.get("terminal_speed", c.planner.terminal_speed);
    p.get("cruise_speed", c.planner.cruise_speed);
    p.get("v_max", c.planner.v_max);
    p.get("a_max", c.planner.a_max);
    p.get("min_duration", c.planner.min_duration);
    p.get("max_duration", c.planner.max_duration);
    p.get("inflation", c.planner.inflation);
    p.get("check_rate", c.planner.check_rate);
    p.get("replan_threshold", c.planner.replan_threshold);
  });
  r.object("gains", [&](Reader& g) {
    g.get("kp_pos", c.gains.kp_pos);
    g.get("kd_pos", c.gains.kd_pos);
    g.get("yaw_gain", c.gains.yaw_gain);
    g.get("max_tilt", c.gains.max_tilt);
  });
  r.object("fsm", [&](Reader& f) {
    std::string policy(autonomy::to_string(c.fsm.policy.kind));
    f.get("policy", policy);
    const auto kind = autonomy::parse_confirm_policy(policy);
    if (!kind) config_error(f.path() + ".policy", "expected Human, AutoAccept or AutoReject");
    c.fsm.policy.kind = *kind;
    f.get("confirm_delay", c.fsm.policy.delay);
    f.get("accel_threshold", c.fsm.detector.accel_threshold);
    f.get("detector_window", c.fsm.detector.window);
    f.get("actuation_latency", c.fsm.detector.actuation_latency);
    if (const json* a = f.raw("armed_states")) {
      if (!a->is_array()) config_error(f.path() + ".armed_states", "expected a list of state names");
      c.fsm.detector.armed_states.clear();
      for (const auto& s : *a) {
        const auto st = s.is_string() ? autonomy::parse_state(s.get<std::string>()) : std::nullopt;
        if (!st) config_error(f.path() + ".armed_states", "unknown state " + s.dump());
        c.fsm.detector.armed_states.push_back(*st);
      }
    }
    f.get("gentle_duration", c.fsm.gentle.duration);
    f.get("gentle_rate", c.fsm.gentle.rate);
    std::string profile = "Linear";
    f.get("gentle_profile", profile);
    if (profile != "Linear") config_error(f.path() + ".gentle_profile", "only Linear is available");
    f.get("arrival_tolerance", c.fsm.arrival_tolerance);
    f.get("staging_standoff", c.fsm.staging_standoff);
    f.get("creep_speed", c.fsm.creep_speed);
    f.get("hold_window", c.fsm.hold_window);
    f.get("disarm_grace", c.fsm.disarm_grace);
    f.get("recovery_offset", c.fsm.recovery_offset);
    f.get("safe_hover_radius", c.fsm.safe_hover_radius);
    f.get("safe_hover_speed", c.fsm.safe_hover_speed);
    f.get("safe_hover_dwell", c.fsm.safe_hover_dwell);
    f.get("search_yaw_rate", c.fsm.search_yaw_rate);
  });
  r.object("gripper", [&](Reader& g) {
    g.get("trigger_distance", c.gripper.trigger_distance);
    g.get("closure_time", c.gripper.closure_time);
    g.get("pivot_limit", c.gripper.pivot_limit);
    g.get("graspable_radius_range", c.gripper.graspable_radius_range);
  });
  r.object("grasp", [&](Reader& g) {
    g.get("p_mechanical", c.grasp.p_mechanical);
    g.get("p_hold", c.grasp.p_hold);
    g.get("spine_sharpness", c.grasp.spine_sharpness);
    g.get("v_sufficient_max", c.grasp.v_sufficient_max);
    g.get("slip_window", c.grasp.slip_window);
  });
  r.get("seed", c.seed);
  r.get("timeout", c.timeout);
  r.finish();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + ex.what());
  }
  ScenarioConfig cfg = scenario_from_json(j);
  cfg.validate();
  return cfg;
}

std::string scenario_hash(const ScenarioConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace perchsim::harness
