#include "perchsim/perception/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "perchsim/sim/geometry.hpp"

namespace perchsim::perception {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

/// Mount frame (x fwd, y left, z up) <- optical frame (x right, y down, z fwd).
Mat3 mount_from_optical() {
  Mat3 r;
  r.col(0) = Vec3(0.0, -1.0, 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(1.0, 0.0, 0.0);
  return r;
}

bool usable(const DepthImage& img, const CameraModel& cam, int u, int v) {
  return !cam.occluded(u, v) && img.at(u, v) > 0.0;
}

struct ColumnRun {
  int u = 0;
  int v0 = 0;
  int v1 = -1;
  double mean_depth = 0.0;

  int length() const { return v1 - v0 + 1; }
};

struct Stripe {
  std::vector<ColumnRun> runs;
  long pixels = 0;
};

/// Least-squares slope of depth against metric height over the given points.
std::optional<double> depth_height_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) return std::nullopt;
  double mh = 0.0, md = 0.0;
  for (const auto& [h, d] : points) {
    mh += h;
    md += d;
  }
  mh /= static_cast<double>(points.size());
  md /= static_cast<double>(points.size());
  double cov = 0.0, var = 0.0;
  for (const auto& [h, d] : points) {
    cov += (h - mh) * (d - md);
    var += (h - mh) * (h - mh);
  }
  if (var < 1e-12) return std::nullopt;
  return cov / var;
}

double height_up(const CameraModel& cam, int v, double depth) { return -(v - cam.cy) * depth / cam.fy; }

/// Longest upright run of continuous depth in one column.
std::optional<ColumnRun> best_column_run(const DepthImage& img, const CameraModel& cam, const DetectorConfig& cfg,
                                         int u) {
  std::optional<ColumnRun> best;
  auto consider = [&](int v0, int v1) {
    if (v1 - v0 + 1 < cfg.min_stripe_height) return;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(static_cast<std::size_t>(v1 - v0 + 1));
    double sum = 0.0;
    for (int v = v0; v <= v1; ++v) {
      const double d = img.at(u, v);
      pts.emplace_back(height_up(cam, v, d), d);
      sum += d;
    }
    const auto slope = depth_height_slope(pts);
    if (!slope || std::abs(*slope) > cfg.max_structure_slope) return;
    if (!best || v1 - v0 + 1 > best->length()) {
      best = ColumnRun{u, v0, v1, sum / static_cast<double>(v1 - v0 + 1)};
    }
  };

  int start = -1;
  double prev = 0.0;
  for (int v = 0; v < img.height; ++v) {
    if (!usable(img, cam, u, v)) {
      if (start >= 0) consider(start, v - 1);
      start = -1;
      continue;
    }
    const double d = img.at(u, v);
    if (start >= 0 && std::abs(d - prev) > cfg.depth_noise_gate) {
      consider(start, v - 1);
      start = -1;
    }
    if (start < 0) start = v;
    prev = d;
  }
  if (start >= 0) consider(start, img.height - 1);
  return best;
}

bool runs_connect(const ColumnRun& a, const ColumnRun& b, const DetectorConfig& cfg) {
  const bool overlap = a.v0 <= b.v1 && b.v0 <= a.v1;
  return b.u == a.u + 1 && overlap && std::abs(a.mean_depth - b.mean_depth) <= cfg.column_depth_gate;
}

double median(std::vector<double> values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

CameraModel CameraModel::make_default() {
  CameraModel cam;
  cam.body_extrinsic = Eigen::Isometry3d::Identity();
  cam.body_extrinsic.translation() = Vec3(0.10, 0.0, 0.05);
  // Gripper bands and ToF housing occupy the lower centre of the view.
  cam.set_occlusion({PixelRect{240, 400, 399, 479}});
  return cam;
}

void CameraModel::set_occlusion(const std::vector<PixelRect>& rects) {
  occlusion_mask.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  for (const auto& r : rects) {
    for (int v = std::max(0, r.v_min); v <= std::min(height - 1, r.v_max); ++v) {
      for (int u = std::max(0, r.u_min); u <= std::min(width - 1, r.u_max); ++u) {
        occlusion_mask[static_cast<std::size_t>(v) * width + u] = 1;
      }
    }
  }
}

Eigen::Isometry3d CameraModel::world_from_optical(const sim::VehicleState& vehicle) const {
  Eigen::Isometry3d world_from_body = Eigen::Isometry3d::Identity();
  world_from_body.linear() = vehicle.attitude.toRotationMatrix();
  world_from_body.translation() = vehicle.position;
  Eigen::Isometry3d mount_optical = Eigen::Isometry3d::Identity();
  mount_optical.linear() = mount_from_optical();
  return world_from_body * body_extrinsic * mount_optical;
}

std::optional<Vec2> CameraModel::project(const Vec3& world_point, const sim::VehicleState& vehicle) const {
  const Vec3 p = world_from_optical(vehicle).inverse() * world_point;
  if (p.z() <= 0.0) return std::nullopt;
  return Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

void CameraModel::validate() const {
  require(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
  require(width > 0 && height > 0, "image dimensions must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, "principal point must lie inside the image");
  require(depth_min > 0.0 && depth_min < depth_max, "depth window must be ordered");
  require(occlusion_mask.empty() ||
              occlusion_mask.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          "occlusion mask size must match the image");
}

void DetectorConfig::validate() const {
  require(diameter_range[0] > 0.0 && diameter_range[0] < diameter_range[1],
          "diameter_range must be positive and ordered");
  require(overhang_tilt_limit >= 0.0, "overhang_tilt_limit must be non-negative");
  require(min_stripe_height > 1, "min_stripe_height must exceed one pixel");
  require(depth_noise_gate > 0.0 && column_depth_gate > 0.0, "depth gates must be positive");
  require(centroid_window >= 0, "centroid_window must be non-negative");
}

DepthImage render_depth(const CameraModel& camera, const sim::WorldState& world, Rng& rng,
                        const RenderOptions& options) {
  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.timestamp = world.time;
  img.depth.assign(static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height), 0.0);

  const Eigen::Isometry3d pose = camera.world_from_optical(world.vehicle);
  const Mat3 r = pose.linear();
  const Vec3 origin = pose.translation();
  std::normal_distribution<double> noise(0.0, options.depth_noise_rel);

  for (int v = 0; v < camera.height; ++v) {
    const double y = (v - camera.cy) / camera.fy;
    const Vec3 row_dir = r.col(2) + y * r.col(1);
    for (int u = 0; u < camera.width; ++u) {
      if (camera.occluded(u, v)) continue;
      const double x = (u - camera.cx) / camera.fx;
      // Optical z of this direction is 1, so the hit parameter is the depth.
      const sim::Ray ray{origin, row_dir + x * r.col(0)};
      double t = std::numeric_limits<double>::infinity();
      if (const auto hit = sim::intersect_tree(ray, world.tree)) t = *hit;
      if (const auto hit = sim::intersect_ground(ray)) t = std::min(t, *hit);
      if (!std::isfinite(t)) continue;
      if (options.depth_noise_rel > 0.0) t *= 1.0 + noise(rng);
      if (t >= camera.depth_min && t <= camera.depth_max) img.at(u, v) = t;
    }
  }
  return img;
}

double estimate_diameter(double stripe_width_px, double depth, const CameraModel& camera) {
  if (stripe_width_px <= 0.0) return 0.0;
  // Half-width angle of the silhouette; its sine is radius over axis distance,
  // and the axis lies one radius behind the visible surface.
  const double half_angle = std::atan(stripe_width_px / (2.0 * camera.fx));
  const double s = std::sin(half_angle);
  const double radius = depth * s / (1.0 - s);
  return 2.0 * radius;
}

TargetPose pixel_to_pose(const Vec2& centroid_px, double centroid_depth, const CameraModel& camera,
                         const sim::VehicleState& vehicle) {
  if (!(centroid_depth >= camera.depth_min && centroid_depth <= camera.depth_max)) {
    throw Error(ErrorCode::DepthOutOfRange, "centroid depth " + std::to_string(centroid_depth) + " m");
  }
  const Vec3 optical((centroid_px.x() - camera.cx) / camera.fx * centroid_depth,
                     (centroid_px.y() - camera.cy) / camera.fy * centroid_depth, centroid_depth);
  const Eigen::Isometry3d pose = camera.world_from_optical(vehicle);
  TargetPose out;
  out.target_pose = pose * optical;
  Vec3 normal = horizontal(vehicle.position - out.target_pose);
  if (normal.norm() < 1e-9) normal = -horizontal(pose.linear().col(2));
  out.approach_normal = normal.normalized();
  return out;
}

std::optional<PerchCandidate> evaluate_perch_site(const DepthImage& img, const CameraModel& cam,
                                                  const DetectorConfig& cfg, const sim::VehicleState& vehicle) {
  if (img.width != cam.width || img.height != cam.height ||
      img.depth.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) {
    throw Error(ErrorCode::ConfigError, "depth image dimensions do not match the camera");
  }
  bool any_valid = false;
  for (int v = 0; v < img.height && !any_valid; ++v) {
    for (int u = 0; u < img.width; ++u) {
      if (usable(img, cam, u, v)) {
        any_valid = true;
        break;
      }
    }
  }
  if (!any_valid) throw Error(ErrorCode::EmptyFrame, "no valid depth pixels");

  // Column-wise segmentation into vertically contiguous upright runs, then
  // clustering of neighbouring columns into stripes.
  std::vector<Stripe> stripes;
  std::optional<ColumnRun> prev;
  for (int u = 0; u < img.width; ++u) {
    const auto run = best_column_run(img, cam, cfg, u);
    if (!run) {
      prev.reset();
      continue;
    }
    if (!prev || !runs_connect(*prev, *run, cfg)) stripes.emplace_back();
    stripes.back().runs.push_back(*run);
    stripes.back().pixels += run->length();
    prev = run;
  }
  if (stripes.empty()) return std::nullopt;
  const Stripe& stripe =
      *std::max_element(stripes.begin(), stripes.end(),
                        [](const Stripe& a, const Stripe& b) { return a.pixels < b.pixels; });

  PerchCandidate c;
  c.bbox.u_min = stripe.runs.front().u;
  c.bbox.u_max = stripe.runs.back().u;
  c.bbox.v_min = img.height;
  c.bbox.v_max = -1;
  double wsum = 0.0, wu = 0.0, wv = 0.0;
  for (const auto& run : stripe.runs) {
    c.bbox.v_min = std::min(c.bbox.v_min, run.v0);
    c.bbox.v_max = std::max(c.bbox.v_max, run.v1);
    for (int v = run.v0; v <= run.v1; ++v) {
      const double d = img.at(run.u, v);
      const double w = d * d;  // pixel footprint grows with depth squared
      wsum += w;
      wu += w * run.u;
      wv += w * v;
    }
  }
  c.centroid_px = Vec2(wu / wsum, wv / wsum);

  const int uc = static_cast<int>(std::lround(c.centroid_px.x()));
  const int vc = static_cast<int>(std::lround(c.centroid_px.y()));
  auto run_at = [&](int u) -> const ColumnRun* {
    for (const auto& run : stripe.runs) {
      if (run.u == u) return &run;
    }
    return nullptr;
  };

  // Median depth over the centroid neighbourhood, stripe pixels only.
  std::vector<double> window;
  for (int u = uc - cfg.centroid_window; u <= uc + cfg.centroid_window; ++u) {
    const ColumnRun* run = run_at(u);
    if (run == nullptr) continue;
    for (int v = std::max(run->v0, vc - cfg.centroid_window); v <= std::min(run->v1, vc + cfg.centroid_window); ++v) {
      window.push_back(img.at(u, v));
    }
  }
  if (window.empty()) {
    const ColumnRun* nearest = &stripe.runs.front();
    for (const auto& run : stripe.runs) {
      if (std::abs(run.u - uc) < std::abs(nearest->u - uc)) nearest = &run;
    }
    for (int v = nearest->v0; v <= nearest->v1; ++v) window.push_back(img.at(nearest->u, v));
  }
  c.centroid_depth = median(std::move(window));

  // Diameter from the angular extent between the outer pixel edges.
  const double left = std::atan((c.bbox.u_min - 0.5 - cam.cx) / cam.fx);
  const double right = std::atan((c.bbox.u_max + 0.5 - cam.cx) / cam.fx);
  const double centred_width = 2.0 * cam.fx * std::tan(0.5 * (right - left));
  const double ray_scale = std::hypot(1.0, (c.centroid_px.x() - cam.cx) / cam.fx);
  c.diameter_est = estimate_diameter(centred_width, c.centroid_depth * ray_scale, cam);
  c.diameter_ok = c.diameter_est >= cfg.diameter_range[0] && c.diameter_est <= cfg.diameter_range[1];

  // Overhang: depth trend across the top and bottom thirds of the central columns.
  std::vector<std::pair<double, double>> profile;
  for (int u = uc - 2; u <= uc + 2; ++u) {
    const ColumnRun* run = run_at(u);
    if (run == nullptr) continue;
    const int third = run->length() / 3;
    for (int v = run->v0; v <= run->v1; ++v) {
      if (v >= run->v0 + third && v <= run->v1 - third) continue;
      const double d = img.at(u, v);
      profile.emplace_back(height_up(cam, v, d), d);
    }
  }
  const auto slope = depth_height_slope(profile);
  c.tilt = slope ? std::atan(-*slope) : 0.0;
  c.overhang_ok = slope.has_value() && c.tilt <= cfg.overhang_tilt_limit;

  c.texture_ok = cfg.texture_classifier ? cfg.texture_classifier(img, c.bbox) : cfg.texture_stub_pass;

  if (c.centroid_depth >= cam.depth_min && c.centroid_depth <= cam.depth_max) {
    const TargetPose pose = pixel_to_pose(c.centroid_px, c.centroid_depth, cam, vehicle);
    c.target_pose = pose.target_pose;
    c.approach_normal = pose.approach_normal;
  }
  return c;
}

std::optional<PerchCandidate> detect_perch_site(const DepthImage& img, const CameraModel& cam,
                                                const DetectorConfig& cfg, const sim::VehicleState& vehicle) {
  auto candidate = evaluate_perch_site(img, cam, cfg, vehicle);
  if (candidate && candidate->accepted()) return candidate;
  return std::nullopt;
}

PerchCandidate track_candidate(const PerchCandidate& previous, const std::optional<PerchCandidate>& fresh,
                               const TrackerConfig& cfg) {
  if (fresh && (fresh->target_pose - previous.target_pose).norm() <= cfg.gate) {
    PerchCandidate out = *fresh;
    out.target_pose = previous.target_pose + cfg.smoothing * (fresh->target_pose - previous.target_pose);
    const Vec3 n = horizontal(previous.approach_normal +
                              cfg.smoothing * (fresh->approach_normal - previous.approach_normal));
    out.approach_normal = n.norm() > 1e-9 ? n.normalized() : previous.approach_normal;
    out.staleness = 0;
    return out;
  }
  PerchCandidate held = previous;
  held.staleness += 1;
  if (held.staleness > cfg.staleness_limit) {
    throw Error(ErrorCode::TrackLost, std::to_string(held.staleness) + " consecutive misses");
  }
  return held;
}

}  // namespace perchsim::perception
