#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "perchsim/perception/frame_io.hpp"
#include "perchsim/perception/perception.hpp"
#include "support/gen.hpp"

using namespace perchsim;
using namespace perchsim::perception;

namespace {

constexpr double kDeg = M_PI / 180.0;

/// Vehicle facing +x with the camera `axis_distance` from the trunk axis.
sim::WorldState scene(double axis_distance, const CameraModel& cam, double radius = 0.15) {
  sim::WorldState w;
  w.tree.radius = radius;
  const Vec3 mount = cam.body_extrinsic.translation();
  w.vehicle.position = w.tree.base_point + Vec3(-axis_distance - mount.x(), 0.0, 1.5);
  return w;
}

DepthImage render(const CameraModel& cam, const sim::WorldState& w) {
  Rng rng = make_rng(1, RngStream::Depth);
  return render_depth(cam, w, rng);
}

/// Independent per-pixel oracle: optical ray with unit z, nearest of trunk and ground.
std::optional<double> oracle_depth(const CameraModel& cam, const sim::WorldState& w, int u, int v) {
  const auto pose = cam.world_from_optical(w.vehicle);
  const Vec3 d = pose.linear() * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  const Vec3 o = pose.translation();
  std::optional<double> t;
  if (w.tree.axis_direction == Vec3::UnitZ()) {
    t = testgen::ray_vertical_cylinder(o, d, w.tree.base_point.x(), w.tree.base_point.y(), w.tree.radius,
                                       w.tree.height);
  }
  if (d.z() < 0.0) {
    const double tg = -o.z() / d.z();
    if (!t || tg < *t) t = tg;
  }
  return t;
}

}  // namespace

TEST(Render, PrincipalRayReadsDistanceMinusRadius) {
  auto cam = CameraModel::make_default();
  const auto w = scene(2.0, cam);
  const auto img = render(cam, w);
  EXPECT_NEAR(img.at(320, 240), 2.0 - 0.15, 1e-12);
}

TEST(Render, OccludedPixelsAreInvalid) {
  auto cam = CameraModel::make_default();
  const auto img = render(cam, scene(1.0, cam));
  for (int v = 400; v < 480; ++v) {
    for (int u = 240; u <= 399; ++u) ASSERT_EQ(img.at(u, v), 0.0);
  }
}

TEST(Render, ValidPixelsLieInsideTheDepthWindow) {
  auto cam = CameraModel::make_default();
  const auto img = render(cam, scene(1.2, cam));
  for (double d : img.depth) {
    if (d != 0.0) {
      ASSERT_GE(d, cam.depth_min);
      ASSERT_LE(d, cam.depth_max);
    }
  }
}

TEST(Render, FullFrameMatchesThePerRayOracle) {
  CameraModel cam = CameraModel::make_default();
  cam.occlusion_mask.clear();
  testgen::Gen gen(17);
  for (int trial = 0; trial < 3; ++trial) {
    auto w = scene(gen.uniform(0.8, 2.5), cam);
    w.vehicle.attitude = Quat(Eigen::AngleAxisd(gen.uniform(-0.3, 0.3), Vec3::UnitZ()) *
                              Eigen::AngleAxisd(gen.uniform(-0.2, 0.2), Vec3::UnitY()));
    const auto img = render(cam, w);
    double worst = 0.0;
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        const auto t = oracle_depth(cam, w, u, v);
        const double expect = t && *t >= cam.depth_min && *t <= cam.depth_max ? *t : 0.0;
        worst = std::max(worst, std::abs(img.at(u, v) - expect));
      }
    }
    EXPECT_LE(worst, 1e-9) << trial;
  }
}

TEST(Render, NoiseIsSeededAndReproducible) {
  auto cam = CameraModel::make_default();
  const auto w = scene(2.0, cam);
  Rng a = make_rng(5, RngStream::Depth), b = make_rng(5, RngStream::Depth);
  const auto ia = render_depth(cam, w, a, {0.01});
  const auto ib = render_depth(cam, w, b, {0.01});
  EXPECT_EQ(ia.depth, ib.depth);
  EXPECT_NE(ia.at(320, 240), 2.0 - 0.15);
}

TEST(Detect, NominalTrunkAtTwoMetres) {
  auto cam = CameraModel::make_default();
  const auto w = scene(2.0, cam);
  const auto img = render(cam, w);
  const auto c = detect_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  ASSERT_TRUE(c.has_value());
  EXPECT_TRUE(c->diameter_ok && c->texture_ok && c->overhang_ok);
  EXPECT_NEAR(c->diameter_est, 0.30, 0.03);
  const auto axis_px = cam.project(w.tree.axis_point(c->target_pose.z()), w.vehicle);
  ASSERT_TRUE(axis_px.has_value());
  EXPECT_NEAR(c->centroid_px.x(), axis_px->x(), 2.0);
  // Surface point on the trunk facing the vehicle at the target height.
  const Vec3 axis = w.tree.axis_point(c->target_pose.z());
  const Vec3 truth = axis + w.tree.radius * horizontal(w.vehicle.position - axis).normalized();
  EXPECT_LE((c->target_pose - truth).norm(), 0.05);
  EXPECT_NEAR(c->approach_normal.norm(), 1.0, 1e-12);
  EXPECT_NEAR(c->approach_normal.dot(kWorldUp), 0.0, 1e-6);
  EXPECT_GT(c->approach_normal.dot(-Vec3::UnitX()), 0.999);
}

TEST(Detect, OverhangingTrunkIsRejected) {
  auto cam = CameraModel::make_default();
  auto w = scene(2.0, cam);
  // Top leans 15 deg toward the camera.
  w.tree.axis_direction = Vec3(-std::sin(15 * kDeg), 0.0, std::cos(15 * kDeg));
  w.tree.base_point.x() += 0.4;
  const auto img = render(cam, w);
  const auto c = evaluate_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  ASSERT_TRUE(c.has_value());
  EXPECT_FALSE(c->overhang_ok);
  EXPECT_NEAR(c->tilt, 15 * kDeg, 3 * kDeg);
  EXPECT_FALSE(detect_perch_site(img, cam, DetectorConfig{}, w.vehicle).has_value());
}

TEST(Detect, UprightTrunksPassAtVaryingRange) {
  auto cam = CameraModel::make_default();
  for (double d : {1.0, 1.5, 2.0, 2.5}) {
    const auto w = scene(d, cam);
    const auto c = evaluate_perch_site(render(cam, w), cam, DetectorConfig{}, w.vehicle);
    ASSERT_TRUE(c.has_value()) << d;
    EXPECT_TRUE(c->overhang_ok) << d;
    EXPECT_LE(std::abs(c->tilt), DetectorConfig{}.overhang_tilt_limit) << d;
  }
}

TEST(Detect, GroundOnlySceneHasNoCandidate) {
  auto cam = CameraModel::make_default();
  sim::WorldState w;
  w.tree.base_point = {100, 100, 0};
  w.vehicle.position = {0, 0, 1.0};
  w.vehicle.attitude = Quat(Eigen::AngleAxisd(0.5, Vec3::UnitY()));  // pitched down at the ground
  const auto img = render(cam, w);
  EXPECT_FALSE(detect_perch_site(img, cam, DetectorConfig{}, w.vehicle).has_value());
}

TEST(Detect, EmptyFrameThrows) {
  auto cam = CameraModel::make_default();
  DepthImage img{cam.width, cam.height, std::vector<double>(cam.width * cam.height, 0.0), 0.0};
  try {
    evaluate_perch_site(img, cam, DetectorConfig{}, sim::VehicleState{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyFrame);
  }
}

TEST(Detect, DiameterOutsideRangeIsRejected) {
  auto cam = CameraModel::make_default();
  const auto w = scene(2.0, cam, 0.03);
  const auto c = evaluate_perch_site(render(cam, w), cam, DetectorConfig{}, w.vehicle);
  if (c) {
    EXPECT_FALSE(c->diameter_ok);
  }
  EXPECT_FALSE(detect_perch_site(render(cam, w), cam, DetectorConfig{}, w.vehicle).has_value());
}

TEST(Detect, TextureClassifierOverridesTheStub) {
  auto cam = CameraModel::make_default();
  const auto w = scene(2.0, cam);
  DetectorConfig cfg;
  cfg.texture_classifier = [](const DepthImage&, const PixelRect&) { return false; };
  const auto c = evaluate_perch_site(render(cam, w), cam, cfg, w.vehicle);
  ASSERT_TRUE(c.has_value());
  EXPECT_FALSE(c->texture_ok);
  EXPECT_FALSE(c->accepted());
}

TEST(Detect, FlagsAgreeWithRecomputation) {
  auto cam = CameraModel::make_default();
  testgen::Gen gen(41);
  const DetectorConfig cfg;
  for (int i = 0; i < 12; ++i) {
    auto w = scene(gen.uniform(1.0, 2.5), cam, gen.uniform(0.03, 0.4));
    w.vehicle.attitude = Quat(Eigen::AngleAxisd(gen.uniform(-0.2, 0.2), Vec3::UnitZ()));
    const auto c = evaluate_perch_site(render(cam, w), cam, cfg, w.vehicle);
    if (!c) continue;
    EXPECT_EQ(c->diameter_ok, c->diameter_est >= cfg.diameter_range[0] && c->diameter_est <= cfg.diameter_range[1]);
    EXPECT_EQ(c->overhang_ok, c->tilt <= cfg.overhang_tilt_limit);
    if (c->accepted()) {
      EXPECT_NEAR(c->approach_normal.norm(), 1.0, 1e-12);
      EXPECT_NEAR(c->approach_normal.z(), 0.0, 1e-6);
    }
  }
}

TEST(Detect, OccludedPixelsNeverInfluenceTheResult) {
  auto cam = CameraModel::make_default();
  const auto w = scene(1.2, cam);
  auto img = render(cam, w);
  const auto base = evaluate_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  testgen::Gen gen(4);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      if (cam.occluded(u, v)) img.at(u, v) = gen.uniform(0.3, 3.0);
    }
  }
  const auto perturbed = evaluate_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  ASSERT_EQ(base.has_value(), perturbed.has_value());
  ASSERT_TRUE(base.has_value());
  EXPECT_EQ(base->centroid_px, perturbed->centroid_px);
  EXPECT_EQ(base->diameter_est, perturbed->diameter_est);
  EXPECT_EQ(base->target_pose, perturbed->target_pose);
}

TEST(Detect, IsDeterministic) {
  auto cam = CameraModel::make_default();
  const auto w = scene(1.7, cam);
  const auto img = render(cam, w);
  const auto a = evaluate_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  const auto b = evaluate_perch_site(img, cam, DetectorConfig{}, w.vehicle);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->bbox.u_min, b->bbox.u_min);
  EXPECT_EQ(a->centroid_px, b->centroid_px);
  EXPECT_EQ(a->target_pose, b->target_pose);
}

TEST(Diameter, InvertsARenderedStripe) {
  CameraModel cam = CameraModel::make_default();
  cam.occlusion_mask.clear();
  const auto w = scene(2.0, cam);
  const auto img = render(cam, w);
  int width = 0;
  for (int u = 0; u < cam.width; ++u) width += img.at(u, 240) > 0.0 && img.at(u, 240) < 2.0 ? 1 : 0;
  EXPECT_NEAR(estimate_diameter(width, img.at(320, 240), cam), 0.30, 0.015);
}

TEST(Diameter, ZeroWidthGivesZero) {
  const auto cam = CameraModel::make_default();
  EXPECT_EQ(estimate_diameter(0.0, 2.0, cam), 0.0);
  EXPECT_LT(estimate_diameter(1e-9, 2.0, cam), 1e-10);
}

TEST(Diameter, FocalInvariance) {
  auto cam = CameraModel::make_default();
  auto cam2 = cam;
  cam2.fx *= 2.0;
  testgen::Gen gen(9);
  for (int i = 0; i < 100; ++i) {
    const double w = gen.uniform(1.0, 300.0), d = gen.uniform(0.3, 3.0);
    EXPECT_NEAR(estimate_diameter(2.0 * w, d, cam2), estimate_diameter(w, d, cam), 1e-6);
  }
}

TEST(PixelToPose, PrincipalPointAtTwoMetres) {
  CameraModel cam = CameraModel::make_default();
  cam.body_extrinsic = Eigen::Isometry3d::Identity();
  const sim::VehicleState v;
  const auto p = pixel_to_pose({cam.cx, cam.cy}, 2.0, cam, v);
  EXPECT_LT((p.target_pose - Vec3(2.0, 0.0, 0.0)).norm(), 1e-12);
  EXPECT_LT((p.approach_normal - Vec3(-1, 0, 0)).norm(), 1e-12);
}

TEST(PixelToPose, YawRotatesTheTarget) {
  CameraModel cam = CameraModel::make_default();
  cam.body_extrinsic = Eigen::Isometry3d::Identity();
  sim::VehicleState v;
  v.attitude = Quat(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  const auto p = pixel_to_pose({cam.cx, cam.cy}, 2.0, cam, v);
  EXPECT_LT((p.target_pose - Vec3(0.0, 2.0, 0.0)).norm(), 1e-12);
}

TEST(PixelToPose, ProjectionRoundTrip) {
  const CameraModel cam = CameraModel::make_default();
  testgen::Gen gen(77);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    sim::VehicleState v;
    v.position = gen.box(Vec3(-5, -5, 0.5), Vec3(5, 5, 3));
    v.attitude = Quat(Eigen::AngleAxisd(gen.uniform(-M_PI, M_PI), Vec3::UnitZ()) *
                      Eigen::AngleAxisd(gen.uniform(-0.3, 0.3), Vec3::UnitY()));
    const auto pose = cam.world_from_optical(v);
    const Vec3 optical(gen.uniform(-1, 1), gen.uniform(-0.8, 0.8), gen.uniform(0.5, 2.9));
    const Vec3 world = pose * optical;
    const auto px = cam.project(world, v);
    ASSERT_TRUE(px.has_value());
    const auto back = pixel_to_pose(*px, optical.z(), cam, v);
    ASSERT_LT((back.target_pose - world).norm(), 1e-6);
    ++checked;
  }
  EXPECT_EQ(checked, 500);
}

TEST(PixelToPose, DepthOutsideWindowThrows) {
  const CameraModel cam = CameraModel::make_default();
  try {
    pixel_to_pose({320, 240}, 5.0, cam, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DepthOutOfRange);
  }
}

TEST(Tracker, NearbyFreshIsSmoothed) {
  PerchCandidate prev, fresh;
  prev.target_pose = {1, 0, 1};
  fresh.target_pose = {1.05, 0, 1};
  const auto t = track_candidate(prev, fresh, TrackerConfig{});
  EXPECT_GT(t.target_pose.x(), 1.0);
  EXPECT_LT(t.target_pose.x(), 1.05);
  EXPECT_EQ(t.staleness, 0);
}

TEST(Tracker, SmoothedPoseIsConvex) {
  testgen::Gen gen(12);
  TrackerConfig cfg;
  for (int i = 0; i < 200; ++i) {
    cfg.smoothing = gen.uniform(0.0, 1.0);
    PerchCandidate prev, fresh;
    prev.target_pose = gen.box(Vec3::Constant(-3), Vec3::Constant(3));
    fresh.target_pose = prev.target_pose + 0.29 * gen.unit();
    const auto t = track_candidate(prev, fresh, cfg);
    const double a = (t.target_pose - prev.target_pose).norm();
    const double b = (fresh.target_pose - t.target_pose).norm();
    EXPECT_NEAR(a + b, (fresh.target_pose - prev.target_pose).norm(), 1e-12);
  }
}

TEST(Tracker, SpuriousFreshIsGatedOut) {
  PerchCandidate prev, fresh;
  prev.target_pose = {1, 0, 1};
  fresh.target_pose = {3, 0, 1};
  const auto t = track_candidate(prev, fresh, TrackerConfig{});
  EXPECT_EQ(t.target_pose, prev.target_pose);
  EXPECT_EQ(t.staleness, 1);
}

TEST(Tracker, TooManyMissesLoseTheTrack) {
  TrackerConfig cfg;
  PerchCandidate c;
  for (int i = 0; i < cfg.staleness_limit; ++i) c = track_candidate(c, std::nullopt, cfg);
  EXPECT_EQ(c.staleness, cfg.staleness_limit);
  try {
    track_candidate(c, std::nullopt, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TrackLost);
  }
}

TEST(FrameIo, RoundTripQuantisesToMillimetres) {
  auto cam = CameraModel::make_default();
  const auto img = render(cam, scene(1.5, cam));
  const auto bytes = encode_depth_frame(img);
  ASSERT_EQ(bytes.size(), kDepthFrameHeaderSize + 2u * img.depth.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "PSDEPTH1");
  EXPECT_EQ(bytes[8] | (bytes[9] << 8), 640);
  EXPECT_EQ(bytes[12] | (bytes[13] << 8), 480);
  const auto back = decode_depth_frame(bytes);
  ASSERT_EQ(back.width, img.width);
  ASSERT_EQ(back.height, img.height);
  for (std::size_t i = 0; i < img.depth.size(); ++i) {
    if (img.depth[i] == 0.0) {
      ASSERT_EQ(back.depth[i], 0.0);
    } else {
      ASSERT_NEAR(back.depth[i], img.depth[i], 0.5e-3 + 1e-12);
    }
  }
}

TEST(FrameIo, FileRoundTripAndBadMagic) {
  DepthImage img{3, 2, {0.0, 1.0, 2.5, 0.3, 65.535, 70.0}, 0.0};
  const auto path = std::filesystem::temp_directory_path() / "perchsim_frame_test.depth";
  write_depth_frame(path, img);
  const auto back = read_depth_frame(path);
  EXPECT_EQ(back.depth[1], 1.0);
  EXPECT_EQ(back.depth[4], 65.535);
  EXPECT_EQ(back.depth[5], 65.535);  // saturates
  std::filesystem::remove(path);
  auto bytes = encode_depth_frame(img);
  bytes[0] = 'X';
  EXPECT_THROW(decode_depth_frame(bytes), Error);
  bytes = encode_depth_frame(img);
  bytes.pop_back();
  EXPECT_THROW(decode_depth_frame(bytes), Error);
}

TEST(CameraConfig, ValidationRejectsBadIntrinsics) {
  auto cam = CameraModel::make_default();
  EXPECT_NO_THROW(cam.validate());
  cam.fx = 0.0;
  EXPECT_THROW(cam.validate(), Error);
  cam = CameraModel::make_default();
  cam.cx = 700;
  EXPECT_THROW(cam.validate(), Error);
  cam = CameraModel::make_default();
  cam.depth_max = 0.1;
  EXPECT_THROW(cam.validate(), Error);
  DetectorConfig d;
  d.diameter_range = {0.5, 0.1};
  EXPECT_THROW(d.validate(), Error);
}
