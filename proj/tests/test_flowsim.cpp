#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dbafusion/flowsim.hpp"
#include "dbafusion/simulation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dbaf;
using testutil::code_of;

namespace {

Intrinsics medium_camera() {
  Intrinsics K;
  K.fx = K.fy = 128.0;
  K.cx = 128.0;
  K.cy = 96.0;
  K.width = 256;
  K.height = 192;
  return K;
}

// Two frames over a plane two meters ahead, second moved sideways.
SyntheticScene plane_scene(const PixelGrid& grid, double shift, FlowNoise noise = {}) {
  SyntheticScene s;
  s.noise = noise;
  s.poses[0] = Transform();
  s.poses[1] = Transform(Mat3::Identity(), Vec3(shift, 0.0, 0.0));
  s.inv_depth[0] = Eigen::VectorXd::Constant(grid.size(), 0.5);
  s.inv_depth[1] = Eigen::VectorXd::Constant(grid.size(), 0.5);
  return s;
}

// Camera at height h looking straight down.
Transform nadir_camera(double h) {
  Mat3 R_wc;
  R_wc << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  return Transform(R_wc, Vec3(0, 0, h)).inverse();
}

}  // namespace

TEST(Flowsim, ExactFlowMatchesIndependentProjection) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  oracle::Rng rng(31);
  SyntheticScene s;
  s.poses[3] = rng.transform(0.3, 1.0);
  s.poses[4] = rng.transform(0.05, 0.1) * s.poses[3];
  s.inv_depth[3] = Eigen::VectorXd::NullaryExpr(grid.size(), [&] { return rng.uniform(0.2, 0.5); });
  const FlowMeasurement m = synthetic_flow({3, 4}, s, grid, K, 9);
  int valid = 0;
  for (int p = 0; p < grid.size(); ++p) {
    if (!m.valid[p]) {
      EXPECT_EQ(m.weight[2 * p], 0.0);
      continue;
    }
    ++valid;
    const auto o = oracle::project_pixel(grid.coords.col(p), s.inv_depth[3][p], s.poses[3],
                                         s.poses[4], K);
    EXPECT_LT((m.target.segment<2>(2 * p) - o.uv).norm(), 1e-9);
    EXPECT_EQ(m.weight[2 * p], 1.0 / (kNoiselessSigma * kNoiselessSigma));
  }
  EXPECT_GT(valid, grid.size() / 2);
}

TEST(Flowsim, NoiseIsDeterministicPerEdgeWithRequestedSigma) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  const SyntheticScene exact = plane_scene(grid, 0.05);
  const SyntheticScene noisy = plane_scene(grid, 0.05, {0.5, 0.0, 0.0});
  const FlowMeasurement clean = synthetic_flow({0, 1}, exact, grid, K, 5);
  const FlowMeasurement a = synthetic_flow({0, 1}, noisy, grid, K, 5);
  const FlowMeasurement b = synthetic_flow({0, 1}, noisy, grid, K, 5);
  const FlowMeasurement c = synthetic_flow({0, 1}, noisy, grid, K, 6);
  EXPECT_EQ((a.target - b.target).norm(), 0.0);
  EXPECT_GT((a.target - c.target).norm(), 1.0);

  double sum2 = 0.0;
  int count = 0;
  for (int p = 0; p < grid.size(); ++p) {
    if (!a.valid[p]) continue;
    sum2 += (a.target.segment<2>(2 * p) - clean.target.segment<2>(2 * p)).squaredNorm();
    count += 2;
    EXPECT_DOUBLE_EQ(a.weight[2 * p], 4.0);
  }
  // 1500 draws: the sample deviation is within 7% of 0.5 with overwhelming probability.
  EXPECT_NEAR(std::sqrt(sum2 / count), 0.5, 0.035);
}

TEST(Flowsim, DynamicPixelsGetOutlierFlowAndNegligibleWeight) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  const SyntheticScene exact = plane_scene(grid, 0.0);
  const SyntheticScene dyn = plane_scene(grid, 0.0, {0.0, 0.2, 0.0});
  const FlowMeasurement clean = synthetic_flow({0, 1}, exact, grid, K, 2);
  const FlowMeasurement m = synthetic_flow({0, 1}, dyn, grid, K, 2);
  int flagged = 0;
  for (int p = 0; p < grid.size(); ++p) {
    if (m.weight[2 * p] == kDynamicWeight) {
      ++flagged;
      const double d = (m.target.segment<2>(2 * p) - clean.target.segment<2>(2 * p)).norm();
      EXPECT_GE(d, 20.0 - 1e-9);
      EXPECT_LE(d, 40.0 + 1e-9);
    }
  }
  EXPECT_EQ(flagged, static_cast<int>(std::floor(0.2 * grid.size())));
}

TEST(Flowsim, BorderTaperLowersWeightsNearTheEdge) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  const SyntheticScene s = plane_scene(grid, 0.0, {0.0, 0.0, 20.0});
  const FlowMeasurement m = synthetic_flow({0, 1}, s, grid, K, 1);
  const int corner = grid.index(0, 0);
  const int center = grid.index(grid.rows / 2, grid.cols / 2);
  EXPECT_DOUBLE_EQ(m.weight[2 * center], 1.0);
  EXPECT_LT(m.weight[2 * corner], 0.5);
  EXPECT_GE(m.weight[2 * corner], 0.1);
}

TEST(Flowsim, InvalidNoiseAndMissingFramesThrow) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  SyntheticScene s = plane_scene(grid, 0.0, {-1.0, 0.0, 0.0});
  EXPECT_EQ(code_of([&] { synthetic_flow({0, 1}, s, grid, K, 1); }), Errc::InvalidArgument);
  s.noise = {};
  EXPECT_EQ(code_of([&] { synthetic_flow({0, 7}, s, grid, K, 1); }), Errc::InvalidArgument);
}

TEST(Flowsim, MeanDisparityOfSidewaysMotionIsFocalTimesBaselineOverDepth) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  const SyntheticScene s = plane_scene(grid, 0.1);
  const DepthMap d{0, s.inv_depth.at(0)};
  // 128 px * 0.1 m / 2 m.
  EXPECT_NEAR(mean_disparity(s.poses.at(0), s.poses.at(1), d, grid, K), 6.4, 1e-9);
  const FlowMeasurement m = synthetic_flow({0, 1}, s, grid, K, 1);
  EXPECT_NEAR(flow_magnitude(m, grid), 6.4, 1e-9);
  // A baseline that pushes everything out of view is not co-visible.
  const Transform far(Mat3::Identity(), Vec3(10.0, 0.0, 0.0));
  EXPECT_EQ(mean_disparity(Transform(), far, d, grid, K), kNotCovisible);
}

TEST(Flowsim, ProviderIgnoresTheEstimates) {
  const Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  const SyntheticScene s = plane_scene(grid, 0.1, {0.3, 0.0, 0.0});
  const SyntheticFlowProvider provider(s, grid, K, 4, 17);
  EXPECT_EQ(provider.max_edges_per_call(), 17);
  const DepthMap junk{0, Eigen::VectorXd::Constant(grid.size(), 3.0)};
  const FlowMeasurement a =
      provider.flow({0, 1}, Transform(), Transform(Mat3::Identity(), Vec3(1, 2, 3)), junk);
  const FlowMeasurement b = synthetic_flow({0, 1}, s, grid, K, 4);
  EXPECT_EQ((a.target - b.target).norm(), 0.0);
}

TEST(Simulation, NadirDepthOverFlatTerrainIsTheHeight) {
  Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  Terrain flat;
  flat.amplitude = 0.0;
  flat.base = 1.0;
  const Eigen::VectorXd lambda = render_inv_depth(flat, {}, 0.0, nadir_camera(6.0), grid, K);
  // Depth along the optical axis is constant for a fronto-parallel plane.
  for (int p = 0; p < grid.size(); ++p) EXPECT_NEAR(lambda[p], 1.0 / 5.0, 1e-9);
}

TEST(Simulation, SpheresOccludeAndAreFlaggedDynamic) {
  Intrinsics K = medium_camera();
  const PixelGrid grid = PixelGrid::make(K);
  Terrain flat;
  flat.amplitude = 0.0;
  MovingSphere ball{Vec3(-1.0, 0.0, 2.0), Vec3(1.0, 0.0, 0.0), 0.5};
  ValidMask dyn;
  const Eigen::VectorXd lambda =
      render_inv_depth(flat, std::span(&ball, 1), 1.0, nadir_camera(6.0), grid, K, &dyn);
  // At t = 1 the sphere sits under the camera; the top is 3.5 m below it.
  const int c = grid.index(grid.rows / 2, grid.cols / 2);
  EXPECT_EQ(dyn[c], 1);
  const Vec2 u = grid.coords.col(c);
  const Vec3 ray((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0);
  const auto hit = ball.intersect(Vec3(0, 0, 6), Vec3(ray.x(), -ray.y(), -1).normalized(), 1.0);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(lambda[c], ray.norm() / *hit, 1e-9);
  EXPECT_NEAR(*ball.intersect(Vec3(0, 0, 6), Vec3(0, 0, -1), 1.0), 3.5, 1e-12);
  EXPECT_EQ(dyn[grid.index(0, 0)], 0);
  EXPECT_NEAR(lambda[grid.index(0, 0)], 1.0 / 6.0, 1e-9);
}

TEST(Simulation, TerrainRayHitsTheSurface) {
  const Terrain terrain;
  oracle::Rng rng(32);
  for (int k = 0; k < 20; ++k) {
    const Vec3 o(rng.uniform(-20, 20), rng.uniform(-20, 20), 5.0);
    const Vec3 d = Vec3(rng.normal(0.3), rng.normal(0.3), -1.0).normalized();
    const auto s = terrain.intersect(o, d);
    ASSERT_TRUE(s);
    const Vec3 p = o + *s * d;
    EXPECT_NEAR(p.z(), terrain.height(p.x(), p.y()), 1e-9);
  }
  EXPECT_FALSE(terrain.intersect(Vec3(0, 0, 5), Vec3(0, 0, 1)));
}

TEST(Simulation, MotionNamesRoundTrip) {
  for (Motion m : {Motion::Circle, Motion::Figure8, Motion::StraightTurns, Motion::Stationary,
                   Motion::ConstantVelocity}) {
    EXPECT_EQ(parse_motion(to_string(m)), m);
  }
  EXPECT_EQ(code_of([] { parse_motion("spiral"); }), Errc::InvalidArgument);
}

TEST(Simulation, StationarySensorReadsGravityReaction) {
  SimConfig cfg;
  cfg.motion.kind = Motion::Stationary;
  cfg.duration = 2.0;
  cfg.gyro_bias = Vec3(0.01, 0.0, 0.0);
  const SimData d = simulate(cfg);
  EXPECT_EQ(d.imu.size(), 401u);
  EXPECT_EQ(d.frame_times.size(), 11u);
  for (const auto& s : d.imu_clean) {
    EXPECT_LT((s.accel - Vec3(0, 0, kGravityNorm)).norm(), 1e-6);
    EXPECT_LT(s.gyro.norm(), 1e-9);
  }
  EXPECT_LT((d.imu[7].gyro - d.imu_clean[7].gyro - cfg.gyro_bias).norm(), 1e-15);
  EXPECT_LT((d.frame_truth.back().T.translation() - Vec3(0, 0, cfg.motion.altitude)).norm(), 1e-6);
}

TEST(Simulation, IntegratedTruthFollowsTheReferencePath) {
  SimConfig cfg;
  cfg.duration = 20.0;
  const SimData d = simulate(cfg);
  for (std::size_t f = 0; f < d.frame_truth.size(); f += 10) {
    const Transform ref = reference_pose(cfg.motion, d.frame_times[f]);
    EXPECT_LT((d.frame_truth[f].T.translation() - ref.translation()).norm(), 0.02) << f;
    EXPECT_LT(oracle::angle_between(d.frame_truth[f].T.rotation_matrix(), ref.rotation_matrix()),
              1e-3);
  }
}

TEST(Simulation, GnssAndWheelFollowTheirModels) {
  SimConfig cfg;
  cfg.duration = 10.0;
  const SimData d = simulate(cfg);
  EXPECT_EQ(d.gnss.size(), 11u);
  EXPECT_EQ(d.wheel.size(), 11u);
  for (const auto& fix : d.gnss) {
    const auto f = static_cast<std::size_t>(std::llround(fix.t * cfg.frame_rate));
    const NavState& s = d.frame_truth[f];
    const Vec3 p_w = s.T.translation() + s.T.rotation_matrix() * cfg.gnss_lever;
    const Vec3 expect = rot_z(cfg.nav_yaw) * p_w + cfg.nav_translation;
    EXPECT_LT((fix.p - expect).norm(), 1e-12);
  }
  for (const auto& ws : d.wheel) {
    const auto f = static_cast<std::size_t>(std::llround(ws.t * cfg.frame_rate));
    const NavState& s = d.frame_truth[f];
    const Vec3 w = d.imu_clean[d.frame_imu_index[f]].gyro;
    const Vec3 vb = s.T.rotation_matrix().transpose() * s.v + w.cross(cfg.wheel_lever);
    EXPECT_NEAR(ws.v, vb.y(), 1e-12);
    EXPECT_GT(ws.v, 1.0);  // driving forward
  }
}

TEST(Simulation, ImuNoiseHasTheConfiguredDensity) {
  SimConfig cfg;
  cfg.duration = 30.0;
  cfg.imu_noise_enabled = true;
  const SimData d = simulate(cfg);
  double sg = 0.0, sa = 0.0;
  for (std::size_t k = 0; k < d.imu.size(); ++k) {
    sg += (d.imu[k].gyro - d.imu_clean[k].gyro).squaredNorm();
    sa += (d.imu[k].accel - d.imu_clean[k].accel).squaredNorm();
  }
  const double n = 3.0 * static_cast<double>(d.imu.size());
  EXPECT_NEAR(std::sqrt(sg / n), cfg.imu_noise.gyro_density * std::sqrt(cfg.imu_rate),
              0.03 * cfg.imu_noise.gyro_density * std::sqrt(cfg.imu_rate));
  EXPECT_NEAR(std::sqrt(sa / n), cfg.imu_noise.accel_density * std::sqrt(cfg.imu_rate),
              0.03 * cfg.imu_noise.accel_density * std::sqrt(cfg.imu_rate));
}

TEST(Simulation, RejectsIncompatibleRates) {
  SimConfig cfg;
  cfg.imu_rate = 199.0;
  EXPECT_EQ(code_of([&] { simulate(cfg); }), Errc::InvalidArgument);
  cfg.imu_rate = 200.0;
  cfg.duration = 0.0;
  EXPECT_EQ(code_of([&] { simulate(cfg); }), Errc::InvalidArgument);
}
