#include <cmath>

#include <gtest/gtest.h>

#include "dbafusion/simulation.hpp"
#include "dbafusion/window.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dbaf;
using testutil::code_of;

TEST(Window, ConfigValidation) {
  WindowConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.window_size = 2;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), Errc::InvalidArgument);
  cfg = WindowConfig{};
  cfg.midrange_offsets = {-15};
  EXPECT_EQ(code_of([&] { cfg.validate(); }), Errc::InvalidArgument);
  cfg = WindowConfig{};
  cfg.init_keyframes = 16;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), Errc::InvalidArgument);
}

TEST(Window, KeyframeThreshold) {
  const WindowConfig cfg;
  EXPECT_TRUE(select_keyframe(2.5, cfg));
  EXPECT_TRUE(select_keyframe(40.0, cfg));
  EXPECT_FALSE(select_keyframe(2.49, cfg));
  EXPECT_FALSE(select_keyframe(0.0, cfg));
}

TEST(Window, GnssAlignmentRecoversHeadingAndOffset) {
  oracle::Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const double yaw = rng.uniform(-3.0, 3.0);
    const Vec3 t = rng.vec3(100.0);
    const Transform T_nw(Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), t);
    const Vec3 lever = rng.vec3(0.5);
    std::vector<Transform> poses;
    std::vector<Vec3> fixes;
    for (int k = 0; k < 10; ++k) {
      poses.push_back(rng.transform(3.0, 20.0));
      fixes.push_back(T_nw * (poses.back() * lever));
    }
    const AlignmentState a = gnss_align(poses, fixes, lever);
    EXPECT_TRUE(a.aligned());
    EXPECT_NEAR(std::remainder(a.yaw - yaw, 2.0 * M_PI), 0.0, 1e-10);
    EXPECT_LT((a.translation - t).norm(), 1e-9);
    // An existing alignment is never replaced.
    EXPECT_EQ(gnss_align(poses, fixes, lever, a).yaw, a.yaw);
  }
}

TEST(Window, GnssAlignmentRejectsDegenerateTracks) {
  const std::vector<Transform> poses(5, Transform(Mat3::Identity(), Vec3(1, 2, 3)));
  const std::vector<Vec3> fixes(5, Vec3(4, 5, 6));
  EXPECT_EQ(code_of([&] { gnss_align(poses, fixes, Vec3::Zero()); }), Errc::DegenerateGeometry);
  EXPECT_EQ(code_of([&] { gnss_align(poses, std::span(fixes).first(3), Vec3::Zero()); }),
            Errc::InvalidArgument);
}

namespace {

struct ShortRun {
  SimConfig sim;
  Intrinsics K;
  SimData data;
  PixelGrid grid;
  SyntheticScene scene;

  explicit ShortRun(double duration) {
    sim.duration = duration;
    sim.gyro_bias = Vec3(0.004, -0.003, 0.002);
    K.fx = K.fy = 128.0;
    K.cx = 128.0;
    K.cy = 96.0;
    K.width = 256;
    K.height = 192;
    data = simulate(sim);
    grid = PixelGrid::make(K);
    scene = make_scene(data, sim, grid, K);
  }

  EstimatorConfig config() const {
    EstimatorConfig ec;
    ec.sensors.T_cb = sim.T_cb;
    ec.sensors.gnss_lever = sim.gnss_lever;
    ec.sensors.wheel_lever = sim.wheel_lever;
    return ec;
  }

  FrameInput frame(std::size_t k) const {
    FrameInput in;
    in.id = static_cast<FrameId>(k);
    in.t = data.frame_times[k];
    const std::size_t i1 = data.frame_imu_index[k];
    const std::size_t i0 = k > 0 ? data.frame_imu_index[k - 1] : i1;
    in.imu.assign(data.imu.begin() + static_cast<std::ptrdiff_t>(i0),
                  data.imu.begin() + static_cast<std::ptrdiff_t>(i1) + 1);
    return in;
  }
};

}  // namespace

TEST(Estimator, TrackingBeforeInitializationThrows) {
  const ShortRun r(2.0);
  const SyntheticFlowProvider provider(r.scene, r.grid, r.K, 1);
  Estimator est(r.config(), provider, r.grid, r.K);
  EXPECT_FALSE(est.initialized());
  EXPECT_EQ(code_of([&] { est.track(r.frame(0)); }), Errc::NotInitialized);
}

TEST(Estimator, NoiseFreeRunFollowsTruth) {
  const ShortRun r(16.0);
  const SyntheticFlowProvider provider(r.scene, r.grid, r.K, 1);
  const EstimatorConfig ec = r.config();
  Estimator est(ec, provider, r.grid, r.K);
  bool init_seen = false;
  for (std::size_t k = 0; k < r.data.frame_times.size(); ++k) {
    const EpochReport rep = est.process_frame(r.frame(k));
    init_seen |= rep.initialized_now;
    EXPECT_LE(rep.window_size, ec.window.window_size);
    EXPECT_LE(rep.active_edges, ec.window.max_active_edges);
  }
  ASSERT_TRUE(init_seen);
  ASSERT_TRUE(est.initialized());

  const InitResult& init = *est.init_result();
  // init.scale is relative to the arbitrary visual gauge; the metric check is
  // the similarity scale between initializer output and truth.
  std::vector<Vec3> init_p, init_true;
  for (const auto& [id, x] : est.init_outputs()) {
    init_p.push_back(x.T.translation());
    init_true.push_back(r.data.frame_truth[static_cast<std::size_t>(id)].T.translation());
  }
  EXPECT_NEAR(oracle::fit_similarity(init_p, init_true, true).scale, 1.0, 0.01);
  EXPECT_LT((init.gyro_bias - r.sim.gyro_bias).norm(), 0.05 * r.sim.gyro_bias.norm());

  // Window states against truth after a rigid fit.
  std::vector<Vec3> est_p, true_p;
  for (StateKey key : est.graph().keys()) {
    est_p.push_back(est.graph().state(key).T.translation());
    true_p.push_back(r.data.frame_truth[static_cast<std::size_t>(key)].T.translation());
  }
  const auto fit = oracle::fit_similarity(est_p, true_p, false);
  double worst = 0.0;
  for (std::size_t i = 0; i < est_p.size(); ++i) {
    worst = std::max(worst, (fit.R * est_p[i] + fit.t - true_p[i]).norm());
  }
  EXPECT_LT(worst, 1e-3);
  // Gravity is aligned with z, so only yaw is free.
  const Vec3 tilt = fit.R * Vec3::UnitZ();
  EXPECT_LT(std::acos(std::min(1.0, tilt.z())), 1e-4);
}
