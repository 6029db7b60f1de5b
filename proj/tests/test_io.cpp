#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dbafusion/io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dbaf;
using testutil::code_of;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dbafusion_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Line and column of a ParseError, or (-1, -1).
std::pair<int, int> parse_position(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const ParseError& e) {
    return {e.line(), e.column()};
  }
  return {-1, -1};
}

}  // namespace

TEST(Config, ParsesKnownKeys) {
  const RunConfig cfg = parse_config(
      "# comment line\n"
      "trajectory = figure8\n"
      "duration = 12.5   # trailing comment\n"
      "imu_noise = true\n"
      "image_width = 128\n"
      "image_height = 96\n"
      "gyro_bias = 0.1, -0.2, 0.3\n"
      "midrange_offsets = -6, -7\n"
      "huber = 0\n");
  EXPECT_DOUBLE_EQ(cfg.sim.duration, 12.5);
  EXPECT_TRUE(cfg.sim.imu_noise_enabled);
  EXPECT_EQ(cfg.K.width, 128);
  EXPECT_EQ(cfg.sim.gyro_bias, Vec3(0.1, -0.2, 0.3));
  EXPECT_EQ(cfg.estimator.window.midrange_offsets, (std::vector<int>{-6, -7}));
  EXPECT_FALSE(cfg.estimator.sensors.huber.has_value());
}

TEST(Config, ReportsLineAndColumn) {
  EXPECT_EQ(parse_position("trajectory = circle\n  bogus_key = 3\n"), std::make_pair(2, 3));
  EXPECT_EQ(parse_position("trajectory = circle\nduration =   abc\n"), std::make_pair(2, 14));
  EXPECT_EQ(parse_position("trajectory = circle\n\n   no equals sign\n"), std::make_pair(3, 4));
  EXPECT_EQ(parse_position("trajectory = spiral\n"), std::make_pair(1, 14));
  EXPECT_EQ(code_of([] { parse_config("duration = 3\n"); }), Errc::MissingField);
  EXPECT_EQ(code_of([] { parse_config("trajectory = circle\nwheel_axis = 4\n"); }), Errc::ParseError);
}

TEST(Config, ApplySettingRejectsUnknownKeys) {
  RunConfig cfg;
  EXPECT_EQ(code_of([&] { apply_setting(cfg, "not_a_key", "1"); }), Errc::InvalidArgument);
  apply_setting(cfg, "window_size", "12");
  EXPECT_EQ(cfg.estimator.window.window_size, 12);
}

TEST(Config, SensorsAreShared) {
  const RunConfig cfg = parse_config("trajectory = circle\ngnss_lever = 0.1, 0.2, 0.3\n");
  EXPECT_EQ(cfg.sim.gnss_lever, Vec3(0.1, 0.2, 0.3));
  EXPECT_EQ(cfg.estimator.sensors.gnss_lever, cfg.sim.gnss_lever);
  EXPECT_LT((cfg.estimator.sensors.T_cb.inverse() * cfg.sim.T_cb).translation().norm(), 1e-15);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"noise_free.cfg", "noisy.cfg"}) {
    const RunConfig cfg = load_config(fs::path(DBAF_CONFIG_DIR) / name);
    EXPECT_NO_THROW(cfg.K.validate()) << name;
    EXPECT_NO_THROW(cfg.estimator.window.validate()) << name;
  }
  EXPECT_EQ(code_of([] { load_config("/nonexistent/dir/x.cfg"); }), Errc::IoError);
}

TEST(Csv, ImuRoundTripIsExact) {
  oracle::Rng rng(101);
  std::vector<ImuSample> s;
  for (int k = 0; k < 50; ++k) s.push_back({0.005 * k + 1e9, rng.vec3(1.0), rng.vec3(10.0)});
  const auto path = scratch("imu.csv");
  write_imu_csv(path, s);
  const auto back = read_imu_csv(path);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_EQ(back[k].t, s[k].t);
    EXPECT_EQ(back[k].gyro, s[k].gyro);
    EXPECT_EQ(back[k].accel, s[k].accel);
  }
  write_text(path, "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.8\n0,0,0,0,0,0,9.8\n");
  EXPECT_EQ(code_of([&] { read_imu_csv(path); }), Errc::ParseError);
  write_text(path, "0,0,0,0,0,0\n");
  EXPECT_EQ(code_of([&] { read_imu_csv(path); }), Errc::ParseError);
}

TEST(Csv, GnssFramesAndAnchor) {
  const auto path = scratch("gnss.csv");
  const GeoAnchor anchor({48.1, 11.5, 520.0});
  const Vec3 enu(12.0, -40.0, 3.0);
  const Vec3 ecef = anchor.enu_to_ecef(enu);
  std::ostringstream text;
  text.precision(17);
  text << "t,px,py,pz,frame\n0.5,1,2,3,ENU\n1.5," << ecef.x() << ',' << ecef.y() << ','
       << ecef.z() << ",ECEF\n";
  write_text(path, text.str());
  const auto rec = read_gnss_csv(path);
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[1].frame, GnssFrame::Ecef);
  EXPECT_EQ(code_of([&] { to_enu(rec, std::nullopt); }), Errc::InvalidArgument);
  const auto fixes = to_enu(rec, anchor);
  EXPECT_EQ(fixes[0].p, Vec3(1, 2, 3));
  EXPECT_LT((fixes[1].p - enu).norm(), 1e-6);

  write_text(path, "0.5,1,2,3,NED\n");
  try {
    read_gnss_csv(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_EQ(e.column(), 11);
  }
}

TEST(Csv, WheelRoundTrip) {
  const auto path = scratch("wheel.csv");
  const std::vector<WheelSpeed> w{{0.0, 1.25}, {1.0, -0.5}, {2.0, 3.0}};
  write_wheel_csv(path, w);
  const auto back = read_wheel_csv(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].v, -0.5);
}

TEST(Trajectory, RoundTripKeepsFullPrecision) {
  oracle::Rng rng(102);
  Trajectory traj;
  for (int k = 0; k < 20; ++k) traj.push_back({1.7e9 + 0.2 * k, rng.transform(3.0, 1000.0)});
  const auto path = scratch("traj.txt");
  write_trajectory(path, traj);
  const Trajectory back = read_trajectory(path);
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    EXPECT_EQ(back[k].t, traj[k].t);
    EXPECT_LT((back[k].T.translation() - traj[k].T.translation()).norm(), 1e-12);
    EXPECT_LT(oracle::angle_between(back[k].T.rotation_matrix(), traj[k].T.rotation_matrix()), 1e-12);
  }
  EXPECT_EQ(code_of([] { parse_trajectory("0 1 2 3 0 0 0\n"); }), Errc::ParseError);
  EXPECT_EQ(code_of([] { parse_trajectory("0 1 2 3 0 0 0 2\n"); }), Errc::ParseError);
  EXPECT_EQ(parse_trajectory("# header\n\n0 1 2 3 0 0 0 1\n").size(), 1u);
}

TEST(Ply, HeaderAndVertices) {
  PointCloudMap map;
  map.points.push_back({Vec3(1.5, -2.0, 3.25), 0, 2});
  map.points.push_back({Vec3(0.0, 0.0, 1.0), 1, 3});
  const auto path = scratch("map.ply");
  write_ply(path, map);
  const std::string text = read_text(path);
  EXPECT_EQ(text.rfind("ply\nformat ascii 1.0\nelement vertex 2\n", 0), 0u);
  EXPECT_NE(text.find("end_header\n1.5 -2 3.25\n0 0 1\n"), std::string::npos);
}
