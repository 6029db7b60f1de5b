#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dbafusion/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(DBAF_CLI) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) o.out += buf;
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "dbafusion_cli_tests";
  fs::create_directories(dir);
  return dir;
}

// 1 km straight line, one pose per meter.
dbaf::Trajectory line(double scale) {
  dbaf::Trajectory t;
  for (int k = 0; k <= 1000; ++k) {
    t.push_back({double(k), dbaf::Transform(dbaf::Mat3::Identity(), dbaf::Vec3(scale * k, 0, 0))});
  }
  return t;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("--bogus-flag").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("--config /nonexistent.cfg").code, 2);
  EXPECT_EQ(run_cli("--config " DBAF_CONFIG_DIR "/noise_free.cfg --set nonsense=1").code, 2);
  EXPECT_EQ(run_cli("--config " DBAF_CONFIG_DIR "/noise_free.cfg --scheme lidar").code, 2);
}

TEST(Cli, EvalReportsScaleDrift) {
  const fs::path dir = scratch();
  dbaf::write_trajectory(dir / "ref.txt", line(1.0));
  dbaf::write_trajectory(dir / "est.txt", line(1.02));
  const Outcome o = run_cli("eval --est " + (dir / "est.txt").string() + " --ref " +
                            (dir / "ref.txt").string() + " --align none");
  ASSERT_EQ(o.code, 0);
  const json j = json::parse(o.out);
  EXPECT_NEAR(j["rpe"]["t_rel_percent"].get<double>(), 2.0, 1e-9);
  EXPECT_NEAR(j["rpe"]["r_rel_deg_per_100m"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(j["ate"]["sim3"]["rmse"].get<double>(), 0.0, 1e-8);
  EXPECT_EQ(j["ate"]["selected"]["pairs"].get<int>(), 1001);

  const dbaf::Trajectory ref = line(1.0);
  dbaf::write_trajectory(dir / "few.txt", dbaf::Trajectory(ref.begin(), ref.begin() + 2));
  EXPECT_EQ(run_cli("eval --est " + (dir / "few.txt").string() + " --ref " +
                    (dir / "ref.txt").string()).code,
            3);
  EXPECT_EQ(run_cli("eval --est /nonexistent.txt --ref " + (dir / "ref.txt").string()).code, 2);
}

TEST(Cli, SimulateWritesStreams) {
  const fs::path out = scratch() / "sim";
  fs::remove_all(out);
  const Outcome o = run_cli("simulate --config " DBAF_CONFIG_DIR "/noisy.cfg --set duration=5 --out " +
                            out.string());
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(dbaf::read_imu_csv(out / "imu.csv").size() > 0, true);
  EXPECT_FALSE(dbaf::read_wheel_csv(out / "wheel.csv").empty());
  EXPECT_FALSE(dbaf::read_gnss_csv(out / "gnss.csv").empty());
  EXPECT_FALSE(dbaf::read_trajectory(out / "truth.txt").empty());
}

TEST(Cli, ShortRunWritesOutputs) {
  const fs::path out = scratch() / "run";
  fs::remove_all(out);
  const Outcome o = run_cli("--config " DBAF_CONFIG_DIR "/noise_free.cfg --set duration=10 "
                            "--scheme vio --max-frames 40 --out " + out.string());
  ASSERT_EQ(o.code, 0);
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "trajectory.txt"));
  std::ifstream in(out / "summary.json");
  const json j = json::parse(in);
  EXPECT_EQ(j["frames"].get<int>(), 40);
  EXPECT_EQ(j["scheme"].get<std::string>(), "vio");
}
