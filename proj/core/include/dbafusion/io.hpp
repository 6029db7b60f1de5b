#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dbafusion/densemap.hpp"
#include "dbafusion/geodetic.hpp"
#include "dbafusion/simulation.hpp"
#include "dbafusion/window.hpp"

namespace dbaf {

/// Everything a run needs: the scenario, the sensor models and the estimator knobs.
struct RunConfig {
  SimConfig sim;
  Intrinsics K;
  FlowNoise flow;
  int dynamic_objects = 0;
  EstimatorConfig estimator;
  DepthCheckOptions depth_check;
  /// Optional recorded streams replacing the simulated ones.
  std::string imu_csv;
  std::string gnss_csv;
  std::string wheel_csv;
  std::optional<Geodetic> gnss_anchor;  // required for ECEF GNSS rows
};

/// Camera, levers and IMU noise are shared between simulator and estimator.
void sync_sensors(RunConfig& cfg);

/// Applies one `key = value` setting. Throws InvalidArgument for unknown keys
/// or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` text with '#' comments. `trajectory` is required.
/// Throws ParseError (with line and column) or MissingField.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path);
void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& samples);

enum class GnssFrame { Enu, Ecef };
struct GnssRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  GnssFrame frame = GnssFrame::Enu;
};
std::vector<GnssRecord> read_gnss_csv(const std::filesystem::path& path);
void write_gnss_csv(const std::filesystem::path& path, const std::vector<GnssFix>& fixes);
/// ECEF rows are converted with `anchor`; throws InvalidArgument when one is needed but absent.
std::vector<GnssFix> to_enu(const std::vector<GnssRecord>& records,
                            const std::optional<GeoAnchor>& anchor);

std::vector<WheelSpeed> read_wheel_csv(const std::filesystem::path& path);
void write_wheel_csv(const std::filesystem::path& path, const std::vector<WheelSpeed>& speeds);

struct StampedPose {
  double t = 0.0;
  Transform T;
};
using Trajectory = std::vector<StampedPose>;

/// `t tx ty tz qx qy qz qw` per line, 17 significant digits.
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);
std::string format_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(std::string_view text, const std::string& source = "<trajectory>");

/// ASCII PLY with float x, y, z vertices.
void write_ply(const std::filesystem::path& path, const PointCloudMap& map);

}  // namespace dbaf
