#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbafusion/camera.hpp"
#include "dbafusion/flowsim.hpp"
#include "dbafusion/imu.hpp"
#include "dbafusion/measurements.hpp"

namespace dbaf {

/// Rolling height field z = base + A sin(kx) cos(ky) + A/2 sin(0.7k(x + y)).
struct Terrain {
  double base = 0.0;
  double amplitude = 0.4;
  double wavelength = 9.0;

  double height(double x, double y) const;
  /// Distance along `dir` (unit) to the first surface hit.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const;
};

/// Sphere moving at constant velocity; used to build scenes with
/// independently moving objects.
struct MovingSphere {
  Vec3 center = Vec3::Zero();  // at t = 0
  Vec3 velocity = Vec3::Zero();
  double radius = 1.0;

  std::optional<double> intersect(const Vec3& origin, const Vec3& dir, double t) const;
};

/// Inverse depth of every grid point seen from camera pose T_cw at time t.
/// `dynamic` (optional) is set for pixels whose first hit is a sphere.
Eigen::VectorXd render_inv_depth(const Terrain& terrain, std::span<const MovingSphere> objects,
                                 double t, const Transform& T_cw, const PixelGrid& grid,
                                 const Intrinsics& K, ValidMask* dynamic = nullptr);

enum class Motion { Circle, Figure8, StraightTurns, Stationary, ConstantVelocity };

Motion parse_motion(const std::string& name);
std::string to_string(Motion m);

struct MotionConfig {
  Motion kind = Motion::Circle;
  double speed = 3.0;     // m/s nominal
  double altitude = 5.0;  // m above terrain base
  double radius = 20.0;   // m, circle and figure-8 size
  double speed_variation = 0.25;
  double bob_amplitude = 0.3;  // m
  double wobble = 0.05;        // rad, roll and pitch oscillation
};

/// Reference body pose (x right, y forward, z up) at time t.
Transform reference_pose(const MotionConfig& cfg, double t);

/// Camera looking forward and down from the body; returns T_cb.
Transform default_camera_extrinsics(double tilt_deg = 55.0);

struct SimConfig {
  MotionConfig motion;
  double duration = 60.0;
  double imu_rate = 200.0;
  double frame_rate = 5.0;
  double gnss_rate = 1.0;
  double wheel_rate = 1.0;

  ImuNoise imu_noise;
  bool imu_noise_enabled = false;
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();

  double gnss_sigma = 0.0;   // m per axis
  double wheel_sigma = 0.0;  // m/s

  Transform T_cb = default_camera_extrinsics();
  Vec3 gnss_lever = Vec3(0.0, 0.2, 0.5);
  Vec3 wheel_lever = Vec3(0.4, -0.3, -0.5);
  int wheel_axis = 1;

  /// True world-to-navigation transform (heading and translation only).
  double nav_yaw = 0.6;
  Vec3 nav_translation = Vec3(120.0, -45.0, 8.0);

  Terrain terrain;
  std::uint64_t seed = 1;
};

struct SimData {
  std::vector<ImuSample> imu;  // measured
  std::vector<ImuSample> imu_clean;
  std::vector<double> frame_times;
  std::vector<NavState> frame_truth;  // biases hold the injected values
  std::vector<GnssFix> gnss;
  std::vector<WheelSpeed> wheel;
  Transform T_nw;
  /// Index into `imu` of every frame time.
  std::vector<std::size_t> frame_imu_index;
};

/// Ground truth is the midpoint integration of the clean IMU samples, so
/// preintegrated residuals of noise-free data vanish exactly.
SimData simulate(const SimConfig& cfg);

/// Ground-truth scene (camera poses and rendered depths) for every frame.
SyntheticScene make_scene(const SimData& data, const SimConfig& cfg, const PixelGrid& grid,
                          const Intrinsics& K, const FlowNoise& noise = {},
                          std::span<const MovingSphere> objects = {});

/// World-to-camera pose of a body state.
inline Transform camera_pose(const Transform& T_wb, const Transform& T_cb) {
  return T_cb * T_wb.inverse();
}

}  // namespace dbaf
