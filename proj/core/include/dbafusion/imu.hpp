#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "dbafusion/liegeom.hpp"

namespace dbaf {

using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

/// Gravity reaction in the world frame (z up). The accelerometer measures
/// f = R_wb^T (a + g) + b_a, so a resting sensor reads +|g| along its up axis.
inline constexpr double kGravityNorm = 9.81;
inline Vec3 default_gravity() { return {0.0, 0.0, kGravityNorm}; }

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2
};

/// Continuous-time noise densities.
struct ImuNoise {
  double gyro_density = 1.7e-4;   // rad/s/sqrt(Hz)
  double accel_density = 2.0e-3;  // m/s^2/sqrt(Hz)
  double gyro_walk = 2.0e-5;      // rad/s^2/sqrt(Hz)
  double accel_walk = 3.0e-4;     // m/s^3/sqrt(Hz)
};

/// Body state: pose T_wb, world velocity and IMU biases. Tangent ordering
/// is [rho, phi, v, b_a, b_g], retracted as R' = R Exp(phi), p' = p + R rho.
struct NavState {
  double t = 0.0;
  Transform T;
  Vec3 v = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();

  NavState retract(const Vec15& dx) const;
  /// Tangent dx with this->retract(dx) == other.
  Vec15 local(const NavState& other) const;
  /// Clamps bias magnitudes to the given limits.
  void saturate_biases(double accel_limit = 1.0, double gyro_limit = 0.2);
};

/// Relative motion terms integrated from raw samples at a fixed bias
/// linearization point, with covariance and first-order bias Jacobians.
class Preintegration {
 public:
  Preintegration() = default;

  /// Throws EmptyBatch with fewer than two samples and NonMonotonicTime
  /// unless timestamps strictly increase.
  Preintegration(std::vector<ImuSample> samples, const Vec3& ba, const Vec3& bg,
                 const ImuNoise& noise = {});

  double t_start() const { return samples_.front().t; }
  double t_end() const { return samples_.back().t; }
  double dt() const { return dt_; }

  const Vec3& delta_p() const { return dp_; }
  const Vec3& delta_v() const { return dv_; }
  const Mat3& delta_R() const { return dR_; }

  const Mat3& dp_dba() const { return dp_dba_; }
  const Mat3& dp_dbg() const { return dp_dbg_; }
  const Mat3& dv_dba() const { return dv_dba_; }
  const Mat3& dv_dbg() const { return dv_dbg_; }
  const Mat3& dR_dbg() const { return dR_dbg_; }

  const Vec3& bias_accel() const { return ba_; }
  const Vec3& bias_gyro() const { return bg_; }
  const ImuNoise& noise() const { return noise_; }
  const std::vector<ImuSample>& samples() const { return samples_; }

  /// Covariance of [dp, dv, dphi].
  const Mat9& covariance() const { return cov_; }
  /// Information of the 15-row residual including the bias random walk.
  Mat15 information() const;

  /// First-order corrected terms for biases (ba, bg).
  Vec3 corrected_delta_p(const Vec3& ba, const Vec3& bg) const;
  Vec3 corrected_delta_v(const Vec3& ba, const Vec3& bg) const;
  Mat3 corrected_delta_R(const Vec3& bg) const;

  /// Re-integrates the stored samples at a new linearization bias.
  Preintegration repropagate(const Vec3& ba, const Vec3& bg) const;

  /// Joins two consecutive segments (first.t_end == second.t_start) and
  /// re-integrates at the first segment's bias.
  static Preintegration merge(const Preintegration& first, const Preintegration& second);

 private:
  void integrate();

  std::vector<ImuSample> samples_;
  Vec3 ba_ = Vec3::Zero();
  Vec3 bg_ = Vec3::Zero();
  ImuNoise noise_;

  double dt_ = 0.0;
  Vec3 dp_ = Vec3::Zero();
  Vec3 dv_ = Vec3::Zero();
  Mat3 dR_ = Mat3::Identity();
  Mat3 dp_dba_ = Mat3::Zero();
  Mat3 dp_dbg_ = Mat3::Zero();
  Mat3 dv_dba_ = Mat3::Zero();
  Mat3 dv_dbg_ = Mat3::Zero();
  Mat3 dR_dbg_ = Mat3::Zero();
  Mat9 cov_ = Mat9::Zero();
};

/// Rows [p, v, R, b_a, b_g].
struct ImuResidual {
  Vec15 r = Vec15::Zero();
  Mat15 J_k = Mat15::Zero();
  Mat15 J_k1 = Mat15::Zero();
  Mat15 information = Mat15::Identity();
};

/// Throws TimeMismatch when the state timestamps disagree with the
/// preintegration interval by more than `time_tolerance`.
ImuResidual imu_residual(const NavState& xk, const NavState& xk1, const Preintegration& pre,
                         const Vec3& gravity = default_gravity(), double time_tolerance = 1e-3);

/// Dead-reckons `x` over the samples (same discretization as the
/// preintegration). Throws GapTooLarge when the span exceeds `max_gap`.
NavState predict_state(const NavState& x, std::span<const ImuSample> samples,
                       const Vec3& gravity = default_gravity(), double max_gap = 1.0);

/// Samples covering [t0, t1]; both ends are interpolated when they fall
/// between samples.
std::vector<ImuSample> slice_samples(std::span<const ImuSample> samples, double t0, double t1);

}  // namespace dbaf
