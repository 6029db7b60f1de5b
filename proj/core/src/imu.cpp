#include "dbafusion/imu.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dbafusion/error.hpp"

namespace dbaf {

NavState NavState::retract(const Vec15& dx) const {
  NavState out = *this;
  out.T = Transform(Mat3(T.rotation_matrix() * so3_exp(dx.segment<3>(3))),
                    Vec3(T.translation() + T.rotation_matrix() * dx.head<3>()));
  out.v += dx.segment<3>(6);
  out.ba += dx.segment<3>(9);
  out.bg += dx.segment<3>(12);
  return out;
}

Vec15 NavState::local(const NavState& other) const {
  Vec15 dx;
  dx.head<3>() = T.rotation_matrix().transpose() * (other.T.translation() - T.translation());
  dx.segment<3>(3) = so3_log(Mat3(T.rotation_matrix().transpose() * other.T.rotation_matrix()));
  dx.segment<3>(6) = other.v - v;
  dx.segment<3>(9) = other.ba - ba;
  dx.segment<3>(12) = other.bg - bg;
  return dx;
}

void NavState::saturate_biases(double accel_limit, double gyro_limit) {
  if (ba.norm() > accel_limit) ba *= accel_limit / ba.norm();
  if (bg.norm() > gyro_limit) bg *= gyro_limit / bg.norm();
}

Preintegration::Preintegration(std::vector<ImuSample> samples, const Vec3& ba, const Vec3& bg,
                               const ImuNoise& noise)
    : samples_(std::move(samples)), ba_(ba), bg_(bg), noise_(noise) {
  if (samples_.size() < 2) {
    throw Error(Errc::EmptyBatch, "preintegration needs at least two samples, got " +
                                      std::to_string(samples_.size()));
  }
  for (std::size_t k = 1; k < samples_.size(); ++k) {
    if (!(samples_[k].t > samples_[k - 1].t)) {
      throw Error(Errc::NonMonotonicTime,
                  "sample " + std::to_string(k) + " at t=" + std::to_string(samples_[k].t) +
                      " does not follow t=" + std::to_string(samples_[k - 1].t));
    }
  }
  integrate();
}

void Preintegration::integrate() {
  const double qg = noise_.gyro_density * noise_.gyro_density;
  const double qa = noise_.accel_density * noise_.accel_density;

  for (std::size_t k = 0; k + 1 < samples_.size(); ++k) {
    const ImuSample& s0 = samples_[k];
    const ImuSample& s1 = samples_[k + 1];
    const double h = s1.t - s0.t;

    const Vec3 w = 0.5 * (s0.gyro + s1.gyro) - bg_;
    const Mat3 dRk = so3_exp(w * h);
    const Mat3 R0 = dR_;
    const Mat3 R1 = dR_ * dRk;
    const Vec3 a0 = s0.accel - ba_;
    const Vec3 a1 = s1.accel - ba_;
    const Vec3 am = 0.5 * (R0 * a0 + R1 * a1);

    // Bias Jacobians of this exact discrete scheme.
    const Mat3 Jr = so3_right_jacobian(w * h);
    const Mat3 dR1_dbg = dRk.transpose() * dR_dbg_ - Jr * h;
    const Mat3 dam_dbg = -0.5 * (R0 * skew(a0) * dR_dbg_ + R1 * skew(a1) * dR1_dbg);
    const Mat3 dam_dba = -0.5 * (R0 + R1);

    // Covariance of [dp, dv, dphi] with white noise held over the step.
    Mat9 A = Mat9::Identity();
    A.block<3, 3>(0, 3) = h * Mat3::Identity();
    A.block<3, 3>(0, 6) = -0.5 * h * h * R0 * skew(a0);
    A.block<3, 3>(3, 6) = -h * R0 * skew(a0);
    A.block<3, 3>(6, 6) = dRk.transpose();
    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    B.block<3, 3>(0, 0) = 0.5 * h * h * R0;
    B.block<3, 3>(3, 0) = h * R0;
    B.block<3, 3>(6, 3) = Jr * h;
    Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
    Q.topLeftCorner<3, 3>() = (qa / h) * Mat3::Identity();
    Q.bottomRightCorner<3, 3>() = (qg / h) * Mat3::Identity();
    cov_ = A * cov_ * A.transpose() + B * Q * B.transpose();

    dp_dba_ += dv_dba_ * h + 0.5 * dam_dba * h * h;
    dp_dbg_ += dv_dbg_ * h + 0.5 * dam_dbg * h * h;
    dv_dba_ += dam_dba * h;
    dv_dbg_ += dam_dbg * h;
    dR_dbg_ = dR1_dbg;

    dp_ += dv_ * h + 0.5 * am * h * h;
    dv_ += am * h;
    dR_ = R1;
  }
  // Re-orthonormalize the accumulated rotation.
  dR_ = Quat(dR_).normalized().toRotationMatrix();
  dt_ = samples_.back().t - samples_.front().t;
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
}

Mat15 Preintegration::information() const {
  Mat15 cov = Mat15::Zero();
  cov.topLeftCorner<9, 9>() = cov_;
  cov.block<3, 3>(9, 9) = noise_.accel_walk * noise_.accel_walk * dt_ * Mat3::Identity();
  cov.block<3, 3>(12, 12) = noise_.gyro_walk * noise_.gyro_walk * dt_ * Mat3::Identity();
  Mat15 info = cov.ldlt().solve(Mat15::Identity());
  return 0.5 * (info + info.transpose());
}

Vec3 Preintegration::corrected_delta_p(const Vec3& ba, const Vec3& bg) const {
  return dp_ + dp_dba_ * (ba - ba_) + dp_dbg_ * (bg - bg_);
}

Vec3 Preintegration::corrected_delta_v(const Vec3& ba, const Vec3& bg) const {
  return dv_ + dv_dba_ * (ba - ba_) + dv_dbg_ * (bg - bg_);
}

Mat3 Preintegration::corrected_delta_R(const Vec3& bg) const {
  return dR_ * so3_exp(dR_dbg_ * (bg - bg_));
}

Preintegration Preintegration::repropagate(const Vec3& ba, const Vec3& bg) const {
  return Preintegration(samples_, ba, bg, noise_);
}

Preintegration Preintegration::merge(const Preintegration& first, const Preintegration& second) {
  if (std::abs(first.t_end() - second.t_start()) > 1e-9) {
    throw Error(Errc::TimeMismatch, "segments are not contiguous");
  }
  std::vector<ImuSample> joined = first.samples_;
  joined.insert(joined.end(), second.samples_.begin() + 1, second.samples_.end());
  return Preintegration(std::move(joined), first.ba_, first.bg_, first.noise_);
}

ImuResidual imu_residual(const NavState& xk, const NavState& xk1, const Preintegration& pre,
                         const Vec3& gravity, double time_tolerance) {
  const double dt = pre.dt();
  if (std::abs((xk1.t - xk.t) - dt) > time_tolerance) {
    throw Error(Errc::TimeMismatch, "state gap " + std::to_string(xk1.t - xk.t) +
                                        " s vs preintegrated " + std::to_string(dt) + " s");
  }
  const Mat3 R0 = xk.T.rotation_matrix();
  const Mat3 R1 = xk1.T.rotation_matrix();
  const Vec3& p0 = xk.T.translation();
  const Vec3& p1 = xk1.T.translation();

  const Vec3 yp = p1 - p0 + 0.5 * gravity * dt * dt - xk.v * dt;
  const Vec3 yv = xk1.v + gravity * dt - xk.v;
  const Mat3 dRc = pre.corrected_delta_R(xk.bg);
  const Mat3 E = R0.transpose() * R1 * dRc.transpose();

  ImuResidual out;
  out.r.segment<3>(0) = R0.transpose() * yp - pre.corrected_delta_p(xk.ba, xk.bg);
  out.r.segment<3>(3) = R0.transpose() * yv - pre.corrected_delta_v(xk.ba, xk.bg);
  const Vec3 rR = so3_log(E);
  out.r.segment<3>(6) = rR;
  out.r.segment<3>(9) = xk1.ba - xk.ba;
  out.r.segment<3>(12) = xk1.bg - xk.bg;

  const Mat3 Jri = so3_right_jacobian_inv(rR);
  const Mat3 I = Mat3::Identity();

  // Columns follow the state tangent [rho, phi, v, b_a, b_g].
  Mat15& A = out.J_k;
  A.block<3, 3>(0, 0) = -I;
  A.block<3, 3>(0, 3) = skew(R0.transpose() * yp);
  A.block<3, 3>(0, 6) = -R0.transpose() * dt;
  A.block<3, 3>(0, 9) = -pre.dp_dba();
  A.block<3, 3>(0, 12) = -pre.dp_dbg();
  A.block<3, 3>(3, 3) = skew(R0.transpose() * yv);
  A.block<3, 3>(3, 6) = -R0.transpose();
  A.block<3, 3>(3, 9) = -pre.dv_dba();
  A.block<3, 3>(3, 12) = -pre.dv_dbg();
  A.block<3, 3>(6, 3) = -Jri * E.transpose();
  A.block<3, 3>(6, 12) =
      -Jri * dRc * so3_right_jacobian(pre.dR_dbg() * (xk.bg - pre.bias_gyro())) * pre.dR_dbg();
  A.block<3, 3>(9, 9) = -I;
  A.block<3, 3>(12, 12) = -I;

  Mat15& B = out.J_k1;
  B.block<3, 3>(0, 0) = R0.transpose() * R1;
  B.block<3, 3>(3, 6) = R0.transpose();
  B.block<3, 3>(6, 3) = Jri * dRc;
  B.block<3, 3>(9, 9) = I;
  B.block<3, 3>(12, 12) = I;

  out.information = pre.information();
  return out;
}

NavState predict_state(const NavState& x, std::span<const ImuSample> samples,
                       const Vec3& gravity, double max_gap) {
  if (samples.size() < 2) {
    throw Error(Errc::EmptyBatch, "prediction needs at least two samples");
  }
  const double span = samples.back().t - samples.front().t;
  if (span > max_gap) {
    throw Error(Errc::GapTooLarge, "prediction span " + std::to_string(span) + " s exceeds " +
                                       std::to_string(max_gap) + " s");
  }
  const Preintegration pre({samples.begin(), samples.end()}, x.ba, x.bg);
  const Mat3 R0 = x.T.rotation_matrix();
  const double dt = pre.dt();
  NavState out = x;
  out.t = x.t + dt;
  out.T = Transform(R0 * pre.delta_R(), x.T.translation() + x.v * dt -
                                            0.5 * gravity * dt * dt + R0 * pre.delta_p());
  out.v = x.v - gravity * dt + R0 * pre.delta_v();
  return out;
}

std::vector<ImuSample> slice_samples(std::span<const ImuSample> samples, double t0, double t1) {
  std::vector<ImuSample> out;
  if (samples.empty() || !(t1 > t0)) return out;
  auto lerp = [](const ImuSample& a, const ImuSample& b, double t) {
    const double s = (t - a.t) / (b.t - a.t);
    return ImuSample{t, a.gyro + s * (b.gyro - a.gyro), a.accel + s * (b.accel - a.accel)};
  };
  constexpr double eps = 1e-9;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const ImuSample& s = samples[k];
    if (s.t < t0 - eps) {
      if (k + 1 < samples.size() && samples[k + 1].t > t0 + eps) {
        out.push_back(lerp(s, samples[k + 1], t0));
      }
      continue;
    }
    if (s.t > t1 + eps) {
      if (k > 0 && samples[k - 1].t < t1 - eps) out.push_back(lerp(samples[k - 1], s, t1));
      break;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace dbaf
