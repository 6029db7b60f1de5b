#include "dbafusion/liegeom.hpp"

#include <cmath>

namespace dbaf {

Eigen::Matrix4d Transform::matrix() const {
  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.topLeftCorner<3, 3>() = rotation_matrix();
  M.topRightCorner<3, 1>() = t_;
  return M;
}

Transform Transform::inverse() const {
  Transform out;
  out.q_ = q_.conjugate();
  out.t_ = -(out.q_ * t_);
  out.chain_ = chain_;
  return out;
}

Transform Transform::operator*(const Transform& rhs) const {
  Transform out;
  out.q_ = q_ * rhs.q_;
  out.t_ = q_ * rhs.t_ + t_;
  const int chain = int(chain_) + int(rhs.chain_) + 1;
  if (chain > kRenormalizeAfter) {
    out.q_.normalize();
    out.chain_ = 0;
  } else {
    out.chain_ = static_cast<std::uint8_t>(chain);
  }
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  // clang-format off
  S <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return S;
}

Mat3 so3_exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * W + b * W * W;
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double sin_half = v.norm();
  if (sin_half < 0.5 * kSmallAngle) {
    // atan2(s, w) / s -> 1 / w
    return 2.0 / q.w() * v;
  }
  const double theta = 2.0 * std::atan2(sin_half, q.w());
  return theta / sin_half * v;
}

Vec3 so3_log(const Mat3& R) { return so3_log(Quat(R)); }

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = skew(phi);
  if (theta < 1e-5) {
    return Mat3::Identity() - 0.5 * W + W * W / 6.0;
  }
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * W +
         (theta - std::sin(theta)) / (theta2 * theta) * W * W;
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = skew(phi);
  if (theta < 1e-5) {
    return Mat3::Identity() + 0.5 * W + W * W / 12.0;
  }
  const double c =
      1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

Mat3 so3_left_jacobian(const Vec3& phi) { return so3_right_jacobian(-phi); }

Mat3 so3_left_jacobian_inv(const Vec3& phi) { return so3_right_jacobian_inv(-phi); }

Transform se3_exp(const Twist& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  return Transform(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

Twist se3_log(const Transform& T) {
  const Vec3 phi = so3_log(T.rotation());
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inv(phi) * T.translation();
  xi.tail<3>() = phi;
  return xi;
}

Mat6 adjoint(const Transform& T) {
  const Mat3 R = T.rotation_matrix();
  Mat6 A = Mat6::Zero();
  A.topLeftCorner<3, 3>() = R;
  A.topRightCorner<3, 3>() = skew(T.translation()) * R;
  A.bottomRightCorner<3, 3>() = R;
  return A;
}

double yaw_of(const Mat3& R) { return std::atan2(R(1, 0), R(0, 0)); }

Mat3 rot_z(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace dbaf
