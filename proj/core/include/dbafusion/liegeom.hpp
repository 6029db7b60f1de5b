#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dbaf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

/// se(3) tangent coordinates ordered [translation; rotation].
using Twist = Vec6;

/// Rigid body transform acting on points as x -> R x + t.
class Transform {
 public:
  Transform() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Transform(const Quat& q, const Vec3& t) : q_(q.normalized()), t_(t) {}
  Transform(const Mat3& R, const Vec3& t) : q_(Quat(R).normalized()), t_(t) {}

  static Transform identity() { return {}; }

  const Quat& rotation() const { return q_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
  const Vec3& translation() const { return t_; }
  Eigen::Matrix4d matrix() const;

  Transform inverse() const;
  Transform operator*(const Transform& rhs) const;
  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

 private:
  // Compositions since the quaternion was last renormalized.
  static constexpr std::uint8_t kRenormalizeAfter = 16;

  Quat q_;
  Vec3 t_;
  std::uint8_t chain_ = 0;
};

/// Small-angle threshold used by the closed-form exp/log branches.
inline constexpr double kSmallAngle = 1e-8;

Mat3 skew(const Vec3& v);

Mat3 so3_exp(const Vec3& phi);
Vec3 so3_log(const Mat3& R);
Vec3 so3_log(const Quat& q);

/// Right Jacobian Jr(phi) with exp(phi + d) ~ exp(phi) exp(Jr(phi) d).
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inv(const Vec3& phi);

/// Left Jacobian, also the V matrix of the se(3) exponential.
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inv(const Vec3& phi);

Transform se3_exp(const Twist& xi);
Twist se3_log(const Transform& T);

/// Adjoint such that exp(Adj(T) xi) = T exp(xi) T^-1.
Mat6 adjoint(const Transform& T);

/// Heading about the world z axis of a rotation.
double yaw_of(const Mat3& R);
Mat3 rot_z(double yaw);

}  // namespace dbaf
