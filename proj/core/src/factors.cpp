#include "dbafusion/factors.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

/// First-order inverse right Jacobian of SE(3): I + ad(xi) / 2.
Mat6 se3_right_jacobian_inv_approx(const Twist& xi) {
  const Mat3 P = skew(xi.tail<3>());
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = P;
  ad.topRightCorner<3, 3>() = skew(xi.head<3>());
  ad.bottomRightCorner<3, 3>() = P;
  return Mat6::Identity() + 0.5 * ad;
}

/// d local(lin, x.retract(dx)) / d dx at dx = 0; e = local(lin, x).
Mat15 local_jacobian(const NavState& lin, const NavState& x, const Vec15& e) {
  Mat15 J = Mat15::Identity();
  J.topLeftCorner<3, 3>() = lin.T.rotation_matrix().transpose() * x.T.rotation_matrix();
  J.block<3, 3>(3, 3) = so3_right_jacobian_inv(e.segment<3>(3));
  return J;
}

void check_arity(std::span<const NavState> states, std::size_t n) {
  if (states.size() != n) {
    throw Error(Errc::InvalidArgument, "factor expects " + std::to_string(n) + " states");
  }
}

}  // namespace

Eigen::MatrixXd sqrt_information_of(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (info + info.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::InvalidArgument, "information matrix is not positive definite");
  }
  return llt.matrixU();
}

double ResidualFactor::cost(std::span<const NavState> states) const {
  const Eigen::VectorXd rw = sqrt_info_ * evaluate(states, nullptr);
  const double s2 = rw.squaredNorm();
  if (huber_ && s2 > *huber_ * *huber_) {
    const double s = std::sqrt(s2);
    return 0.5 * (2.0 * *huber_ * s - *huber_ * *huber_);
  }
  return 0.5 * s2;
}

FactorLinearization ResidualFactor::linearize(std::span<const NavState> states) const {
  Eigen::MatrixXd J;
  const Eigen::VectorXd r = evaluate(states, &J);
  const Eigen::VectorXd rw = sqrt_info_ * r;
  const Eigen::MatrixXd Jw = sqrt_info_ * J;
  double w = 1.0;
  FactorLinearization out;
  const double s2 = rw.squaredNorm();
  if (huber_ && s2 > *huber_ * *huber_) {
    const double s = std::sqrt(s2);
    w = *huber_ / s;
    out.cost = 0.5 * (2.0 * *huber_ * s - *huber_ * *huber_);
  } else {
    out.cost = 0.5 * s2;
  }
  out.H = w * Jw.transpose() * Jw;
  out.b = -w * Jw.transpose() * rw;
  return out;
}

ImuFactor::ImuFactor(StateKey k, StateKey k1, Preintegration pre, const Vec3& gravity)
    : ResidualFactor({k, k1}, sqrt_information_of(pre.information())),
      pre_(std::move(pre)),
      gravity_(gravity) {}

Eigen::VectorXd ImuFactor::evaluate(std::span<const NavState> states, Eigen::MatrixXd* J) const {
  check_arity(states, 2);
  const ImuResidual res = imu_residual(states[0], states[1], pre_, gravity_);
  if (J) {
    J->resize(15, 30);
    J->leftCols<15>() = res.J_k;
    J->rightCols<15>() = res.J_k1;
  }
  return res.r;
}

GnssFactor::GnssFactor(StateKey key, const GnssFix& fix, const Transform& T_nw,
                       const Vec3& lever, double sigma)
    : ResidualFactor({key}, Mat3::Identity() / sigma), p_(fix.p), T_nw_(T_nw), lever_(lever) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "GNSS sigma must be positive");
}

Eigen::VectorXd GnssFactor::evaluate(std::span<const NavState> states,
                                     Eigen::MatrixXd* J) const {
  check_arity(states, 1);
  const NavState& x = states[0];
  const Mat3 R = x.T.rotation_matrix();
  const Mat3 Rn = T_nw_.rotation_matrix();
  if (J) {
    J->setZero(3, kStateDim);
    J->block<3, 3>(0, 0) = Rn * R;
    J->block<3, 3>(0, 3) = -Rn * R * skew(lever_);
  }
  return Vec3(T_nw_ * (x.T * lever_) - p_);
}

WheelFactor::WheelFactor(StateKey key, double speed, const Vec3& gyro, const Vec3& lever,
                         double sigma, int axis)
    : ResidualFactor({key}, Eigen::MatrixXd::Constant(1, 1, 1.0 / sigma)),
      speed_(speed),
      gyro_(gyro),
      lever_(lever),
      axis_(axis) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "wheel sigma must be positive");
  if (axis < 0 || axis > 2) throw Error(Errc::InvalidArgument, "wheel axis must be 0, 1 or 2");
}

Eigen::VectorXd WheelFactor::evaluate(std::span<const NavState> states,
                                      Eigen::MatrixXd* J) const {
  check_arity(states, 1);
  const NavState& x = states[0];
  const Mat3 R = x.T.rotation_matrix();
  const Vec3 vb = R.transpose() * x.v;
  const Vec3 pred = vb + (gyro_ - x.bg).cross(lever_);
  if (J) {
    J->setZero(1, kStateDim);
    J->block<1, 3>(0, 3) = skew(vb).row(axis_);
    J->block<1, 3>(0, 6) = R.transpose().row(axis_);
    J->block<1, 3>(0, 12) = skew(lever_).row(axis_);
  }
  Eigen::VectorXd r(1);
  r[0] = pred[axis_] - speed_;
  return r;
}

LinearFactor::LinearFactor(std::vector<StateKey> keys, std::vector<Eigen::MatrixXd> A,
                           Eigen::VectorXd z, Eigen::MatrixXd sqrt_info)
    : ResidualFactor(std::move(keys), std::move(sqrt_info)), A_(std::move(A)), z_(std::move(z)) {
  if (A_.size() != this->keys().size()) {
    throw Error(Errc::InvalidArgument, "one coefficient block per key is required");
  }
  for (const auto& a : A_) {
    if (a.rows() != z_.size() || a.cols() != kStateDim) {
      throw Error(Errc::InvalidArgument, "coefficient block must be rows x 15");
    }
  }
}

Vec15 LinearFactor::vectorize(const NavState& x) {
  Vec15 s;
  s << x.T.translation(), so3_log(x.T.rotation()), x.v, x.ba, x.bg;
  return s;
}

Eigen::VectorXd LinearFactor::evaluate(std::span<const NavState> states,
                                       Eigen::MatrixXd* J) const {
  check_arity(states, A_.size());
  Eigen::VectorXd r = -z_;
  if (J) J->setZero(z_.size(), kStateDim * static_cast<Eigen::Index>(A_.size()));
  for (std::size_t k = 0; k < A_.size(); ++k) {
    const Vec15 s = vectorize(states[k]);
    r += A_[k] * s;
    if (J) {
      Mat15 D = Mat15::Identity();
      D.block<3, 3>(0, 0) = states[k].T.rotation_matrix();
      D.block<3, 3>(3, 3) = so3_right_jacobian_inv(s.segment<3>(3));
      J->middleCols(kStateDim * static_cast<Eigen::Index>(k), kStateDim) = A_[k] * D;
    }
  }
  return r;
}

PriorFactor::PriorFactor(std::vector<StateKey> keys, std::vector<NavState> linearization,
                         Eigen::MatrixXd H, Eigen::VectorXd v)
    : keys_(std::move(keys)), lin_(std::move(linearization)), H_(std::move(H)), v_(std::move(v)) {
  const auto d = kStateDim * static_cast<Eigen::Index>(keys_.size());
  if (lin_.size() != keys_.size() || H_.rows() != d || H_.cols() != d || v_.size() != d) {
    throw Error(Errc::InvalidArgument, "prior dimensions do not match its keys");
  }
  H_ = 0.5 * (H_ + H_.transpose()).eval();
}

Eigen::VectorXd PriorFactor::error(std::span<const NavState> states) const {
  check_arity(states, keys_.size());
  Eigen::VectorXd e(H_.rows());
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    e.segment<kStateDim>(kStateDim * static_cast<Eigen::Index>(k)) = lin_[k].local(states[k]);
  }
  return e;
}

double PriorFactor::cost(std::span<const NavState> states) const {
  const Eigen::VectorXd e = error(states);
  return 0.5 * e.dot(H_ * e) - e.dot(v_);
}

FactorLinearization PriorFactor::linearize(std::span<const NavState> states) const {
  const Eigen::VectorXd e = error(states);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(H_.rows(), H_.cols());
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    const auto o = kStateDim * static_cast<Eigen::Index>(k);
    J.block<kStateDim, kStateDim>(o, o) = local_jacobian(lin_[k], states[k], e.segment<kStateDim>(o));
  }
  FactorLinearization out;
  out.cost = 0.5 * e.dot(H_ * e) - e.dot(v_);
  out.H = J.transpose() * H_ * J;
  out.b = J.transpose() * (v_ - H_ * e);
  return out;
}

VisualFactor::VisualFactor(VisualConstraint constraint, std::vector<NavState> linearization,
                           const Transform& T_cb, bool marginal)
    : constraint_(std::move(constraint)),
      lin_(std::move(linearization)),
      T_cb_(T_cb),
      marginal_(marginal) {
  const auto d = 6 * static_cast<Eigen::Index>(constraint_.poses.size());
  if (lin_.size() != constraint_.poses.size() || constraint_.H.rows() != d ||
      constraint_.v.size() != d) {
    throw Error(Errc::InvalidArgument, "visual constraint dimensions do not match its poses");
  }
}

Eigen::MatrixXd VisualFactor::body_map() const {
  const auto K = static_cast<Eigen::Index>(constraint_.poses.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6 * K, kStateDim * K);
  const Mat6 adj = -adjoint(T_cb_);
  for (Eigen::Index k = 0; k < K; ++k) A.block<6, 6>(6 * k, kStateDim * k) = adj;
  return A;
}

Eigen::VectorXd VisualFactor::camera_tangent(std::span<const NavState> states) const {
  check_arity(states, lin_.size());
  const Mat6 adj = -adjoint(T_cb_);
  Eigen::VectorXd x(constraint_.H.rows());
  for (std::size_t k = 0; k < lin_.size(); ++k) {
    x.segment<6>(6 * static_cast<Eigen::Index>(k)) =
        adj * se3_log(lin_[k].T.inverse() * states[k].T);
  }
  return x;
}

double VisualFactor::cost(std::span<const NavState> states) const {
  return constraint_.energy(camera_tangent(states));
}

FactorLinearization VisualFactor::linearize(std::span<const NavState> states) const {
  check_arity(states, lin_.size());
  const auto K = static_cast<Eigen::Index>(lin_.size());
  const Mat6 adj = -adjoint(T_cb_);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6 * K, kStateDim * K);
  Eigen::VectorXd x(6 * K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Twist xi = se3_log(lin_[k].T.inverse() * states[k].T);
    x.segment<6>(6 * k) = adj * xi;
    A.block<6, 6>(6 * k, kStateDim * k) = adj * se3_right_jacobian_inv_approx(xi);
  }
  FactorLinearization out;
  out.cost = constraint_.energy(x);
  out.H = A.transpose() * constraint_.H * A;
  out.b = A.transpose() * (constraint_.v - constraint_.H * x);
  return out;
}

}  // namespace dbaf
