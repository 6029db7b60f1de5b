#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dbafusion/dba.hpp"
#include "dbafusion/imu.hpp"
#include "dbafusion/measurements.hpp"

namespace dbaf {

using StateKey = FrameId;
inline constexpr int kStateDim = 15;

enum class FactorKind { Imu, Gnss, Wheel, Visual, VisualMarginal, Prior, Linear, Other };

/// Gauss-Newton model of a factor at the current states: cost(x + dx) is
/// approximated by cost - b^T dx + 0.5 dx^T H dx, with dx stacked over keys().
struct FactorLinearization {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  double cost = 0.0;
};

class Factor {
 public:
  virtual ~Factor() = default;

  virtual FactorKind kind() const = 0;
  virtual const std::vector<StateKey>& keys() const = 0;
  /// `states` is ordered like keys().
  virtual double cost(std::span<const NavState> states) const = 0;
  virtual FactorLinearization linearize(std::span<const NavState> states) const = 0;
};

/// Factor with a whitened residual r and optional Huber kernel.
class ResidualFactor : public Factor {
 public:
  const std::vector<StateKey>& keys() const override { return keys_; }
  double cost(std::span<const NavState> states) const override;
  FactorLinearization linearize(std::span<const NavState> states) const override;

  /// Unwhitened residual; J (rows x 15*keys) is filled when non-null.
  virtual Eigen::VectorXd evaluate(std::span<const NavState> states,
                                   Eigen::MatrixXd* J) const = 0;
  /// Square-root information L with whitened residual L r.
  const Eigen::MatrixXd& sqrt_information() const { return sqrt_info_; }

  void set_huber(std::optional<double> delta) { huber_ = delta; }

 protected:
  ResidualFactor(std::vector<StateKey> keys, Eigen::MatrixXd sqrt_info)
      : keys_(std::move(keys)), sqrt_info_(std::move(sqrt_info)) {}

 private:
  std::vector<StateKey> keys_;
  Eigen::MatrixXd sqrt_info_;
  std::optional<double> huber_;
};

/// Upper-triangular L with L^T L = info.
Eigen::MatrixXd sqrt_information_of(const Eigen::MatrixXd& info);

class ImuFactor : public ResidualFactor {
 public:
  ImuFactor(StateKey k, StateKey k1, Preintegration pre, const Vec3& gravity);

  FactorKind kind() const override { return FactorKind::Imu; }
  Eigen::VectorXd evaluate(std::span<const NavState> states, Eigen::MatrixXd* J) const override;
  const Preintegration& preintegration() const { return pre_; }

 private:
  Preintegration pre_;
  Vec3 gravity_;
};

/// r = R_nw (R_wb t_g + p_wb) + t_nw - p_meas.
class GnssFactor : public ResidualFactor {
 public:
  GnssFactor(StateKey key, const GnssFix& fix, const Transform& T_nw, const Vec3& lever,
             double sigma);

  FactorKind kind() const override { return FactorKind::Gnss; }
  Eigen::VectorXd evaluate(std::span<const NavState> states, Eigen::MatrixXd* J) const override;

 private:
  Vec3 p_;
  Transform T_nw_;
  Vec3 lever_;
};

/// r = e_axis^T (R_wb^T v + (w_meas - b_g) x t_s) - v_meas.
class WheelFactor : public ResidualFactor {
 public:
  WheelFactor(StateKey key, double speed, const Vec3& gyro, const Vec3& lever, double sigma,
              int axis = 1);

  FactorKind kind() const override { return FactorKind::Wheel; }
  Eigen::VectorXd evaluate(std::span<const NavState> states, Eigen::MatrixXd* J) const override;

 private:
  double speed_;
  Vec3 gyro_;
  Vec3 lever_;
  int axis_;
};

/// r = sum_k A_k s(x_k) - z with s(x) = [p, Log R, v, b_a, b_g]. Linear in
/// the tangent while rotations stay at identity.
class LinearFactor : public ResidualFactor {
 public:
  LinearFactor(std::vector<StateKey> keys, std::vector<Eigen::MatrixXd> A, Eigen::VectorXd z,
               Eigen::MatrixXd sqrt_info);

  FactorKind kind() const override { return FactorKind::Linear; }
  Eigen::VectorXd evaluate(std::span<const NavState> states, Eigen::MatrixXd* J) const override;

  static Vec15 vectorize(const NavState& x);

 private:
  std::vector<Eigen::MatrixXd> A_;
  Eigen::VectorXd z_;
};

/// Energy 0.5 e^T H e - e^T v with e = local(x_lin, x) stacked over keys.
class PriorFactor : public Factor {
 public:
  PriorFactor(std::vector<StateKey> keys, std::vector<NavState> linearization, Eigen::MatrixXd H,
              Eigen::VectorXd v);

  FactorKind kind() const override { return FactorKind::Prior; }
  const std::vector<StateKey>& keys() const override { return keys_; }
  double cost(std::span<const NavState> states) const override;
  FactorLinearization linearize(std::span<const NavState> states) const override;

  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& v() const { return v_; }
  const std::vector<NavState>& linearization_point() const { return lin_; }

 private:
  Eigen::VectorXd error(std::span<const NavState> states) const;

  std::vector<StateKey> keys_;
  std::vector<NavState> lin_;
  Eigen::MatrixXd H_;
  Eigen::VectorXd v_;
};

/// Depth-eliminated visual constraint mapped onto body states. Camera
/// tangents relate to body tangents by xi_c = -Adj(T_cb) xi_b.
class VisualFactor : public Factor {
 public:
  /// `linearization` holds the body states the constraint was built at,
  /// ordered like constraint.poses.
  VisualFactor(VisualConstraint constraint, std::vector<NavState> linearization,
               const Transform& T_cb, bool marginal = false);

  FactorKind kind() const override {
    return marginal_ ? FactorKind::VisualMarginal : FactorKind::Visual;
  }
  const std::vector<StateKey>& keys() const override { return constraint_.poses; }
  double cost(std::span<const NavState> states) const override;
  FactorLinearization linearize(std::span<const NavState> states) const override;

  /// Camera tangents x_c of the current body states.
  Eigen::VectorXd camera_tangent(std::span<const NavState> states) const;
  /// Block-diagonal -Adj(T_cb) per pose (6K x 15K).
  Eigen::MatrixXd body_map() const;
  const VisualConstraint& constraint() const { return constraint_; }

 private:
  VisualConstraint constraint_;
  std::vector<NavState> lin_;
  Transform T_cb_;
  bool marginal_;
};

}  // namespace dbaf
