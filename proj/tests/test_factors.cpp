#include <array>
#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "dbafusion/factors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dbaf;
using testutil::code_of;

namespace {

NavState random_state(oracle::Rng& rng, double t = 0.0) {
  NavState x;
  x.t = t;
  x.T = rng.transform(3.0, 5.0);
  x.v = rng.vec3(3.0);
  x.ba = rng.vec3(0.1);
  x.bg = rng.vec3(0.01);
  return x;
}

// FD of the unwhitened residual over the stacked retraction of all states.
Eigen::MatrixXd residual_jacobian_fd(const ResidualFactor& f, std::vector<NavState> states) {
  const auto n = static_cast<int>(states.size());
  const auto fn = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
    std::vector<NavState> s = states;
    for (int k = 0; k < n; ++k) s[k] = states[k].retract(d.segment<kStateDim>(kStateDim * k));
    return f.evaluate(s, nullptr);
  };
  return oracle::central_jacobian(fn, kStateDim * n);
}

// FD gradient of cost(); the linearization promises grad = -b.
Eigen::VectorXd cost_gradient_fd(const Factor& f, std::vector<NavState> states) {
  const auto n = static_cast<int>(states.size());
  const auto fn = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
    std::vector<NavState> s = states;
    for (int k = 0; k < n; ++k) s[k] = states[k].retract(d.segment<kStateDim>(kStateDim * k));
    return Eigen::VectorXd::Constant(1, f.cost(s));
  };
  return oracle::central_jacobian(fn, kStateDim * n).transpose();
}

Eigen::MatrixXd random_spd(oracle::Rng& rng, int n) {
  Eigen::MatrixXd A(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) A(r, c) = rng.normal(1.0);
  }
  return A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST(Factors, SqrtInformationFactorsTheInformation) {
  oracle::Rng rng(51);
  const Eigen::MatrixXd info = random_spd(rng, 6);
  const Eigen::MatrixXd L = sqrt_information_of(info);
  EXPECT_LT((L.transpose() * L - info).norm(), 1e-10 * info.norm());
  EXPECT_EQ(L.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm(), 0.0);
  EXPECT_EQ(code_of([] { sqrt_information_of(-Eigen::MatrixXd::Identity(3, 3)); }),
            Errc::InvalidArgument);
}

TEST(Factors, GnssResidualAndJacobian) {
  oracle::Rng rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const NavState x = random_state(rng);
    const Transform T_nw = rng.transform(3.0, 100.0);
    const Vec3 lever = rng.vec3(0.5);
    const GnssFix fix{0.0, rng.vec3(50.0)};
    const GnssFactor f(0, fix, T_nw, lever, 0.2);
    const std::array<NavState, 1> s{x};
    Eigen::MatrixXd J;
    const Eigen::VectorXd r = f.evaluate(s, &J);
    const Vec3 antenna = x.T.rotation_matrix() * lever + x.T.translation();
    const Vec3 expected = T_nw.rotation_matrix() * antenna + T_nw.translation() - fix.p;
    EXPECT_LT((r - expected).norm(), 1e-9);
    EXPECT_LT(oracle::relative_error(J, residual_jacobian_fd(f, {x})), 1e-5);
    EXPECT_NEAR(f.cost(s), 0.5 * r.squaredNorm() / 0.04, 1e-9 * (1 + f.cost(s)));
  }
  EXPECT_EQ(code_of([] { GnssFactor(0, GnssFix{}, Transform(), Vec3::Zero(), 0.0); }),
            Errc::InvalidArgument);
}

TEST(Factors, WheelResidualAndJacobian) {
  oracle::Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const NavState x = random_state(rng);
    const Vec3 gyro = rng.vec3(0.5), lever = rng.vec3(1.0);
    const int axis = trial % 3;
    const double speed = rng.uniform(-3.0, 3.0);
    const WheelFactor f(0, speed, gyro, lever, 0.05, axis);
    const std::array<NavState, 1> s{x};
    Eigen::MatrixXd J;
    const Eigen::VectorXd r = f.evaluate(s, &J);
    const Vec3 v_sensor = x.T.rotation_matrix().transpose() * x.v + (gyro - x.bg).cross(lever);
    ASSERT_EQ(r.size(), 1);
    EXPECT_NEAR(r[0], v_sensor[axis] - speed, 1e-12);
    EXPECT_LT(oracle::relative_error(J, residual_jacobian_fd(f, {x})), 1e-5);
  }
  EXPECT_EQ(code_of([] { WheelFactor(0, 1.0, Vec3::Zero(), Vec3::Zero(), 0.1, 3); }),
            Errc::InvalidArgument);
}

TEST(Factors, ImuJacobianAndGradient) {
  oracle::Rng rng(54);
  std::vector<ImuSample> samples;
  for (int k = 0; k <= 40; ++k) {
    samples.push_back({0.005 * k, rng.vec3(0.3), Vec3(0, 0, 9.81) + rng.vec3(1.0)});
  }
  ImuNoise noise;
  const Preintegration pre(samples, Vec3::Zero(), Vec3::Zero(), noise);
  for (int trial = 0; trial < 20; ++trial) {
    const ImuFactor f(0, 1, pre, default_gravity());
    const std::vector<NavState> s{random_state(rng, 0.0), random_state(rng, pre.dt())};
    Eigen::MatrixXd J;
    f.evaluate(s, &J);
    EXPECT_LT(oracle::relative_error(J, residual_jacobian_fd(f, s)), 1e-5);
    const FactorLinearization lin = f.linearize(s);
    EXPECT_NEAR(lin.cost, f.cost(s), 1e-9 * lin.cost);
    EXPECT_LT(oracle::relative_error(-lin.b, cost_gradient_fd(f, s)), 1e-5);
  }
}

TEST(Factors, HuberKernelCapsLargeResiduals) {
  const std::array<NavState, 1> s{NavState{}};
  GnssFactor f(0, GnssFix{0.0, Vec3(3.0, 4.0, 0.0)}, Transform(), Vec3::Zero(),
               1.0);
  EXPECT_DOUBLE_EQ(f.cost(s), 12.5);
  f.set_huber(2.0);
  // Whitened norm 5 exceeds delta 2: 0.5 (2 * 2 * 5 - 4).
  EXPECT_DOUBLE_EQ(f.cost(s), 8.0);
  const FactorLinearization lin = f.linearize(s);
  EXPECT_DOUBLE_EQ(lin.cost, 8.0);
  // IRLS weight delta / |r| scales the Gauss-Newton system.
  EXPECT_LT((lin.H - 0.4 * Mat3::Identity()).block(0, 0, 3, 3).norm(), 1e-15);
  f.set_huber(10.0);
  EXPECT_DOUBLE_EQ(f.cost(s), 12.5);
}

TEST(Factors, LinearFactorIsLinearAtIdentityRotation) {
  oracle::Rng rng(55);
  Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(15, 15), A1 = Eigen::MatrixXd::Zero(15, 15);
  A0.diagonal().setConstant(-1.0);
  A1.diagonal().setConstant(1.0);
  const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(15, [&] { return rng.normal(1.0); });
  const LinearFactor f({0, 1}, {A0, A1}, z, Eigen::MatrixXd::Identity(15, 15));
  NavState a, b;
  a.T = Transform(Mat3::Identity(), rng.vec3(1.0));
  b.T = Transform(Mat3::Identity(), rng.vec3(1.0));
  a.v = rng.vec3(1.0);
  const std::vector<NavState> s{a, b};
  Eigen::MatrixXd J;
  const Eigen::VectorXd r = f.evaluate(s, &J);
  EXPECT_LT((r - (LinearFactor::vectorize(b) - LinearFactor::vectorize(a) - z)).norm(), 1e-14);
  EXPECT_LT((J.leftCols(15) - A0).norm(), 1e-14);
  EXPECT_LT((J.rightCols(15) - A1).norm(), 1e-14);

  // Away from identity the Jacobian still matches finite differences.
  a.T = rng.transform(1.0, 1.0);
  const std::vector<NavState> s2{a, b};
  f.evaluate(s2, &J);
  EXPECT_LT(oracle::relative_error(J, residual_jacobian_fd(f, s2)), 1e-5);

  EXPECT_EQ(code_of([&] {
              LinearFactor({0}, {Eigen::MatrixXd::Zero(3, 14)}, Eigen::VectorXd::Zero(3),
                           Eigen::MatrixXd::Identity(3, 3));
            }),
            Errc::InvalidArgument);
  EXPECT_EQ(code_of([&] { f.evaluate(std::span(s.data(), 1), nullptr); }), Errc::InvalidArgument);
}

TEST(Factors, PriorGradientMatchesFiniteDifferences) {
  oracle::Rng rng(56);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<NavState> lin{random_state(rng), random_state(rng)};
    const Eigen::MatrixXd H = random_spd(rng, 30);
    const Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(30, [&] { return rng.normal(1.0); });
    const PriorFactor f({3, 4}, lin, H, v);
    std::vector<NavState> x = lin;
    for (auto& s : x) {
      Vec15 d;
      for (int k = 0; k < 15; ++k) d[k] = rng.normal(0.1);
      s = s.retract(d);
    }
    const FactorLinearization l = f.linearize(x);
    EXPECT_NEAR(l.cost, f.cost(x), 1e-12 * (1 + std::abs(l.cost)));
    EXPECT_LT(oracle::relative_error(-l.b, cost_gradient_fd(f, x)), 1e-5);
    // At the linearization point the prior reproduces its own system.
    const FactorLinearization at = f.linearize(lin);
    EXPECT_LT((at.H - f.H()).norm(), 1e-10 * f.H().norm());
    EXPECT_LT((at.b - v).norm(), 1e-12);
    EXPECT_EQ(at.cost, 0.0);
  }
  EXPECT_EQ(code_of([] {
              PriorFactor({0}, {NavState{}}, Eigen::MatrixXd::Identity(14, 14),
                          Eigen::VectorXd::Zero(14));
            }),
            Errc::InvalidArgument);
}

TEST(Factors, VisualFactorMapsBodyToCameraTangents) {
  oracle::Rng rng(57);
  for (int trial = 0; trial < 20; ++trial) {
    const Transform T_cb = rng.transform(3.0, 0.3);
    const std::vector<NavState> lin{random_state(rng), random_state(rng)};
    VisualConstraint c = VisualConstraint::zero({0, 1});
    c.H = random_spd(rng, 12);
    c.v = Eigen::VectorXd::NullaryExpr(12, [&] { return rng.normal(1.0); });
    const VisualFactor f(c, lin, T_cb);
    EXPECT_EQ(f.kind(), FactorKind::Visual);

    // Independent oracle: camera pose T_cw = T_cb T_wb^-1 under a body retraction,
    // measured as a left perturbation of the camera pose.
    const auto cam = [&](const NavState& s) { return T_cb * s.T.inverse(); };
    for (int k = 0; k < 2; ++k) {
      const auto fn = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
        const Transform Tc = cam(lin[k].retract(d));
        return se3_log(Tc * cam(lin[k]).inverse());
      };
      const Eigen::MatrixXd J = oracle::central_jacobian(fn, kStateDim);
      EXPECT_LT(oracle::relative_error(f.body_map().block(6 * k, kStateDim * k, 6, kStateDim), J),
                1e-6);
    }
    EXPECT_LT(f.camera_tangent(lin).norm(), 1e-12);

    // The camera tangent follows the body tangent to first order.
    const auto ct = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
      return f.camera_tangent(
          std::vector<NavState>{lin[0].retract(d.head<15>()), lin[1].retract(d.tail<15>())});
    };
    EXPECT_LT(oracle::relative_error(oracle::central_jacobian(ct, 30), f.body_map()), 1e-6);

    const FactorLinearization l = f.linearize(lin);
    EXPECT_LT(oracle::relative_error(-l.b, cost_gradient_fd(f, lin)), 1e-5);
    EXPECT_LT((l.H - f.body_map().transpose() * c.H * f.body_map()).norm(), 1e-10 * l.H.norm());
  }
  EXPECT_EQ(code_of([] {
              VisualFactor(VisualConstraint::zero({0, 1}), {NavState{}}, Transform());
            }),
            Errc::InvalidArgument);
}
