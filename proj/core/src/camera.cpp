#include "dbafusion/camera.hpp"

#include <algorithm>
#include <string>

#include "dbafusion/error.hpp"

namespace dbaf {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(Errc::InvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0 || width % kGridStep != 0 || height % kGridStep != 0) {
    throw Error(Errc::InvalidArgument, "image size " + std::to_string(width) + "x" +
                                           std::to_string(height) +
                                           " must be a positive multiple of the grid step");
  }
}

bool Intrinsics::contains(const Vec2& u) const {
  return u.x() >= -0.5 && u.y() >= -0.5 && u.x() <= width - 0.5 && u.y() <= height - 0.5;
}

PixelGrid PixelGrid::make(const Intrinsics& K) {
  K.validate();
  PixelGrid g;
  g.rows = K.height / kGridStep;
  g.cols = K.width / kGridStep;
  g.coords.resize(2, g.size());
  const double half = 0.5 * (kGridStep - 1);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      g.coords.col(g.index(r, c)) = Vec2(kGridStep * c + half, kGridStep * r + half);
    }
  }
  return g;
}

Vec2 project(const Vec3& p, const Intrinsics& K) {
  if (!(p.z() > kDepthMin)) {
    throw Error(Errc::NonPositiveDepth, "point depth " + std::to_string(p.z()));
  }
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Vec3 backproject(const Vec2& u, double lambda, const Intrinsics& K) {
  if (!(lambda >= kLambdaMin)) {
    throw Error(Errc::InvalidInverseDepth, "inverse depth " + std::to_string(lambda));
  }
  return Vec3((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0) / lambda;
}

int Reprojection::num_valid() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

namespace detail {

PointProjection project_point(const Vec2& u, double lambda, const Mat3& Rij, const Vec3& tij,
                              const Mat6& adj_ij, const Intrinsics& K, bool with_jacobians) {
  PointProjection out;
  if (!(lambda >= kLambdaMin)) return out;

  // Homogeneous point (p, lambda) moved into frame j; depth is X.z / lambda.
  const Vec3 p((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0);
  const Vec3 X = Rij * p + tij * lambda;
  if (!(X.z() > kDepthMin * lambda)) return out;

  const double zinv = 1.0 / X.z();
  out.uv = Vec2(K.fx * X.x() * zinv + K.cx, K.fy * X.y() * zinv + K.cy);
  if (!K.contains(out.uv)) return out;
  out.valid = true;
  if (!with_jacobians) return out;

  Eigen::Matrix<double, 2, 3> dproj;
  dproj << K.fx * zinv, 0.0, -K.fx * X.x() * zinv * zinv,  //
      0.0, K.fy * zinv, -K.fy * X.y() * zinv * zinv;

  Eigen::Matrix<double, 3, 6> dX;
  dX.leftCols<3>() = lambda * Mat3::Identity();
  dX.rightCols<3>() = -skew(X);

  out.Jj = dproj * dX;
  out.Ji = -out.Jj * adj_ij;
  out.Jl = dproj * tij;
  return out;
}

}  // namespace detail

Reprojection reproject(const PixelGrid& grid, const Eigen::VectorXd& lambdas,
                       const Transform& Ti, const Transform& Tj, const Intrinsics& K) {
  if (lambdas.size() != grid.size()) {
    throw Error(Errc::InvalidArgument, "depth map size does not match grid");
  }
  const Transform Tij = Tj * Ti.inverse();
  const Mat3 R = Tij.rotation_matrix();
  const Mat6 A = Mat6::Identity();  // unused without Jacobians
  Reprojection out;
  out.flow = Eigen::VectorXd::Zero(2 * grid.size());
  out.valid.assign(grid.size(), 0);
  for (int p = 0; p < grid.size(); ++p) {
    const auto pt =
        detail::project_point(grid.coords.col(p), lambdas[p], R, Tij.translation(), A, K, false);
    if (!pt.valid) continue;
    out.flow.segment<2>(2 * p) = pt.uv;
    out.valid[p] = 1;
  }
  return out;
}

Eigen::MatrixXd ReprojectionJacobians::dense_lambda() const {
  const Eigen::Index n = Jlambda.cols();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2 * n, n);
  for (Eigen::Index p = 0; p < n; ++p) D.block<2, 1>(2 * p, p) = Jlambda.col(p);
  return D;
}

ReprojectionJacobians reprojection_jacobians(const PixelGrid& grid,
                                             const Eigen::VectorXd& lambdas,
                                             const Transform& Ti, const Transform& Tj,
                                             const Intrinsics& K) {
  if (lambdas.size() != grid.size()) {
    throw Error(Errc::InvalidArgument, "depth map size does not match grid");
  }
  const Transform Tij = Tj * Ti.inverse();
  const Mat3 R = Tij.rotation_matrix();
  const Mat6 A = adjoint(Tij);
  const int n = grid.size();
  ReprojectionJacobians out;
  out.Ji.setZero(2 * n, 6);
  out.Jj.setZero(2 * n, 6);
  out.Jlambda.setZero(2, n);
  out.valid.assign(n, 0);
  for (int p = 0; p < n; ++p) {
    const auto pt =
        detail::project_point(grid.coords.col(p), lambdas[p], R, Tij.translation(), A, K, true);
    if (!pt.valid) continue;
    out.valid[p] = 1;
    out.Ji.middleRows<2>(2 * p) = pt.Ji;
    out.Jj.middleRows<2>(2 * p) = pt.Jj;
    out.Jlambda.col(p) = pt.Jl;
  }
  return out;
}

}  // namespace dbaf
