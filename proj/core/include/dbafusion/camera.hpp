#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dbafusion/liegeom.hpp"

namespace dbaf {

/// Points closer than this (meters) are treated as behind the camera.
inline constexpr double kDepthMin = 1e-3;
/// Smallest admissible inverse depth (1/m).
inline constexpr double kLambdaMin = 1e-6;
/// Pixel stride between grid points at which depth is estimated.
inline constexpr int kGridStep = 8;

/// Pinhole intrinsics of the full-resolution image.
struct Intrinsics {
  double fx = 256.0;
  double fy = 256.0;
  double cx = 256.0;
  double cy = 192.0;
  int width = 512;
  int height = 384;

  /// Throws InvalidArgument unless fx, fy > 0 and the size is a multiple of the grid step.
  void validate() const;
  bool contains(const Vec2& u) const;
};

/// Grid point coordinates (full-resolution pixels) at the centers of the
/// kGridStep x kGridStep cells, row-major.
struct PixelGrid {
  int rows = 0;
  int cols = 0;
  Eigen::Matrix2Xd coords;

  static PixelGrid make(const Intrinsics& K);
  int size() const { return rows * cols; }
  int index(int r, int c) const { return r * cols + c; }
};

using ValidMask = std::vector<std::uint8_t>;

Vec2 project(const Vec3& p, const Intrinsics& K);
Vec3 backproject(const Vec2& u, double lambda, const Intrinsics& K);

struct Reprojection {
  Eigen::VectorXd flow;  // 2n target-frame pixel coordinates, [u0 v0 u1 v1 ...]
  ValidMask valid;       // n entries

  int num_valid() const;
};

/// Reprojects every grid point of frame i (inverse depth lambdas) into frame j.
/// Ti, Tj are world-to-camera transforms.
Reprojection reproject(const PixelGrid& grid, const Eigen::VectorXd& lambdas,
                       const Transform& Ti, const Transform& Tj, const Intrinsics& K);

/// Jacobians of the reprojection w.r.t. left perturbations of Ti and Tj and
/// the per-pixel inverse depth. Rows of invalid pixels are zero.
struct ReprojectionJacobians {
  Eigen::Matrix<double, Eigen::Dynamic, 6> Ji;
  Eigen::Matrix<double, Eigen::Dynamic, 6> Jj;
  Eigen::Matrix2Xd Jlambda;  // column p holds d(u_p, v_p)/d lambda_p
  ValidMask valid;

  /// Expands Jlambda into the dense 2n x n block-diagonal matrix.
  Eigen::MatrixXd dense_lambda() const;
};

ReprojectionJacobians reprojection_jacobians(const PixelGrid& grid,
                                             const Eigen::VectorXd& lambdas,
                                             const Transform& Ti, const Transform& Tj,
                                             const Intrinsics& K);

namespace detail {

/// Single grid point reprojection with optional Jacobians, shared by the
/// batched operations and the dense bundle adjustment kernels.
struct PointProjection {
  Vec2 uv;
  bool valid = false;
  Eigen::Matrix<double, 2, 6> Ji;
  Eigen::Matrix<double, 2, 6> Jj;
  Vec2 Jl;
};

/// `Rij`, `tij` and `adj_ij` describe Tij = Tj * Ti^-1.
PointProjection project_point(const Vec2& u, double lambda, const Mat3& Rij, const Vec3& tij,
                              const Mat6& adj_ij, const Intrinsics& K, bool with_jacobians);

}  // namespace detail

}  // namespace dbaf
