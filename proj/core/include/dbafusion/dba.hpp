#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dbafusion/camera.hpp"
#include "dbafusion/liegeom.hpp"

namespace dbaf {

using FrameId = std::int64_t;

/// Directed co-visibility edge: depths of `source` reprojected into `target`.
struct EdgeKey {
  FrameId source = 0;
  FrameId target = 0;

  auto operator<=>(const EdgeKey&) const = default;
};

/// Flow target for one edge: where each source grid point is observed in the
/// target image, with a per-axis weight (1/px^2). Weight is zero where
/// `valid` is false.
struct FlowMeasurement {
  EdgeKey edge;
  Eigen::VectorXd target;  // 2n
  Eigen::VectorXd weight;  // 2n
  ValidMask valid;         // n
};

struct DepthMap {
  FrameId frame = 0;
  Eigen::VectorXd inv_depth;
};

/// Linearized system of one edge, partitioned as
///
///   | v_ii |   | B_ii   B_ij   E_ii |   | xi_i     |
///   | v_ij | = | B_ij^T B_jj   E_ij | * | xi_j     |
///   | z_ii |   | E_ii^T E_ij^T C_ii |   | dlambda  |
///
/// with C_ii diagonal (stored as a vector).
struct EdgeBlocks {
  EdgeKey edge;
  Mat6 Bii = Mat6::Zero();
  Mat6 Bij = Mat6::Zero();
  Mat6 Bjj = Mat6::Zero();
  Eigen::Matrix<double, 6, Eigen::Dynamic> Eii;
  Eigen::Matrix<double, 6, Eigen::Dynamic> Eij;
  Eigen::VectorXd Cii;
  Vec6 vii = Vec6::Zero();
  Vec6 vij = Vec6::Zero();
  Eigen::VectorXd zii;
  double cost = 0.0;  // 0.5 r^T W r
  int num_valid = 0;
};

/// All edges anchored on one frame stacked into a single system; pose 0 is
/// the anchor, the rest are the targets in order of first appearance.
struct FrameSystem {
  FrameId anchor = 0;
  std::vector<FrameId> poses;
  Eigen::MatrixXd B;  // 6m x 6m
  Eigen::MatrixXd E;  // 6m x n
  Eigen::VectorXd C;  // n
  Eigen::VectorXd v;  // 6m
  Eigen::VectorXd z;  // n

  int num_poses() const { return static_cast<int>(poses.size()); }
};

/// Depth-free quadratic constraint on camera poses (left-perturbation
/// tangents): energy 0.5 x^T H x - x^T v.
struct VisualConstraint {
  std::vector<FrameId> poses;
  Eigen::MatrixXd H;
  Eigen::VectorXd v;

  int index_of(FrameId id) const;  // -1 when absent
  double energy(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) - x.dot(v); }
  static VisualConstraint zero(std::vector<FrameId> poses);
};

/// Added to every depth-block diagonal entry before inversion.
inline constexpr double kSchurDamping = 1e-4;

EdgeBlocks linearize_edge(const FlowMeasurement& meas, const Transform& Ti, const Transform& Tj,
                          const DepthMap& lambda_i, const PixelGrid& grid, const Intrinsics& K);

/// Weighted flow cost 0.5 r^T W r without building the blocks.
double edge_cost(const FlowMeasurement& meas, const Transform& Ti, const Transform& Tj,
                 const DepthMap& lambda_i, const PixelGrid& grid, const Intrinsics& K);

FrameSystem assemble_frame_system(FrameId anchor, std::span<const EdgeBlocks> edges);

VisualConstraint schur_eliminate_depth(const FrameSystem& system,
                                       double damping = kSchurDamping);

/// Index-aligned sum over the window poses.
VisualConstraint accumulate_visual_constraint(std::span<const VisualConstraint> constraints,
                                              std::span<const FrameId> window);

/// Back-substitution for the anchor's inverse depths given the pose
/// increments (stacked in `system.poses` order).
Eigen::VectorXd update_depths(const FrameSystem& system, const Eigen::VectorXd& pose_increments,
                              double damping = kSchurDamping);

/// lambda += delta, clamped to kLambdaMin.
void apply_depth_increment(DepthMap& depth, const Eigen::VectorXd& delta);

/// Constraint from the edges whose source is `frame` only; edges from other
/// sources are ignored. Zero 6x6 constraint on `frame` when none remain.
VisualConstraint marginal_visual_constraint(FrameId frame, std::span<const EdgeBlocks> edges,
                                            double damping = kSchurDamping);

/// Camera poses and depths of the keyframes taking part in a bundle
/// adjustment problem.
struct VisualWindow {
  std::vector<FrameId> frames;
  std::vector<Transform> poses;  // world-to-camera
  std::vector<DepthMap> depths;

  int index_of(FrameId id) const;  // throws IndexOutOfWindow
  std::size_t size() const { return frames.size(); }
};

/// Linearization of every edge in a window, grouped per anchor.
struct WindowLinearization {
  std::vector<FrameSystem> systems;
  VisualConstraint combined;  // over window.frames
  double cost = 0.0;
};

/// Edges are linearized concurrently; the reduction runs in input order.
WindowLinearization linearize_window(const VisualWindow& window,
                                     std::span<const FlowMeasurement> measurements,
                                     const PixelGrid& grid, const Intrinsics& K,
                                     double damping = kSchurDamping);

double window_cost(const VisualWindow& window, std::span<const FlowMeasurement> measurements,
                   const PixelGrid& grid, const Intrinsics& K);

struct VisualOnlyOptions {
  double damping = kSchurDamping;
  int max_backtracks = 8;
  /// Relative eigenvalue threshold for null directions of the reduced Hessian.
  double null_tolerance = 1e-11;
};

struct VisualOnlyReport {
  int iterations = 0;
  int accepted = 0;
  std::vector<double> costs;  // cost before the first and after every accepted step
};

/// Gauss-Newton on the depth-reduced system. The first pose and the mean
/// log inverse depth of the first keyframe are held fixed.
VisualOnlyReport solve_visual_only(VisualWindow& window,
                                   std::span<const FlowMeasurement> measurements,
                                   int iterations, const PixelGrid& grid, const Intrinsics& K,
                                   const VisualOnlyOptions& options = {});

}  // namespace dbaf
