#include "dbafusion/dba.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/Eigenvalues>
#include <tbb/parallel_for.h>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

void check_sizes(const FlowMeasurement& meas, const DepthMap& depth, const PixelGrid& grid) {
  const Eigen::Index n = grid.size();
  if (depth.inv_depth.size() != n || meas.target.size() != 2 * n ||
      meas.weight.size() != 2 * n || static_cast<Eigen::Index>(meas.valid.size()) != n) {
    throw Error(Errc::InvalidArgument, "flow measurement or depth map does not match the grid");
  }
}

struct RelativePose {
  Mat3 R;
  Vec3 t;
  Mat6 adj;

  RelativePose(const Transform& Ti, const Transform& Tj) {
    const Transform Tij = Tj * Ti.inverse();
    R = Tij.rotation_matrix();
    t = Tij.translation();
    adj = adjoint(Tij);
  }
};

}  // namespace

int VisualConstraint::index_of(FrameId id) const {
  const auto it = std::find(poses.begin(), poses.end(), id);
  return it == poses.end() ? -1 : static_cast<int>(it - poses.begin());
}

VisualConstraint VisualConstraint::zero(std::vector<FrameId> poses) {
  VisualConstraint c;
  const auto d = static_cast<Eigen::Index>(6 * poses.size());
  c.poses = std::move(poses);
  c.H = Eigen::MatrixXd::Zero(d, d);
  c.v = Eigen::VectorXd::Zero(d);
  return c;
}

EdgeBlocks linearize_edge(const FlowMeasurement& meas, const Transform& Ti, const Transform& Tj,
                          const DepthMap& lambda_i, const PixelGrid& grid, const Intrinsics& K) {
  check_sizes(meas, lambda_i, grid);
  const int n = grid.size();
  const RelativePose rel(Ti, Tj);

  EdgeBlocks out;
  out.edge = meas.edge;
  out.Eii.setZero(6, n);
  out.Eij.setZero(6, n);
  out.Cii.setZero(n);
  out.zii.setZero(n);

  // Square-root weighted rows [J_i J_j | r]; their Gram matrix holds B, v and the cost.
  thread_local Eigen::Matrix<double, Eigen::Dynamic, 13> rows;
  if (rows.rows() < 2 * n) rows.resize(2 * n, 13);

  int k = 0;
  for (int p = 0; p < n; ++p) {
    if (!meas.valid[p]) continue;
    const auto pt = detail::project_point(grid.coords.col(p), lambda_i.inv_depth[p], rel.R,
                                          rel.t, rel.adj, K, true);
    if (!pt.valid) continue;
    const Vec2 r = meas.target.segment<2>(2 * p) - pt.uv;
    const Vec2 w = meas.weight.segment<2>(2 * p);
    for (int a = 0; a < 2; ++a) {
      const double sw = std::sqrt(w[a]);
      rows.row(k).head<6>() = sw * pt.Ji.row(a);
      rows.row(k).segment<6>(6) = sw * pt.Jj.row(a);
      rows(k, 12) = sw * r[a];
      ++k;
    }
    const Vec2 wJl = w.cwiseProduct(pt.Jl);
    out.Eii.col(p) = pt.Ji.transpose() * wJl;
    out.Eij.col(p) = pt.Jj.transpose() * wJl;
    out.Cii[p] = pt.Jl.dot(wJl);
    out.zii[p] = wJl.dot(r);
    ++out.num_valid;
  }

  const auto used = rows.topRows(k);
  const Eigen::Matrix<double, 13, 13> G = used.transpose() * used;
  out.Bii = G.block<6, 6>(0, 0);
  out.Bij = G.block<6, 6>(0, 6);
  out.Bjj = G.block<6, 6>(6, 6);
  out.vii = G.block<6, 1>(0, 12);
  out.vij = G.block<6, 1>(6, 12);
  out.cost = 0.5 * G(12, 12);
  return out;
}

double edge_cost(const FlowMeasurement& meas, const Transform& Ti, const Transform& Tj,
                 const DepthMap& lambda_i, const PixelGrid& grid, const Intrinsics& K) {
  check_sizes(meas, lambda_i, grid);
  const RelativePose rel(Ti, Tj);
  double cost = 0.0;
  for (int p = 0; p < grid.size(); ++p) {
    if (!meas.valid[p]) continue;
    const auto pt = detail::project_point(grid.coords.col(p), lambda_i.inv_depth[p], rel.R,
                                          rel.t, rel.adj, K, false);
    if (!pt.valid) continue;
    const Vec2 r = meas.target.segment<2>(2 * p) - pt.uv;
    cost += 0.5 * (meas.weight[2 * p] * r.x() * r.x() + meas.weight[2 * p + 1] * r.y() * r.y());
  }
  return cost;
}

FrameSystem assemble_frame_system(FrameId anchor, std::span<const EdgeBlocks> edges) {
  FrameSystem sys;
  sys.anchor = anchor;
  sys.poses.push_back(anchor);
  Eigen::Index n = -1;
  for (const auto& e : edges) {
    if (e.edge.source != anchor) {
      throw Error(Errc::MixedAnchor, "edge " + std::to_string(e.edge.source) + "->" +
                                         std::to_string(e.edge.target) +
                                         " is not anchored on frame " + std::to_string(anchor));
    }
    if (n < 0) n = e.Cii.size();
    if (e.Cii.size() != n) throw Error(Errc::InvalidArgument, "edges disagree on grid size");
    if (std::find(sys.poses.begin(), sys.poses.end(), e.edge.target) == sys.poses.end()) {
      sys.poses.push_back(e.edge.target);
    }
  }
  if (n < 0) n = 0;

  const Eigen::Index d = 6 * sys.num_poses();
  sys.B.setZero(d, d);
  sys.E.setZero(d, n);
  sys.C.setZero(n);
  sys.v.setZero(d);
  sys.z.setZero(n);
  for (const auto& e : edges) {
    const Eigen::Index j =
        6 * (std::find(sys.poses.begin(), sys.poses.end(), e.edge.target) - sys.poses.begin());
    sys.B.block<6, 6>(0, 0) += e.Bii;
    sys.B.block<6, 6>(0, j) += e.Bij;
    sys.B.block<6, 6>(j, 0) += e.Bij.transpose();
    sys.B.block<6, 6>(j, j) += e.Bjj;
    sys.E.topRows<6>() += e.Eii;
    sys.E.middleRows<6>(j) += e.Eij;
    sys.C += e.Cii;
    sys.v.head<6>() += e.vii;
    sys.v.segment<6>(j) += e.vij;
    sys.z += e.zii;
  }
  return sys;
}

VisualConstraint schur_eliminate_depth(const FrameSystem& system, double damping) {
  VisualConstraint out;
  out.poses = system.poses;
  const Eigen::VectorXd cinv = (system.C.array() + damping).inverse().matrix();
  const Eigen::MatrixXd M = system.E * cinv.cwiseSqrt().asDiagonal();
  out.H = system.B;
  out.H.noalias() -= M * M.transpose();
  out.H = 0.5 * (out.H + out.H.transpose()).eval();
  out.v = system.v - system.E * cinv.cwiseProduct(system.z);
  return out;
}

VisualConstraint accumulate_visual_constraint(std::span<const VisualConstraint> constraints,
                                              std::span<const FrameId> window) {
  VisualConstraint out = VisualConstraint::zero({window.begin(), window.end()});
  for (const auto& c : constraints) {
    std::vector<Eigen::Index> at(c.poses.size());
    for (std::size_t k = 0; k < c.poses.size(); ++k) {
      const int idx = out.index_of(c.poses[k]);
      if (idx < 0) {
        throw Error(Errc::IndexOutOfWindow,
                    "frame " + std::to_string(c.poses[k]) + " is not in the window");
      }
      at[k] = 6 * idx;
    }
    for (std::size_t a = 0; a < at.size(); ++a) {
      out.v.segment<6>(at[a]) += c.v.segment<6>(6 * a);
      for (std::size_t b = 0; b < at.size(); ++b) {
        out.H.block<6, 6>(at[a], at[b]) += c.H.block<6, 6>(6 * a, 6 * b);
      }
    }
  }
  return out;
}

Eigen::VectorXd update_depths(const FrameSystem& system, const Eigen::VectorXd& pose_increments,
                              double damping) {
  if (pose_increments.size() != system.v.size()) {
    throw Error(Errc::InvalidArgument, "pose increment size does not match the frame system");
  }
  const Eigen::VectorXd rhs = system.z - system.E.transpose() * pose_increments;
  return rhs.cwiseQuotient((system.C.array() + damping).matrix());
}

void apply_depth_increment(DepthMap& depth, const Eigen::VectorXd& delta) {
  if (delta.size() != depth.inv_depth.size()) {
    throw Error(Errc::InvalidArgument, "depth increment size mismatch");
  }
  depth.inv_depth = (depth.inv_depth + delta).cwiseMax(kLambdaMin);
}

VisualConstraint marginal_visual_constraint(FrameId frame, std::span<const EdgeBlocks> edges,
                                            double damping) {
  std::vector<EdgeBlocks> own;
  for (const auto& e : edges) {
    if (e.edge.source == frame) own.push_back(e);
  }
  if (own.empty()) return VisualConstraint::zero({frame});
  return schur_eliminate_depth(assemble_frame_system(frame, own), damping);
}

int VisualWindow::index_of(FrameId id) const {
  const auto it = std::find(frames.begin(), frames.end(), id);
  if (it == frames.end()) {
    throw Error(Errc::IndexOutOfWindow, "frame " + std::to_string(id) + " is not in the window");
  }
  return static_cast<int>(it - frames.begin());
}

WindowLinearization linearize_window(const VisualWindow& window,
                                     std::span<const FlowMeasurement> measurements,
                                     const PixelGrid& grid, const Intrinsics& K,
                                     double damping) {
  std::vector<std::pair<int, int>> idx(measurements.size());
  for (std::size_t e = 0; e < measurements.size(); ++e) {
    idx[e] = {window.index_of(measurements[e].edge.source),
              window.index_of(measurements[e].edge.target)};
  }

  std::vector<EdgeBlocks> blocks(measurements.size());
  tbb::parallel_for(std::size_t{0}, measurements.size(), [&](std::size_t e) {
    const auto [i, j] = idx[e];
    blocks[e] = linearize_edge(measurements[e], window.poses[i], window.poses[j],
                               window.depths[i], grid, K);
  });

  // Group by anchor in order of first appearance.
  std::vector<FrameId> anchors;
  std::map<FrameId, std::vector<EdgeBlocks>> grouped;
  WindowLinearization out;
  for (auto& b : blocks) {
    out.cost += b.cost;
    if (!grouped.contains(b.edge.source)) anchors.push_back(b.edge.source);
    grouped[b.edge.source].push_back(std::move(b));
  }

  out.systems.resize(anchors.size());
  std::vector<VisualConstraint> constraints(anchors.size());
  tbb::parallel_for(std::size_t{0}, anchors.size(), [&](std::size_t a) {
    out.systems[a] = assemble_frame_system(anchors[a], grouped.at(anchors[a]));
    constraints[a] = schur_eliminate_depth(out.systems[a], damping);
  });
  out.combined = accumulate_visual_constraint(constraints, window.frames);
  return out;
}

double window_cost(const VisualWindow& window, std::span<const FlowMeasurement> measurements,
                   const PixelGrid& grid, const Intrinsics& K) {
  double cost = 0.0;
  for (const auto& m : measurements) {
    const int i = window.index_of(m.edge.source);
    const int j = window.index_of(m.edge.target);
    cost += edge_cost(m, window.poses[i], window.poses[j], window.depths[i], grid, K);
  }
  return cost;
}

namespace {

double mean_log(const Eigen::VectorXd& v) { return v.array().log().mean(); }

/// Similarity about the first camera center; leaves every residual unchanged.
void rescale_window(VisualWindow& w, double alpha) {
  const Transform& T0 = w.poses.front();
  const Vec3 c0 = -(T0.rotation().conjugate() * T0.translation());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Transform& Tk = w.poses[k];
    const Vec3 t = alpha * Tk.translation() - (1.0 - alpha) * (Tk.rotation() * c0);
    w.poses[k] = Transform(Tk.rotation(), t);
    w.depths[k].inv_depth = (w.depths[k].inv_depth / alpha).cwiseMax(kLambdaMin);
  }
  w.poses.front() = T0;
}

}  // namespace

VisualOnlyReport solve_visual_only(VisualWindow& window,
                                   std::span<const FlowMeasurement> measurements,
                                   int iterations, const PixelGrid& grid, const Intrinsics& K,
                                   const VisualOnlyOptions& options) {
  if (window.size() < 2) {
    throw Error(Errc::Degenerate, "visual-only bundle adjustment needs at least two keyframes");
  }
  if (measurements.empty()) {
    throw Error(Errc::Degenerate, "visual-only bundle adjustment needs at least one edge");
  }
  const double gauge_log_depth = mean_log(window.depths.front().inv_depth);

  VisualOnlyReport report;
  double cost = window_cost(window, measurements, grid, K);
  report.costs.push_back(cost);

  for (int it = 0; it < iterations; ++it) {
    const WindowLinearization lin =
        linearize_window(window, measurements, grid, K, options.damping);
    ++report.iterations;

    const Eigen::Index d = 6 * static_cast<Eigen::Index>(window.size() - 1);
    const Eigen::MatrixXd H = lin.combined.H.bottomRightCorner(d, d);
    const Eigen::VectorXd v = lin.combined.v.tail(d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    int null_dims = 0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double ev = eig.eigenvalues()[k];
      if (!(ev > options.null_tolerance * top)) {
        ++null_dims;
        continue;
      }
      const auto u = eig.eigenvectors().col(k);
      x += (u.dot(v) / ev) * u;
    }
    // Only the monocular scale may remain free once the first pose is fixed.
    if (top <= 0.0 || null_dims > 1) {
      throw Error(Errc::Degenerate, "reduced Hessian has " + std::to_string(null_dims) +
                                        " null directions beyond the gauge");
    }

    Eigen::VectorXd xi = Eigen::VectorXd::Zero(d + 6);
    xi.tail(d) = x;
    std::vector<Eigen::VectorXd> ddepth(lin.systems.size());
    for (std::size_t s = 0; s < lin.systems.size(); ++s) {
      const auto& sys = lin.systems[s];
      Eigen::VectorXd local(6 * sys.num_poses());
      for (int k = 0; k < sys.num_poses(); ++k) {
        local.segment<6>(6 * k) = xi.segment<6>(6 * window.index_of(sys.poses[k]));
      }
      ddepth[s] = update_depths(sys, local, options.damping);
    }

    bool accepted = false;
    double step = 1.0;
    for (int bt = 0; bt <= options.max_backtracks && !accepted; ++bt, step *= 0.5) {
      VisualWindow cand = window;
      for (std::size_t k = 1; k < cand.size(); ++k) {
        cand.poses[k] = se3_exp(step * xi.segment<6>(6 * k)) * cand.poses[k];
      }
      for (std::size_t s = 0; s < lin.systems.size(); ++s) {
        apply_depth_increment(cand.depths[cand.index_of(lin.systems[s].anchor)],
                              step * ddepth[s]);
      }
      const double c = window_cost(cand, measurements, grid, K);
      if (c <= cost) {
        rescale_window(cand, std::exp(mean_log(cand.depths.front().inv_depth) - gauge_log_depth));
        window = std::move(cand);
        cost = c;
        accepted = true;
      }
    }
    if (!accepted) break;
    ++report.accepted;
    report.costs.push_back(cost);
    if (x.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  return report;
}

}  // namespace dbaf
