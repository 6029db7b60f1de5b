#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dbafusion/error.hpp"
#include "dbafusion/window.hpp"

namespace dbaf {

namespace {

struct LinearAlignment {
  std::vector<Vec3> velocities;
  Vec3 gravity;
  double scale = 0.0;
  double scale_rel_std = 0.0;
};

/// Least-squares v_k, g, s from the preintegration rows. With `g_fixed`
/// the gravity is g0 + B w and only the two tangent coordinates w are solved.
LinearAlignment solve_alignment(const std::vector<Vec3>& centers, const std::vector<Mat3>& R,
                                std::span<const Preintegration> seg, const Vec3& p_bc,
                                const std::optional<Vec3>& g_fixed) {
  const auto n = static_cast<Eigen::Index>(centers.size());
  const Eigen::Index gdim = g_fixed ? 2 : 3;
  const Eigen::Index cols = 3 * n + gdim + 1;
  const Eigen::Index s_col = cols - 1;
  const Eigen::Index g_col = 3 * n;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(6 * (n - 1), cols);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6 * (n - 1));

  Eigen::Matrix<double, 3, 2> B = Eigen::Matrix<double, 3, 2>::Zero();
  Vec3 g0 = Vec3::Zero();
  if (g_fixed) {
    g0 = *g_fixed;
    const Vec3 u = g0.normalized();
    Vec3 a = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 b1 = (a - u * u.dot(a)).normalized();
    B.col(0) = b1;
    B.col(1) = u.cross(b1);
  }

  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const Preintegration& p = seg[k];
    const double dt = p.dt();
    const Mat3 RkT = R[k].transpose();
    const Eigen::Index r = 6 * k;
    // Position row.
    M.block<3, 3>(r, 3 * k) = -RkT * dt;
    M.block<3, 1>(r, s_col) = RkT * (centers[k + 1] - centers[k]);
    Vec3 rp = p.delta_p() + RkT * (R[k + 1] - R[k]) * p_bc;
    // Velocity row.
    M.block<3, 3>(r + 3, 3 * k) = -RkT;
    M.block<3, 3>(r + 3, 3 * (k + 1)) = RkT;
    Vec3 rv = p.delta_v();
    const Mat3 Gp = 0.5 * dt * dt * RkT;
    const Mat3 Gv = dt * RkT;
    if (g_fixed) {
      M.block<3, 2>(r, g_col) = Gp * B;
      M.block<3, 2>(r + 3, g_col) = Gv * B;
      rp -= Gp * g0;
      rv -= Gv * g0;
    } else {
      M.block<3, 3>(r, g_col) = Gp;
      M.block<3, 3>(r + 3, g_col) = Gv;
    }
    rhs.segment<3>(r) = rp;
    rhs.segment<3>(r + 3) = rv;
  }

  // Column equilibration keeps the conditioning test meaningful.
  const Eigen::VectorXd scale = M.colwise().norm().cwiseMax(1e-12).cwiseInverse();
  const Eigen::MatrixXd Ms = M * scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ms, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (!(sv[sv.size() - 1] > 1e-8 * sv[0])) {
    throw Error(Errc::InsufficientExcitation,
                "velocity/gravity/scale system is rank deficient; motion lacks excitation");
  }
  const Eigen::VectorXd xs = svd.solve(rhs);
  const Eigen::VectorXd x = scale.asDiagonal() * xs;

  LinearAlignment out;
  for (Eigen::Index k = 0; k < n; ++k) out.velocities.push_back(x.segment<3>(3 * k));
  out.gravity = g_fixed ? Vec3(g0 + B * x.segment<2>(g_col)) : Vec3(x.segment<3>(g_col));
  out.scale = x[s_col];

  // Scale standard deviation with a floor on the residual level.
  const Eigen::Index dof = std::max<Eigen::Index>(M.rows() - cols, 1);
  const double sigma2 = std::max((M * x - rhs).squaredNorm() / dof, 1e-6);
  const Eigen::VectorXd vs = svd.matrixV().row(s_col).transpose();
  const double var_s = sigma2 * scale[s_col] * scale[s_col] *
                       vs.cwiseQuotient(sv).squaredNorm();
  out.scale_rel_std = std::sqrt(var_s) / std::abs(out.scale);
  return out;
}

}  // namespace

InitResult vi_initialize(std::span<const InitFrame> frames,
                         std::span<const Preintegration> segments, const FlowProvider& provider,
                         const PixelGrid& grid, const Intrinsics& K, const SensorConfig& sensors,
                         const WindowConfig& window, const InitOptions& options) {
  const std::size_t n = frames.size();
  if (n < 3 || segments.size() + 1 != n) {
    throw Error(Errc::InvalidArgument, "initialization needs at least three frames and one IMU "
                                       "segment between consecutive frames");
  }
  const Transform& T_cb = sensors.T_cb;
  const Transform T_bc = T_cb.inverse();

  // (a) Incremental visual-only DBA with gyro-seeded rotations.
  std::vector<Preintegration> seg(segments.begin(), segments.end());
  VisualWindow vw;
  std::vector<FlowMeasurement> flows;
  std::vector<EdgeRecord> records;
  Mat3 R_wb = Mat3::Identity();
  std::vector<Vec3> centers;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) R_wb = R_wb * seg[k - 1].delta_R();
    Vec3 c = Vec3::Zero();
    if (k >= 2) {
      c = 2.0 * centers[k - 1] - centers[k - 2];
    } else if (k == 1) {
      c = centers[0];
    }
    const Mat3 R_wc = R_wb * T_bc.rotation_matrix();
    const Transform T_cw = Transform(R_wc, c).inverse();
    vw.frames.push_back(frames[k].id);
    vw.poses.push_back(T_cw);
    DepthMap d;
    d.frame = frames[k].id;
    d.inv_depth = k == 0 ? Eigen::VectorXd::Constant(grid.size(), options.initial_inv_depth)
                         : vw.depths.back().inv_depth;
    vw.depths.push_back(d);

    if (k > 0) {
      const std::size_t lo = k > static_cast<std::size_t>(window.covis_range)
                                 ? k - static_cast<std::size_t>(window.covis_range)
                                 : 0;
      for (std::size_t j = lo; j < k; ++j) {
        for (const EdgeKey e : {EdgeKey{frames[j].id, frames[k].id},
                                EdgeKey{frames[k].id, frames[j].id}}) {
          const int is = vw.index_of(e.source);
          const int it = vw.index_of(e.target);
          FlowMeasurement m = provider.flow(e, vw.poses[is], vw.poses[it], vw.depths[is]);
          EdgeRecord rec;
          rec.key = e;
          rec.age = 1;
          rec.flow = m;
          records.push_back(std::move(rec));
          flows.push_back(std::move(m));
        }
      }
      solve_visual_only(vw, flows, options.dba_iterations, grid, K);
    }
    const Transform T_wc = vw.poses.back().inverse();
    R_wb = T_wc.rotation_matrix() * T_cb.rotation_matrix();
    centers.clear();
    for (const auto& T : vw.poses) centers.push_back(T.inverse().translation());
  }
  solve_visual_only(vw, flows, 2 * options.dba_iterations, grid, K);

  centers.clear();
  std::vector<Mat3> Rb;
  for (const auto& T : vw.poses) {
    const Transform T_wc = T.inverse();
    centers.push_back(T_wc.translation());
    Rb.push_back(T_wc.rotation_matrix() * T_cb.rotation_matrix());
  }

  // (b) Gyro bias from rotation alignment.
  Vec3 bg = seg.front().bias_gyro();
  for (int it = 0; it < options.bias_iterations; ++it) {
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const Mat3 dR = seg[k].corrected_delta_R(bg);
      const Vec3 r = so3_log(Mat3(dR.transpose() * Rb[k].transpose() * Rb[k + 1]));
      const Mat3& J = seg[k].dR_dbg();
      A += J.transpose() * J;
      b += J.transpose() * r;
    }
    bg += A.ldlt().solve(b);
    for (auto& s : seg) s = s.repropagate(Vec3::Zero(), bg);
  }

  // (c) Velocities, gravity and scale, first without the lever arm.
  LinearAlignment la = solve_alignment(centers, Rb, seg, Vec3::Zero(), std::nullopt);
  la = solve_alignment(centers, Rb, seg, T_bc.translation(), std::nullopt);

  // (d) Gravity magnitude refinement on the tangent plane.
  Vec3 g = la.gravity.normalized() * sensors.gravity.norm();
  for (int it = 0; it < options.gravity_refinements; ++it) {
    la = solve_alignment(centers, Rb, seg, T_bc.translation(), g);
    g = la.gravity.normalized() * sensors.gravity.norm();
  }
  if (!(la.scale > 0.0) || !(la.scale_rel_std <= options.max_scale_rel_std)) {
    throw Error(Errc::InsufficientExcitation,
                "scale " + std::to_string(la.scale) + " with relative std " +
                    std::to_string(la.scale_rel_std) + " is not observable");
  }

  // (e) Rescale, rotate gravity onto +z and zero the first heading.
  const Mat3 R_align0 =
      Quat::FromTwoVectors(g.normalized(), sensors.gravity.normalized()).toRotationMatrix();
  const Mat3 R0 = rot_z(-yaw_of(R_align0 * Rb[0])) * R_align0;

  InitResult out;
  out.scale = la.scale;
  out.scale_rel_std = la.scale_rel_std;
  out.gyro_bias = bg;
  out.gravity_visual = g;
  const Vec3 p0 = R0 * (la.scale * centers[0] - Rb[0] * T_bc.translation());
  for (std::size_t k = 0; k < n; ++k) {
    NavState x;
    x.t = frames[k].t;
    const Vec3 p = la.scale * centers[k] - Rb[k] * T_bc.translation();
    x.T = Transform(Mat3(R0 * Rb[k]), Vec3(R0 * p - p0));
    x.v = R0 * la.velocities[k];
    x.bg = bg;
    out.states.push_back(x);
    DepthMap d = vw.depths[k];
    d.inv_depth = (d.inv_depth / la.scale).cwiseMax(kLambdaMin);
    out.depths.push_back(std::move(d));
  }
  out.segments = std::move(seg);
  out.edges = std::move(records);
  return out;
}

}  // namespace dbaf
