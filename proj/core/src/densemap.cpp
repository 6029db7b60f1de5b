#include "dbafusion/densemap.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

/// Bilinear sample of a grid field at a full-resolution pixel.
std::optional<double> sample(const Eigen::VectorXd& field, const PixelGrid& grid, const Vec2& u) {
  const double half = 0.5 * (kGridStep - 1);
  const double fc = (u.x() - half) / kGridStep;
  const double fr = (u.y() - half) / kGridStep;
  if (!(fc >= 0.0 && fr >= 0.0 && fc <= grid.cols - 1 && fr <= grid.rows - 1)) return {};
  const int c0 = std::min(static_cast<int>(fc), grid.cols - 2);
  const int r0 = std::min(static_cast<int>(fr), grid.rows - 2);
  const double a = fc - c0, b = fr - r0;
  return (1 - a) * (1 - b) * field[grid.index(r0, c0)] + a * (1 - b) * field[grid.index(r0, c0 + 1)] +
         (1 - a) * b * field[grid.index(r0 + 1, c0)] + a * b * field[grid.index(r0 + 1, c0 + 1)];
}

}  // namespace

int DepthCheck::num_kept() const {
  return static_cast<int>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

DepthCheck depth_consistency_filter(const DepthMap& depth, const Transform& T_cw,
                                    std::span<const Transform> neighbor_poses,
                                    std::span<const DepthMap> neighbor_depths,
                                    const PixelGrid& grid, const Intrinsics& K,
                                    const DepthCheckOptions& options) {
  if (neighbor_poses.size() != neighbor_depths.size()) {
    throw Error(Errc::InvalidArgument, "neighbor poses and depths differ in count");
  }
  if (neighbor_poses.size() < 2) {
    throw Error(Errc::InsufficientNeighbors, "depth check needs at least two neighbor keyframes");
  }
  const auto n = static_cast<std::size_t>(grid.size());
  if (static_cast<std::size_t>(depth.inv_depth.size()) != n) {
    throw Error(Errc::InvalidArgument, "depth map does not match the grid");
  }
  DepthCheck out;
  out.support.assign(n, 0);
  out.keep.assign(n, 0);
  const Transform T_wc = T_cw.inverse();
  for (std::size_t j = 0; j < neighbor_poses.size(); ++j) {
    const Transform Tji = neighbor_poses[j] * T_wc;
    const Mat3 R = Tji.rotation_matrix();
    const Vec3& t = Tji.translation();
    for (std::size_t p = 0; p < n; ++p) {
      const double lam = depth.inv_depth[static_cast<Eigen::Index>(p)];
      if (!(lam > 0.0)) continue;
      const Vec2 u = grid.coords.col(static_cast<Eigen::Index>(p));
      const Vec3 ray((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0);
      const Vec3 X = R * ray + t * lam;  // scaled by lam
      if (!(X.z() > kDepthMin * lam)) continue;
      const Vec2 uj(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy);
      const auto observed = sample(neighbor_depths[j].inv_depth, grid, uj);
      if (!observed || !(*observed > 0.0)) continue;
      const double predicted = lam / X.z();
      if (std::abs(predicted - *observed) < options.tau * *observed) ++out.support[p];
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    out.keep[p] = out.support[p] >= options.min_support ? 1 : 0;
  }
  return out;
}

void accumulate_pointcloud(PointCloudMap& map, const DepthMap& depth, const Transform& T_cw,
                           const DepthCheck& check, const PixelGrid& grid, const Intrinsics& K) {
  const Transform T_wc = T_cw.inverse();
  for (int p = 0; p < grid.size(); ++p) {
    if (!check.keep[static_cast<std::size_t>(p)]) continue;
    const Vec3 X = backproject(grid.coords.col(p), depth.inv_depth[p], K);
    map.points.push_back({T_wc * X, depth.frame, check.support[static_cast<std::size_t>(p)]});
  }
}

}  // namespace dbaf
