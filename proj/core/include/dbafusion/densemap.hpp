#pragma once

#include <span>
#include <vector>

#include "dbafusion/camera.hpp"
#include "dbafusion/dba.hpp"

namespace dbaf {

struct DepthCheckOptions {
  int min_support = 2;
  /// Largest relative inverse-depth disagreement counted as support.
  double tau = 0.05;
};

struct DepthCheck {
  ValidMask keep;
  std::vector<int> support;  // agreeing neighbors per pixel
  int num_kept() const;
};

/// Multi-view consistency of a keyframe depth map. A pixel is kept when its
/// point lands inside at least `min_support` neighbors whose bilinearly
/// sampled inverse depth agrees within `tau`. Throws InsufficientNeighbors
/// with fewer than two neighbors.
DepthCheck depth_consistency_filter(const DepthMap& depth, const Transform& T_cw,
                                    std::span<const Transform> neighbor_poses,
                                    std::span<const DepthMap> neighbor_depths,
                                    const PixelGrid& grid, const Intrinsics& K,
                                    const DepthCheckOptions& options = {});

struct MapPoint {
  Vec3 xyz;
  FrameId keyframe = 0;
  int support = 0;
};

struct PointCloudMap {
  std::vector<MapPoint> points;
  std::size_t size() const { return points.size(); }
};

/// Back-projects the kept grid points into the world frame and appends them.
void accumulate_pointcloud(PointCloudMap& map, const DepthMap& depth, const Transform& T_cw,
                           const DepthCheck& check, const PixelGrid& grid, const Intrinsics& K);

}  // namespace dbaf
