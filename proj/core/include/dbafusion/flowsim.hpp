#pragma once

#include <cstdint>
#include <limits>
#include <map>

#include "dbafusion/camera.hpp"
#include "dbafusion/dba.hpp"

namespace dbaf {

/// Returned by mean_disparity when fewer than a quarter of the pixels reproject.
inline constexpr double kNotCovisible = std::numeric_limits<double>::infinity();

/// Mean reprojection displacement (pixels) of frame i's grid into frame j.
double mean_disparity(const Transform& Ti, const Transform& Tj, const DepthMap& depth_i,
                      const PixelGrid& grid, const Intrinsics& K);

/// Source of flow targets for co-visibility edges. Implementations must be
/// safe to call concurrently for distinct edges.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;

  virtual int max_edges_per_call() const { return 48; }

  /// `Ti`, `Tj` and `depth_i` are the current estimates of the edge's frames.
  virtual FlowMeasurement flow(const EdgeKey& edge, const Transform& Ti, const Transform& Tj,
                               const DepthMap& depth_i) const = 0;
};

struct FlowNoise {
  double sigma = 0.0;             // px, per axis
  double dynamic_fraction = 0.0;  // share of pixels given outlier flow
  double border_margin = 0.0;     // px; cosine weight taper near the border, 0 disables
};

/// Ground-truth camera poses (world-to-camera) and inverse depths per frame.
struct SyntheticScene {
  std::map<FrameId, Transform> poses;
  std::map<FrameId, Eigen::VectorXd> inv_depth;
  FlowNoise noise;

  const Transform& pose(FrameId id) const;
  const Eigen::VectorXd& depth(FrameId id) const;
};

/// Weight used for inliers when the noise level is zero.
inline constexpr double kNoiselessSigma = 1.0;
/// Weight given to dynamic (outlier) pixels.
inline constexpr double kDynamicWeight = 1e-8;

/// Reprojection of the true depths through the true poses plus Gaussian
/// noise. The random stream depends only on (seed, edge).
FlowMeasurement synthetic_flow(const EdgeKey& edge, const SyntheticScene& scene,
                               const PixelGrid& grid, const Intrinsics& K, std::uint64_t seed);

/// Oracle provider backed by a SyntheticScene. Ignores the current estimates.
class SyntheticFlowProvider : public FlowProvider {
 public:
  SyntheticFlowProvider(const SyntheticScene& scene, PixelGrid grid, Intrinsics K,
                        std::uint64_t seed, int max_edges = 48)
      : scene_(scene), grid_(std::move(grid)), K_(K), seed_(seed), max_edges_(max_edges) {}

  int max_edges_per_call() const override { return max_edges_; }
  FlowMeasurement flow(const EdgeKey& edge, const Transform& Ti, const Transform& Tj,
                       const DepthMap& depth_i) const override;

 private:
  const SyntheticScene& scene_;
  PixelGrid grid_;
  Intrinsics K_;
  std::uint64_t seed_;
  int max_edges_;
};

/// Mean |target - u_i| over valid pixels; kNotCovisible below 25% valid.
double flow_magnitude(const FlowMeasurement& meas, const PixelGrid& grid);

}  // namespace dbaf
