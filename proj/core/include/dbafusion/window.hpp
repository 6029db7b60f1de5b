#pragma once

#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dbafusion/dba.hpp"
#include "dbafusion/flowsim.hpp"
#include "dbafusion/graph.hpp"
#include "dbafusion/imu.hpp"
#include "dbafusion/measurements.hpp"

namespace dbaf {

struct WindowConfig {
  int window_size = 15;
  int covis_range = 5;
  std::vector<int> midrange_offsets{-8, -9, -10};
  int max_active_edges = 48;
  int max_midrange_per_kf = 1;
  /// Keyframe threshold in 1/8-resolution pixels.
  double keyframe_disparity_thresh = 2.5;
  int updates_per_epoch = 2;
  int extra_update_on_keyframe = 1;
  /// Flow updates after which an edge's flow is frozen.
  int edge_maturity = 6;
  /// Mid-range acceptance: disparity below factor x threshold and enough valid pixels.
  double midrange_disparity_factor = 2.0;
  double midrange_min_valid = 0.5;
  int init_keyframes = 8;
  int graph_iterations = 4;
  double gnss_align_distance = 10.0;
  /// Depth-only Gauss-Newton passes on a new frame before its first update.
  int new_depth_iterations = 3;

  /// Throws InvalidArgument on non-positive sizes or offsets outside the window.
  void validate() const;
};

/// keep iff disparity (1/8-resolution px) >= threshold.
bool select_keyframe(double disparity, const WindowConfig& cfg);

enum class EdgeStatus { Active, Mature, Marginalized };

struct EdgeRecord {
  EdgeKey key;
  int age = 0;  // flow updates received
  EdgeStatus status = EdgeStatus::Active;
  bool midrange = false;
  std::optional<FlowMeasurement> flow;
};

/// World-to-navigation transform restricted to heading and translation.
struct AlignmentState {
  enum class Status { Unaligned, Aligned };

  Status status = Status::Unaligned;
  double yaw = 0.0;
  Vec3 translation = Vec3::Zero();
  double trigger_distance = 10.0;

  Transform T_nw() const { return Transform(rot_z(yaw), translation); }
  bool aligned() const { return status == Status::Aligned; }
};

/// Closed-form 4-DOF fit of antenna positions T_wb * lever onto the fixes.
/// Throws DegenerateGeometry when the horizontal track is a point.
AlignmentState gnss_align(std::span<const Transform> T_wb, std::span<const Vec3> fixes,
                          const Vec3& lever, const AlignmentState& current = {});

struct SensorConfig {
  Transform T_cb;
  Vec3 gnss_lever = Vec3::Zero();
  Vec3 wheel_lever = Vec3::Zero();
  int wheel_axis = 1;
  double gnss_sigma = 0.05;
  double wheel_sigma = 0.05;
  std::optional<double> huber;
  ImuNoise imu_noise;
  Vec3 gravity = default_gravity();
  double max_imu_gap = 1.0;
  double bias_accel_limit = 1.0;
  double bias_gyro_limit = 0.2;
};

struct InitOptions {
  int dba_iterations = 8;
  int bias_iterations = 2;
  int gravity_refinements = 4;
  /// Largest accepted relative standard deviation of the scale estimate.
  double max_scale_rel_std = 0.05;
  double initial_inv_depth = 0.15;
};

struct InitFrame {
  FrameId id = 0;
  double t = 0.0;
};

struct InitResult {
  std::vector<NavState> states;  // gravity-aligned, metric
  std::vector<DepthMap> depths;
  std::vector<Preintegration> segments;  // re-integrated at the estimated gyro bias
  std::vector<EdgeRecord> edges;
  double scale = 1.0;  // metric / visual
  double scale_rel_std = 0.0;
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 gravity_visual = Vec3::Zero();  // gravity in the visual frame, before alignment
};

/// Visual-only DBA, gyro bias, linear velocity/gravity/scale solve, gravity
/// refinement, then rescaling and gravity alignment. `segments[k]` spans
/// frames k and k+1. Throws InsufficientExcitation when scale is not observable.
InitResult vi_initialize(std::span<const InitFrame> frames,
                         std::span<const Preintegration> segments, const FlowProvider& provider,
                         const PixelGrid& grid, const Intrinsics& K, const SensorConfig& sensors,
                         const WindowConfig& window, const InitOptions& options = {});

struct FrameInput {
  FrameId id = 0;
  double t = 0.0;
  /// Samples from the previous frame time to this one, both ends included.
  std::vector<ImuSample> imu;
  std::optional<GnssFix> gnss;
  std::optional<WheelSpeed> wheel;
};

/// Wall-clock seconds per stage, named after the usual runtime breakdown.
struct StageTiming {
  double flow = 0.0;
  double hessian = 0.0;
  double optimization = 0.0;
  double depth_update = 0.0;
  double marginalization = 0.0;

  StageTiming& operator+=(const StageTiming& o);
};

struct EpochReport {
  FrameId frame = 0;
  bool initialized = false;
  bool initialized_now = false;
  bool keyframe = false;
  int marginalizations = 0;
  bool aligned_now = false;
  int window_size = 0;
  int active_edges = 0;  // most edges refreshed in one update round
  int total_edges = 0;
  int midrange_added = 0;
  double disparity = 0.0;  // 1/8-resolution px
  std::optional<NavState> estimate;
  StageTiming timing;
};

struct MarginalizedKeyframe {
  FrameId id = 0;
  double t = 0.0;
  Transform T_cw;
  DepthMap depth;
  std::vector<Transform> neighbor_poses;
  std::vector<DepthMap> neighbor_depths;
};

/// Non-keyframe removed from the window, kept as a pose relative to the
/// keyframe before it.
struct DroppedFrame {
  FrameId id = 0;
  FrameId anchor = 0;
  Transform T_anchor_frame;  // T_wb(anchor)^-1 T_wb(frame)
};

struct EstimatorConfig {
  WindowConfig window;
  SensorConfig sensors;
  InitOptions init;
  bool use_gnss = false;
  bool use_wheel = false;
  int init_refine_rounds = 6;
};

/// Sliding-window fusion pipeline, one frame per call.
class Estimator {
 public:
  Estimator(EstimatorConfig cfg, const FlowProvider& provider, PixelGrid grid, Intrinsics K);

  /// Buffers frames until the initializer succeeds, then tracks.
  EpochReport process_frame(const FrameInput& frame);
  /// Tracking step; throws NotInitialized before initialization.
  EpochReport track(const FrameInput& frame);

  bool initialized() const { return initialized_; }
  const FactorGraph& graph() const { return graph_; }
  const std::vector<EdgeRecord>& edges() const { return edges_; }
  const std::map<FrameId, DepthMap>& depths() const { return depths_; }
  const AlignmentState& alignment() const { return alignment_; }
  const std::optional<InitResult>& init_result() const { return init_result_; }
  /// States of the initialization keyframes right after initialization.
  const std::vector<std::pair<FrameId, NavState>>& init_outputs() const { return init_outputs_; }
  /// Keyframes marginalized since the last call.
  std::vector<MarginalizedKeyframe> take_marginalized();
  /// Keyframes still in the window.
  std::vector<MarginalizedKeyframe> window_keyframes() const;
  const std::vector<DroppedFrame>& dropped() const { return dropped_; }
  Transform camera_pose_of(FrameId id) const;

 private:
  struct Pending {
    FrameId id;
    double t;
    std::vector<ImuSample> imu;  // since the last buffered keyframe
    std::optional<GnssFix> gnss;
    std::optional<WheelSpeed> wheel;
  };

  void try_initialize(EpochReport& report);
  void add_sensor_factors(FrameId id, const std::optional<GnssFix>& gnss,
                          const std::optional<WheelSpeed>& wheel, const Vec3& gyro);
  /// Returns the number of edges whose flow was refreshed.
  int update_round(StageTiming& timing);
  DepthMap warp_depth(FrameId from, FrameId to) const;
  int add_edges_for(FrameId id);
  void refine_new_depth(FrameId id, StageTiming& timing);
  void drop_frame(FrameId id);
  void marginalize_oldest(StageTiming& timing);
  void maybe_align(EpochReport& report);
  VisualWindow visual_window() const;
  std::vector<FlowMeasurement> edge_flows() const;

  EstimatorConfig cfg_;
  const FlowProvider& provider_;
  PixelGrid grid_;
  Intrinsics K_;

  bool initialized_ = false;
  std::vector<Pending> pending_;
  std::vector<ImuSample> pending_imu_;  // samples since the last buffered keyframe
  std::optional<InitResult> init_result_;
  std::vector<std::pair<FrameId, NavState>> init_outputs_;

  FactorGraph graph_;
  std::map<FrameId, DepthMap> depths_;
  std::map<FrameId, Preintegration> segments_;  // keyed by the later frame
  std::map<FrameId, Vec3> frame_gyro_;
  std::vector<EdgeRecord> edges_;
  std::map<FrameId, double> times_;
  AlignmentState alignment_;
  std::vector<std::pair<FrameId, GnssFix>> align_buffer_;
  std::map<FrameId, Transform> align_poses_;
  std::vector<MarginalizedKeyframe> marginalized_;
  std::vector<DroppedFrame> dropped_;
};

}  // namespace dbaf
