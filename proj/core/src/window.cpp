#include "dbafusion/window.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include <tbb/parallel_for.h>

#include "dbafusion/error.hpp"
#include "dbafusion/simulation.hpp"

namespace dbaf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool edge_touches(const EdgeRecord& e, FrameId id) {
  return e.key.source == id || e.key.target == id;
}

/// Newest edges first.
bool newer(const EdgeKey& a, const EdgeKey& b) {
  const auto ha = std::max(a.source, a.target), hb = std::max(b.source, b.target);
  if (ha != hb) return ha > hb;
  const auto la = std::min(a.source, a.target), lb = std::min(b.source, b.target);
  if (la != lb) return la > lb;
  return a.source > b.source;
}

}  // namespace

void WindowConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(Errc::InvalidArgument, what);
  };
  require(window_size >= 3, "window_size must be at least 3");
  require(covis_range > 0, "covis_range must be positive");
  require(max_active_edges > 0, "max_active_edges must be positive");
  require(max_midrange_per_kf >= 0, "max_midrange_per_kf must be non-negative");
  require(keyframe_disparity_thresh > 0.0, "keyframe_disparity_thresh must be positive");
  require(updates_per_epoch > 0, "updates_per_epoch must be positive");
  require(extra_update_on_keyframe >= 0, "extra_update_on_keyframe must be non-negative");
  require(edge_maturity > 0, "edge_maturity must be positive");
  require(init_keyframes >= 3 && init_keyframes <= window_size,
          "init_keyframes must lie in [3, window_size]");
  require(graph_iterations > 0, "graph_iterations must be positive");
  require(new_depth_iterations >= 0, "new_depth_iterations must be non-negative");
  require(gnss_align_distance > 0.0, "gnss_align_distance must be positive");
  for (int off : midrange_offsets) {
    require(off < 0 && -off < window_size, "mid-range offsets must lie inside the window");
  }
}

bool select_keyframe(double disparity, const WindowConfig& cfg) {
  return disparity >= cfg.keyframe_disparity_thresh;
}

AlignmentState gnss_align(std::span<const Transform> T_wb, std::span<const Vec3> fixes,
                          const Vec3& lever, const AlignmentState& current) {
  if (current.aligned()) return current;
  if (T_wb.size() != fixes.size() || T_wb.empty()) {
    throw Error(Errc::InvalidArgument, "alignment needs matching, non-empty pose and fix lists");
  }
  const auto n = static_cast<double>(T_wb.size());
  std::vector<Vec3> a(T_wb.size());
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < T_wb.size(); ++i) {
    a[i] = T_wb[i] * lever;
    ca += a[i];
    cb += fixes[i];
  }
  ca /= n;
  cb /= n;
  double cross = 0.0, dot = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 da = a[i] - ca;
    const Vec3 db = fixes[i] - cb;
    cross += da.x() * db.y() - da.y() * db.x();
    dot += da.x() * db.x() + da.y() * db.y();
    spread += da.head<2>().squaredNorm();
  }
  if (spread / n < 1e-6) {
    throw Error(Errc::DegenerateGeometry, "horizontal track is effectively a single point");
  }
  AlignmentState out = current;
  out.status = AlignmentState::Status::Aligned;
  out.yaw = std::atan2(cross, dot);
  out.translation = cb - rot_z(out.yaw) * ca;
  return out;
}

StageTiming& StageTiming::operator+=(const StageTiming& o) {
  flow += o.flow;
  hessian += o.hessian;
  optimization += o.optimization;
  depth_update += o.depth_update;
  marginalization += o.marginalization;
  return *this;
}

Estimator::Estimator(EstimatorConfig cfg, const FlowProvider& provider, PixelGrid grid,
                     Intrinsics K)
    : cfg_(std::move(cfg)),
      provider_(provider),
      grid_(std::move(grid)),
      K_(K),
      graph_(cfg_.sensors.T_cb, cfg_.sensors.gravity) {
  cfg_.window.validate();
  alignment_.trigger_distance = cfg_.window.gnss_align_distance;
}

Transform Estimator::camera_pose_of(FrameId id) const {
  return camera_pose(graph_.state(id).T, cfg_.sensors.T_cb);
}

EpochReport Estimator::process_frame(const FrameInput& frame) {
  if (initialized_) return track(frame);

  EpochReport report;
  report.frame = frame.id;
  if (pending_.empty()) {
    pending_.push_back({frame.id, frame.t, {}, frame.gnss, frame.wheel});
    pending_imu_.clear();
    if (!frame.imu.empty()) pending_imu_.push_back(frame.imu.back());
    report.keyframe = true;
    return report;
  }
  for (const auto& s : frame.imu) {
    if (!pending_imu_.empty() && s.t <= pending_imu_.back().t + 1e-9) continue;
    pending_imu_.push_back(s);
  }

  // Keyframes before initialization are picked by raw flow magnitude.
  const Pending& last = pending_.back();
  DepthMap guess{last.id, Eigen::VectorXd::Constant(grid_.size(), cfg_.init.initial_inv_depth)};
  const FlowMeasurement m =
      provider_.flow({last.id, frame.id}, Transform(), Transform(), guess);
  report.disparity = flow_magnitude(m, grid_) / kGridStep;
  if (select_keyframe(report.disparity, cfg_.window) && pending_imu_.size() >= 2) {
    pending_.push_back({frame.id, frame.t, pending_imu_, frame.gnss, frame.wheel});
    pending_imu_ = {pending_imu_.back()};
    report.keyframe = true;
  }
  if (static_cast<int>(pending_.size()) >= cfg_.window.init_keyframes) try_initialize(report);
  report.initialized = initialized_;
  return report;
}

void Estimator::try_initialize(EpochReport& report) {
  std::vector<InitFrame> frames;
  std::vector<Preintegration> segments;
  for (std::size_t k = 0; k < pending_.size(); ++k) {
    frames.push_back({pending_[k].id, pending_[k].t});
    if (k > 0) {
      segments.emplace_back(pending_[k].imu, Vec3::Zero(), Vec3::Zero(), cfg_.sensors.imu_noise);
    }
  }
  InitResult res;
  try {
    res = vi_initialize(frames, segments, provider_, grid_, K_, cfg_.sensors, cfg_.window,
                        cfg_.init);
  } catch (const Error& e) {
    if (e.code() != Errc::InsufficientExcitation) throw;
    // Slide the buffer and retry with the next keyframe.
    pending_.erase(pending_.begin());
    return;
  }

  const auto& S = cfg_.sensors;
  graph_ = FactorGraph(S.T_cb, S.gravity);
  for (std::size_t k = 0; k < pending_.size(); ++k) {
    const FrameId id = pending_[k].id;
    graph_.add_state(id, res.states[k]);
    depths_[id] = res.depths[k];
    times_[id] = pending_[k].t;
    frame_gyro_[id] = k > 0 ? pending_[k].imu.back().gyro : pending_[1].imu.front().gyro;
    if (k > 0) {
      segments_[id] = res.segments[k - 1];
      graph_.add_imu_factor(pending_[k - 1].id, id, res.segments[k - 1]);
    }
  }
  for (const auto& p : pending_) add_sensor_factors(p.id, p.gnss, p.wheel, frame_gyro_[p.id]);

  // Position and heading of the first state fix the gauge. Tilt, velocity
  // and biases only get weak priors.
  Vec15 sigma;
  sigma << 1e-3, 1e-3, 1e-3, 0.05, 0.05, 1e-3, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.01, 0.01, 0.01;
  const Eigen::MatrixXd H = sigma.cwiseInverse().cwiseAbs2().asDiagonal();
  graph_.add_factor(std::make_shared<PriorFactor>(
      std::vector<StateKey>{pending_.front().id},
      std::vector<NavState>{graph_.state(pending_.front().id)}, H, Eigen::VectorXd::Zero(15)));

  edges_ = res.edges;
  initialized_ = true;
  report.initialized_now = true;
  for (int r = 0; r < cfg_.init_refine_rounds; ++r) {
    report.active_edges = std::max(report.active_edges, update_round(report.timing));
  }

  init_outputs_.clear();
  for (StateKey k : graph_.keys()) init_outputs_.emplace_back(k, graph_.state(k));
  init_result_ = std::move(res);
  pending_.clear();
  pending_imu_.clear();
  maybe_align(report);
  report.estimate = graph_.state(graph_.keys().back());
  report.window_size = static_cast<int>(graph_.size());
  report.total_edges = static_cast<int>(edges_.size());
}

void Estimator::add_sensor_factors(FrameId id, const std::optional<GnssFix>& gnss,
                                   const std::optional<WheelSpeed>& wheel, const Vec3& gyro) {
  const auto& S = cfg_.sensors;
  if (cfg_.use_gnss && gnss) {
    align_buffer_.emplace_back(id, *gnss);
    graph_.add_gnss_factor(id, *gnss, S.gnss_lever, S.gnss_sigma, true, S.huber);
  }
  if (cfg_.use_wheel && wheel) {
    graph_.add_wheel_factor(id, wheel->v, gyro, S.wheel_lever, S.wheel_sigma, S.wheel_axis,
                            S.huber);
  }
}

EpochReport Estimator::track(const FrameInput& frame) {
  if (!initialized_) {
    throw Error(Errc::NotInitialized, "tracking frame " + std::to_string(frame.id) +
                                          " before visual-inertial initialization");
  }
  EpochReport report;
  report.frame = frame.id;
  report.initialized = true;
  const auto& S = cfg_.sensors;

  const FrameId last = graph_.keys().back();
  const NavState& xl = graph_.state(last);
  NavState xn = predict_state(xl, frame.imu, S.gravity, S.max_imu_gap);
  xn.t = frame.t;
  Preintegration pre(frame.imu, xl.ba, xl.bg, S.imu_noise);
  graph_.add_state(frame.id, xn);
  times_[frame.id] = frame.t;
  segments_[frame.id] = pre;
  graph_.add_imu_factor(last, frame.id, std::move(pre));
  frame_gyro_[frame.id] = frame.imu.back().gyro;
  add_sensor_factors(frame.id, frame.gnss, frame.wheel, frame_gyro_[frame.id]);
  depths_[frame.id] = warp_depth(last, frame.id);
  report.midrange_added = add_edges_for(frame.id);
  refine_new_depth(frame.id, report.timing);

  for (int u = 0; u < cfg_.window.updates_per_epoch; ++u) {
    report.active_edges = std::max(report.active_edges, update_round(report.timing));
  }

  const auto& keys = graph_.keys();
  bool keep = true;
  if (keys.size() >= 3) {
    const FrameId s = keys[keys.size() - 2];
    const FrameId q = keys[keys.size() - 3];
    report.disparity =
        mean_disparity(camera_pose_of(q), camera_pose_of(s), depths_.at(q), grid_, K_) /
        kGridStep;
    keep = select_keyframe(report.disparity, cfg_.window);
    // States tied into a prior cannot be dropped without marginalizing them.
    for (const auto& f : graph_.factors()) {
      if (f->kind() != FactorKind::Prior) continue;
      const auto& fk = f->keys();
      if (std::find(fk.begin(), fk.end(), s) != fk.end()) keep = true;
    }
    if (!keep) drop_frame(s);
  }
  report.keyframe = keep;
  if (keep) {
    for (int u = 0; u < cfg_.window.extra_update_on_keyframe; ++u) {
      report.active_edges = std::max(report.active_edges, update_round(report.timing));
    }
    while (static_cast<int>(graph_.size()) > cfg_.window.window_size) {
      marginalize_oldest(report.timing);
      ++report.marginalizations;
    }
  }
  maybe_align(report);

  report.estimate = graph_.state(frame.id);
  report.window_size = static_cast<int>(graph_.size());
  report.total_edges = static_cast<int>(edges_.size());
  return report;
}

DepthMap Estimator::warp_depth(FrameId from, FrameId to) const {
  const Transform Tij = camera_pose_of(to) * camera_pose_of(from).inverse();
  const Mat3 R = Tij.rotation_matrix();
  const Vec3& t = Tij.translation();
  const Eigen::VectorXd& lam = depths_.at(from).inv_depth;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid_.size());
  const double half = 0.5 * (kGridStep - 1);
  for (int p = 0; p < grid_.size(); ++p) {
    const Vec2 u = grid_.coords.col(p);
    const Vec3 ray((u.x() - K_.cx) / K_.fx, (u.y() - K_.cy) / K_.fy, 1.0);
    const Vec3 X = R * ray + t * lam[p];
    if (!(X.z() > kDepthMin * lam[p])) continue;
    const double uu = K_.fx * X.x() / X.z() + K_.cx;
    const double vv = K_.fy * X.y() / X.z() + K_.cy;
    const int c = static_cast<int>(std::lround((uu - half) / kGridStep));
    const int r = static_cast<int>(std::lround((vv - half) / kGridStep));
    if (c < 0 || r < 0 || c >= grid_.cols || r >= grid_.rows) continue;
    // Keep the nearest surface when several points land in one cell.
    const int q = grid_.index(r, c);
    out[q] = std::max(out[q], lam[p] / X.z());
  }
  std::vector<double> filled;
  for (int p = 0; p < grid_.size(); ++p) {
    if (out[p] > 0.0) filled.push_back(out[p]);
  }
  DepthMap d;
  d.frame = to;
  if (filled.empty()) {
    d.inv_depth = lam;
    return d;
  }
  std::nth_element(filled.begin(), filled.begin() + filled.size() / 2, filled.end());
  const double median = filled[filled.size() / 2];
  for (int p = 0; p < grid_.size(); ++p) {
    if (!(out[p] > 0.0)) out[p] = median;
  }
  d.inv_depth = out.cwiseMax(kLambdaMin);
  return d;
}

int Estimator::add_edges_for(FrameId id) {
  const auto& keys = graph_.keys();
  const auto n = static_cast<int>(keys.size());
  auto exists = [&](FrameId s, FrameId t) {
    return std::any_of(edges_.begin(), edges_.end(), [&](const EdgeRecord& e) {
      return e.key.source == s && e.key.target == t;
    });
  };
  const Transform T_new = camera_pose_of(id);
  for (int j = std::max(0, n - 1 - cfg_.window.covis_range); j < n - 1; ++j) {
    const FrameId other = keys[j];
    const Transform T_other = camera_pose_of(other);
    if (mean_disparity(T_other, T_new, depths_.at(other), grid_, K_) == kNotCovisible) continue;
    for (const EdgeKey e : {EdgeKey{other, id}, EdgeKey{id, other}}) {
      if (!exists(e.source, e.target)) edges_.push_back({e, 0, EdgeStatus::Active, false, {}});
    }
  }

  int added = 0;
  for (int off : cfg_.window.midrange_offsets) {
    if (added >= cfg_.window.max_midrange_per_kf) break;
    const int idx = n - 1 + off;
    if (idx < 0) continue;
    const FrameId other = keys[idx];
    if (exists(other, id)) continue;
    const Reprojection rp =
        reproject(grid_, depths_.at(other).inv_depth, camera_pose_of(other), T_new, K_);
    const int valid = rp.num_valid();
    if (valid < cfg_.window.midrange_min_valid * grid_.size() || valid == 0) continue;
    double sum = 0.0;
    for (int p = 0; p < grid_.size(); ++p) {
      if (rp.valid[p]) sum += (rp.flow.segment<2>(2 * p) - grid_.coords.col(p)).norm();
    }
    const double disparity = sum / valid / kGridStep;
    if (disparity >= cfg_.window.midrange_disparity_factor * cfg_.window.keyframe_disparity_thresh) {
      continue;
    }
    edges_.push_back({{other, id}, 0, EdgeStatus::Active, true, {}});
    ++added;
  }
  return added;
}

void Estimator::refine_new_depth(FrameId id, StageTiming& timing) {
  if (cfg_.window.new_depth_iterations <= 0) return;
  auto t0 = Clock::now();
  std::vector<EdgeRecord*> outgoing;
  for (auto& e : edges_) {
    if (e.key.source == id) outgoing.push_back(&e);
  }
  if (outgoing.empty()) return;
  const Transform Ti = camera_pose_of(id);
  tbb::parallel_for(std::size_t{0}, outgoing.size(), [&](std::size_t r) {
    EdgeRecord& e = *outgoing[r];
    e.flow = provider_.flow(e.key, Ti, camera_pose_of(e.key.target), depths_.at(id));
  });
  timing.flow += seconds_since(t0);

  // Poses held fixed: each pass is a per-pixel Gauss-Newton step on depth.
  t0 = Clock::now();
  DepthMap& depth = depths_.at(id);
  for (int it = 0; it < cfg_.window.new_depth_iterations; ++it) {
    std::vector<EdgeBlocks> blocks;
    for (const EdgeRecord* e : outgoing) {
      blocks.push_back(linearize_edge(*e->flow, Ti, camera_pose_of(e->key.target), depth, grid_, K_));
    }
    const FrameSystem sys = assemble_frame_system(id, blocks);
    apply_depth_increment(depth, update_depths(sys, Eigen::VectorXd::Zero(6 * sys.num_poses())));
  }
  timing.depth_update += seconds_since(t0);
}

VisualWindow Estimator::visual_window() const {
  VisualWindow vw;
  for (StateKey k : graph_.keys()) {
    vw.frames.push_back(k);
    vw.poses.push_back(camera_pose_of(k));
    vw.depths.push_back(depths_.at(k));
  }
  return vw;
}

std::vector<FlowMeasurement> Estimator::edge_flows() const {
  std::vector<FlowMeasurement> out;
  out.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (e.flow) out.push_back(*e.flow);
  }
  return out;
}

int Estimator::update_round(StageTiming& timing) {
  auto t0 = Clock::now();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i].status == EdgeStatus::Active) active.push_back(i);
  }
  std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
    return newer(edges_[a].key, edges_[b].key);
  });
  const auto budget = static_cast<std::size_t>(
      std::min(cfg_.window.max_active_edges, provider_.max_edges_per_call()));
  for (std::size_t r = budget; r < active.size(); ++r) {
    // Edges pushed out of the priority set keep their last flow.
    if (edges_[active[r]].flow) edges_[active[r]].status = EdgeStatus::Mature;
  }
  if (active.size() > budget) active.resize(budget);
  tbb::parallel_for(std::size_t{0}, active.size(), [&](std::size_t r) {
    EdgeRecord& e = edges_[active[r]];
    e.flow = provider_.flow(e.key, camera_pose_of(e.key.source), camera_pose_of(e.key.target),
                            depths_.at(e.key.source));
    if (++e.age >= cfg_.window.edge_maturity) e.status = EdgeStatus::Mature;
  });
  timing.flow += seconds_since(t0);

  t0 = Clock::now();
  const VisualWindow vw = visual_window();
  const std::vector<FlowMeasurement> flows = edge_flows();
  std::optional<WindowLinearization> lin;
  if (!flows.empty()) lin = linearize_window(vw, flows, grid_, K_);
  timing.hessian += seconds_since(t0);

  t0 = Clock::now();
  graph_.remove_factors(FactorKind::Visual);
  if (lin) graph_.add_visual_factor(lin->combined);
  graph_.optimize(cfg_.window.graph_iterations);
  for (StateKey k : graph_.keys()) {
    NavState x = graph_.state(k);
    x.saturate_biases(cfg_.sensors.bias_accel_limit, cfg_.sensors.bias_gyro_limit);
    graph_.set_state(k, x);
  }
  timing.optimization += seconds_since(t0);

  t0 = Clock::now();
  if (lin) {
    std::map<FrameId, Twist> increments;
    for (std::size_t k = 0; k < vw.size(); ++k) {
      increments[vw.frames[k]] = se3_log(camera_pose_of(vw.frames[k]) * vw.poses[k].inverse());
    }
    for (const auto& sys : lin->systems) {
      Eigen::VectorXd xi(6 * sys.num_poses());
      for (int k = 0; k < sys.num_poses(); ++k) xi.segment<6>(6 * k) = increments[sys.poses[k]];
      apply_depth_increment(depths_.at(sys.anchor), update_depths(sys, xi));
    }
  }
  timing.depth_update += seconds_since(t0);
  return static_cast<int>(active.size());
}

void Estimator::drop_frame(FrameId s) {
  const auto& keys = graph_.keys();
  const auto it = std::find(keys.begin(), keys.end(), s);
  const FrameId prev = *(it - 1);
  const FrameId next = *(it + 1);

  std::erase_if(edges_, [s](const EdgeRecord& e) { return edge_touches(e, s); });
  align_poses_[s] = graph_.state(s).T;
  dropped_.push_back({s, prev, graph_.state(prev).T.inverse() * graph_.state(s).T});
  graph_.remove_factors_touching(s);
  graph_.remove_state(s);

  const NavState& xp = graph_.state(prev);
  Preintegration merged =
      Preintegration::merge(segments_.at(s), segments_.at(next)).repropagate(xp.ba, xp.bg);
  segments_[next] = merged;
  graph_.add_imu_factor(prev, next, std::move(merged));
  segments_.erase(s);
  depths_.erase(s);
  frame_gyro_.erase(s);
  times_.erase(s);
}

void Estimator::marginalize_oldest(StageTiming& timing) {
  const auto t0 = Clock::now();
  const FrameId o = graph_.keys().front();

  std::vector<EdgeBlocks> blocks;
  for (const auto& e : edges_) {
    if (e.key.source != o || !e.flow) continue;
    blocks.push_back(linearize_edge(*e.flow, camera_pose_of(o), camera_pose_of(e.key.target),
                                    depths_.at(o), grid_, K_));
  }
  std::optional<VisualConstraint> mvc;
  if (!blocks.empty()) mvc = marginal_visual_constraint(o, blocks);

  MarginalizedKeyframe mk;
  mk.id = o;
  mk.t = times_.at(o);
  mk.T_cw = camera_pose_of(o);
  mk.depth = depths_.at(o);
  const auto& keys = graph_.keys();
  for (std::size_t k = 1; k < keys.size() && k <= 4; ++k) {
    mk.neighbor_poses.push_back(camera_pose_of(keys[k]));
    mk.neighbor_depths.push_back(depths_.at(keys[k]));
  }
  marginalized_.push_back(std::move(mk));
  align_poses_[o] = graph_.state(o).T;

  graph_.marginalize(o, mvc);
  std::erase_if(edges_, [o](const EdgeRecord& e) { return edge_touches(e, o); });
  depths_.erase(o);
  segments_.erase(o);
  frame_gyro_.erase(o);
  times_.erase(o);
  timing.marginalization += seconds_since(t0);
}

void Estimator::maybe_align(EpochReport& report) {
  if (!cfg_.use_gnss || alignment_.aligned() || align_buffer_.size() < 3) return;
  std::vector<Transform> poses;
  std::vector<Vec3> fixes;
  double travelled = 0.0;
  for (const auto& [id, fix] : align_buffer_) {
    Transform T;
    if (graph_.has_state(id)) {
      T = graph_.state(id).T;
    } else if (const auto it = align_poses_.find(id); it != align_poses_.end()) {
      T = it->second;
    } else {
      continue;
    }
    if (!poses.empty()) travelled += (T.translation() - poses.back().translation()).norm();
    poses.push_back(T);
    fixes.push_back(fix.p);
  }
  if (poses.size() < 3 || travelled <= alignment_.trigger_distance) return;
  try {
    alignment_ = gnss_align(poses, fixes, cfg_.sensors.gnss_lever, alignment_);
  } catch (const Error& e) {
    if (e.code() == Errc::DegenerateGeometry) return;
    throw;
  }
  graph_.set_nav_alignment(alignment_.T_nw());
  report.aligned_now = true;
}

std::vector<MarginalizedKeyframe> Estimator::take_marginalized() {
  std::vector<MarginalizedKeyframe> out;
  out.swap(marginalized_);
  return out;
}

std::vector<MarginalizedKeyframe> Estimator::window_keyframes() const {
  std::vector<MarginalizedKeyframe> out;
  const auto& keys = graph_.keys();
  for (std::size_t k = 0; k < keys.size(); ++k) {
    MarginalizedKeyframe mk;
    mk.id = keys[k];
    mk.t = times_.at(keys[k]);
    mk.T_cw = camera_pose_of(keys[k]);
    mk.depth = depths_.at(keys[k]);
    for (std::size_t j = 0; j < keys.size(); ++j) {
      if (j == k || (j > k ? j - k : k - j) > 4) continue;
      mk.neighbor_poses.push_back(camera_pose_of(keys[j]));
      mk.neighbor_depths.push_back(depths_.at(keys[j]));
    }
    out.push_back(std::move(mk));
  }
  return out;
}

}  // namespace dbaf
