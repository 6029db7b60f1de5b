#include "dbafusion/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>

#include "dbafusion/error.hpp"
#include "dbafusion/evaluation.hpp"
#include "dbafusion/simulation.hpp"

namespace dbaf {

Scheme parse_scheme(const std::string& name) {
  if (name == "vio") return Scheme::Vio;
  if (name == "vio+gnss") return Scheme::VioGnss;
  if (name == "vio+wss") return Scheme::VioWss;
  if (name == "all") return Scheme::All;
  throw Error(Errc::InvalidArgument, "unknown scheme '" + name + "'");
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Vio: return "vio";
    case Scheme::VioGnss: return "vio+gnss";
    case Scheme::VioWss: return "vio+wss";
    case Scheme::All: return "all";
  }
  return "all";
}

namespace {

std::vector<MovingSphere> make_objects(const RunConfig& cfg) {
  std::vector<MovingSphere> out;
  std::mt19937_64 rng(cfg.sim.seed ^ 0x5bd1e995u);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < cfg.dynamic_objects; ++i) {
    // Placed ahead of the platform at a random time, crossing its path.
    const double t = cfg.sim.duration * (i + 0.5) / cfg.dynamic_objects;
    const Transform T = reference_pose(cfg.sim.motion, t);
    const Vec3 ahead = T * Vec3(0.0, 6.0, 0.0);
    MovingSphere s;
    s.radius = 1.0;
    const double heading = 2.0 * std::numbers::pi * unit(rng);
    s.velocity = 3.0 * Vec3(std::cos(heading), std::sin(heading), 0.0);
    s.center = Vec3(ahead.x(), ahead.y(), cfg.sim.terrain.height(ahead.x(), ahead.y()) + 1.0) -
               s.velocity * t;
    out.push_back(s);
  }
  return out;
}

template <class T>
std::optional<T> at_time(const std::vector<T>& items, double t, double tol) {
  auto it = std::lower_bound(items.begin(), items.end(), t - tol,
                             [](const T& x, double v) { return x.t < v; });
  if (it != items.end() && std::abs(it->t - t) <= tol) return *it;
  return std::nullopt;
}

void add_to_map(PointCloudMap& map, const MarginalizedKeyframe& kf, const RunConfig& cfg,
                const PixelGrid& grid) {
  if (kf.neighbor_poses.size() < 2) return;
  const DepthCheck check = depth_consistency_filter(kf.depth, kf.T_cw, kf.neighbor_poses,
                                                    kf.neighbor_depths, grid, cfg.K, cfg.depth_check);
  accumulate_pointcloud(map, kf.depth, kf.T_cw, check, grid, cfg.K);
}

}  // namespace

RunResult run(const RunConfig& cfg, const RunOptions& options) {
  const auto wall0 = std::chrono::steady_clock::now();
  cfg.K.validate();
  SimData data = simulate(cfg.sim);

  // Recorded streams replace the simulated ones.
  if (!cfg.imu_csv.empty()) {
    data.imu = read_imu_csv(cfg.imu_csv);
    data.frame_imu_index.clear();
    for (double t : data.frame_times) {
      auto it = std::lower_bound(data.imu.begin(), data.imu.end(), t - 1e-9,
                                 [](const ImuSample& s, double v) { return s.t < v; });
      if (it == data.imu.end() || std::abs(it->t - t) > 1e-6) {
        throw Error(Errc::TimeMismatch, "IMU stream has no sample at frame time " + std::to_string(t));
      }
      data.frame_imu_index.push_back(static_cast<std::size_t>(it - data.imu.begin()));
    }
  }
  if (!cfg.gnss_csv.empty()) {
    std::optional<GeoAnchor> anchor;
    if (cfg.gnss_anchor) anchor.emplace(*cfg.gnss_anchor);
    data.gnss = to_enu(read_gnss_csv(cfg.gnss_csv), anchor);
  }
  if (!cfg.wheel_csv.empty()) data.wheel = read_wheel_csv(cfg.wheel_csv);

  const PixelGrid grid = PixelGrid::make(cfg.K);
  const auto objects = make_objects(cfg);
  const SyntheticScene scene = make_scene(data, cfg.sim, grid, cfg.K, cfg.flow, objects);
  const SyntheticFlowProvider provider(scene, grid, cfg.K, cfg.sim.seed,
                                       cfg.estimator.window.max_active_edges);

  EstimatorConfig ec = cfg.estimator;
  ec.use_gnss = options.scheme == Scheme::VioGnss || options.scheme == Scheme::All;
  ec.use_wheel = options.scheme == Scheme::VioWss || options.scheme == Scheme::All;
  Estimator estimator(ec, provider, grid, cfg.K);

  RunResult out;
  out.scheme = options.scheme;
  out.T_nw_true = data.T_nw;
  std::map<FrameId, NavState> latest;
  const double tol = 0.25 / cfg.sim.imu_rate;
  std::size_t frames = data.frame_times.size();
  if (options.max_frames) frames = std::min<std::size_t>(frames, static_cast<std::size_t>(*options.max_frames));

  for (std::size_t k = 0; k < frames; ++k) {
    FrameInput in;
    in.id = static_cast<FrameId>(k);
    in.t = data.frame_times[k];
    const std::size_t i1 = data.frame_imu_index[k];
    const std::size_t i0 = k > 0 ? data.frame_imu_index[k - 1] : i1;
    in.imu.assign(data.imu.begin() + static_cast<std::ptrdiff_t>(i0),
                  data.imu.begin() + static_cast<std::ptrdiff_t>(i1) + 1);
    in.gnss = at_time(data.gnss, in.t, tol);
    in.wheel = at_time(data.wheel, in.t, tol);

    EpochReport rep;
    try {
      rep = estimator.process_frame(in);
    } catch (const Error& e) {
      throw Error(e.code(), "epoch " + std::to_string(k) + " (t=" + std::to_string(in.t) +
                                "): " + e.what());
    }
    if (rep.initialized_now) {
      out.init_time = in.t;
      out.init = estimator.init_result();
      out.init_states = estimator.init_outputs();
    }
    if (rep.aligned_now) {
      out.align_time = in.t;
      ++out.align_events;
    }
    out.epochs.push_back({in.id, in.t, rep.initialized, rep.keyframe, rep.window_size,
                          rep.active_edges, rep.total_edges, rep.marginalizations,
                          rep.midrange_added, rep.timing});
    if (estimator.initialized()) {
      for (StateKey key : estimator.graph().keys()) latest[key] = estimator.graph().state(key);
    }
    for (const auto& kf : estimator.take_marginalized()) {
      if (options.build_map) add_to_map(out.map, kf, cfg, grid);
    }
  }
  if (options.build_map && estimator.initialized()) {
    for (const auto& kf : estimator.window_keyframes()) add_to_map(out.map, kf, cfg, grid);
  }

  if (estimator.alignment().aligned()) out.T_nw = estimator.alignment().T_nw();
  // Dropped frames follow the final estimate of the keyframe before them.
  for (const auto& d : estimator.dropped()) {
    const auto it = latest.find(d.anchor);
    if (it == latest.end()) continue;
    NavState x = latest[d.id];
    x.T = it->second.T * d.T_anchor_frame;
    latest[d.id] = x;
  }
  for (const auto& [id, x] : latest) {
    const NavState& gt = data.frame_truth[static_cast<std::size_t>(id)];
    out.estimate.push_back({x.t, x.T});
    out.truth.push_back({gt.t, gt.T});
    if (out.T_nw) {
      out.estimate_nav.push_back({x.t, *out.T_nw * x.T});
      out.truth_nav.push_back({gt.t, data.T_nw * gt.T});
    }
  }
  out.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

void export_run(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const bool nav = !result.estimate_nav.empty();
  write_trajectory(dir / "trajectory.txt", nav ? result.estimate_nav : result.estimate);
  write_trajectory(dir / "truth.txt", nav ? result.truth_nav : result.truth);
  write_ply(dir / "map.ply", result.map);

  std::ofstream timing(dir / "timing.csv");
  timing << "frame,t,keyframe,window,active_edges,flow,hessian,optimization,depth_update,"
            "marginalization\n";
  for (const auto& e : result.epochs) {
    timing << e.frame << ',' << e.t << ',' << e.keyframe << ',' << e.window_size << ','
           << e.active_edges << ',' << e.timing.flow << ',' << e.timing.hessian << ','
           << e.timing.optimization << ',' << e.timing.depth_update << ','
           << e.timing.marginalization << '\n';
  }

  // Plot-ready error series after the alignment appropriate to the scheme.
  std::ofstream errors(dir / "errors.csv");
  errors << std::setprecision(9) << "t,ex,ey,ez,norm\n";
  if (result.estimate.size() >= 3) {
    const AteResult ate =
        nav ? evaluate_ate(result.estimate_nav, result.truth_nav, AlignMode::None)
            : evaluate_ate(result.estimate, result.truth, AlignMode::FourDof);
    for (std::size_t i = 0; i < ate.times.size(); ++i) {
      const Vec3& e = ate.errors[i];
      errors << ate.times[i] << ',' << e.x() << ',' << e.y() << ',' << e.z() << ',' << e.norm()
             << '\n';
    }
  }
}

}  // namespace dbaf
