#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbafusion/densemap.hpp"
#include "dbafusion/io.hpp"
#include "dbafusion/window.hpp"

namespace dbaf {

enum class Scheme { Vio, VioGnss, VioWss, All };
Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme s);

struct EpochLog {
  FrameId frame = 0;
  double t = 0.0;
  bool initialized = false;
  bool keyframe = false;
  int window_size = 0;
  int active_edges = 0;
  int total_edges = 0;
  int marginalizations = 0;
  int midrange_added = 0;
  StageTiming timing;
};

struct RunOptions {
  Scheme scheme = Scheme::All;
  std::optional<int> max_frames;
  bool build_map = true;
};

struct RunResult {
  Scheme scheme = Scheme::All;
  /// Latest estimate of every tracked frame (body poses, estimator world frame).
  Trajectory estimate;
  /// Ground-truth body poses at the same frames, true world frame.
  Trajectory truth;
  /// Both in the navigation frame; the estimate uses the estimated alignment.
  Trajectory estimate_nav;
  Trajectory truth_nav;
  std::vector<EpochLog> epochs;
  PointCloudMap map;

  std::optional<double> init_time;
  std::optional<InitResult> init;
  std::vector<std::pair<FrameId, NavState>> init_states;
  std::optional<double> align_time;
  int align_events = 0;
  std::optional<Transform> T_nw;
  Transform T_nw_true;
  double wall_time = 0.0;
};

/// Simulates (or loads) the scenario and runs the estimator over every frame.
/// Estimator failures are rethrown with the epoch attached.
RunResult run(const RunConfig& cfg, const RunOptions& options = {});

/// Writes trajectory.txt, truth.txt, map.ply, timing.csv and errors.csv.
void export_run(const RunResult& result, const std::filesystem::path& dir);

}  // namespace dbaf
