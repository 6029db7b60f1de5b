#pragma once

#include <string>
#include <vector>

#include "dbafusion/io.hpp"

namespace dbaf {

enum class AlignMode { SE3, Sim3, FourDof, None };
AlignMode parse_align_mode(const std::string& name);

struct PosePair {
  StampedPose est;
  StampedPose ref;
};

/// Nearest-timestamp association; pairs further apart than `gate` seconds are skipped.
std::vector<PosePair> associate(const Trajectory& est, const Trajectory& ref, double gate = 0.02);

struct AteResult {
  double rmse = 0.0;
  int pairs = 0;
  double scale = 1.0;
  Transform alignment;  // applied to the estimate
  std::vector<double> times;
  std::vector<Vec3> errors;  // ref - aligned est
};

/// Throws TooFewPairs with fewer than three associated pairs.
AteResult evaluate_ate(const Trajectory& est, const Trajectory& ref, AlignMode mode,
                       double gate = 0.02);

struct RpeResult {
  double t_rel = 0.0;  // percent
  double r_rel = 0.0;  // degrees per 100 m
  int segments = 0;
};

/// KITTI-style relative error over the given segment lengths (m). Throws
/// TrajectoryTooShort when the reference is shorter than the longest segment.
RpeResult evaluate_rpe(const Trajectory& est, const Trajectory& ref,
                       const std::vector<double>& lengths = {100, 200, 300, 400, 500, 600, 700, 800},
                       double gate = 0.02);

}  // namespace dbaf
