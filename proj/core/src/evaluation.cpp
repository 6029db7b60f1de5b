#include "dbafusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "dbafusion/error.hpp"

namespace dbaf {

AlignMode parse_align_mode(const std::string& name) {
  if (name == "se3" || name == "SE3") return AlignMode::SE3;
  if (name == "sim3" || name == "Sim3") return AlignMode::Sim3;
  if (name == "4dof" || name == "4DOF") return AlignMode::FourDof;
  if (name == "none") return AlignMode::None;
  throw Error(Errc::InvalidArgument, "unknown alignment '" + name + "'");
}

std::vector<PosePair> associate(const Trajectory& est, const Trajectory& ref, double gate) {
  std::vector<PosePair> out;
  if (ref.empty()) return out;
  for (const auto& e : est) {
    auto it = std::lower_bound(ref.begin(), ref.end(), e.t,
                               [](const StampedPose& p, double t) { return p.t < t; });
    const StampedPose* best = nullptr;
    if (it != ref.end()) best = &*it;
    if (it != ref.begin()) {
      const auto& prev = *(it - 1);
      if (!best || std::abs(prev.t - e.t) < std::abs(best->t - e.t)) best = &prev;
    }
    if (best && std::abs(best->t - e.t) <= gate) out.push_back({e, *best});
  }
  return out;
}

AteResult evaluate_ate(const Trajectory& est, const Trajectory& ref, AlignMode mode, double gate) {
  const auto pairs = associate(est, ref, gate);
  if (pairs.size() < 3) {
    throw Error(Errc::TooFewPairs, std::to_string(pairs.size()) + " associated pose pairs");
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = pairs[i].est.T.translation();
    dst.col(i) = pairs[i].ref.T.translation();
  }

  AteResult out;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double s = 1.0;
  switch (mode) {
    case AlignMode::SE3:
    case AlignMode::Sim3: {
      const Eigen::Matrix4d A = Eigen::umeyama(src, dst, mode == AlignMode::Sim3);
      s = mode == AlignMode::Sim3 ? std::cbrt(A.topLeftCorner<3, 3>().determinant()) : 1.0;
      R = A.topLeftCorner<3, 3>() / s;
      t = A.topRightCorner<3, 1>();
      break;
    }
    case AlignMode::FourDof: {
      const Vec3 ca = src.rowwise().mean(), cb = dst.rowwise().mean();
      double cross = 0.0, dot = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 a = src.col(i) - ca, b = dst.col(i) - cb;
        cross += a.x() * b.y() - a.y() * b.x();
        dot += a.x() * b.x() + a.y() * b.y();
      }
      R = rot_z(std::atan2(cross, dot));
      t = cb - R * ca;
      break;
    }
    case AlignMode::None:
      break;
  }
  out.scale = s;
  out.alignment = Transform(Quat(R).normalized(), t);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 e = dst.col(i) - (s * R * src.col(i) + t);
    sum += e.squaredNorm();
    out.times.push_back(pairs[i].est.t);
    out.errors.push_back(e);
  }
  out.pairs = static_cast<int>(n);
  out.rmse = std::sqrt(sum / static_cast<double>(n));
  return out;
}

RpeResult evaluate_rpe(const Trajectory& est, const Trajectory& ref,
                       const std::vector<double>& lengths, double gate) {
  if (lengths.empty()) throw Error(Errc::InvalidArgument, "no segment lengths");
  const auto pairs = associate(est, ref, gate);
  std::vector<double> dist(pairs.size(), 0.0);
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    dist[i] = dist[i - 1] +
              (pairs[i].ref.T.translation() - pairs[i - 1].ref.T.translation()).norm();
  }
  const double longest = *std::max_element(lengths.begin(), lengths.end());
  if (pairs.empty() || dist.back() < longest) {
    throw Error(Errc::TrajectoryTooShort, "reference covers " +
                                              std::to_string(pairs.empty() ? 0.0 : dist.back()) +
                                              " m, longest segment is " + std::to_string(longest));
  }

  RpeResult out;
  double t_sum = 0.0, r_sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (double L : lengths) {
      // First pose at least L meters further along the reference.
      const auto it = std::lower_bound(dist.begin() + static_cast<std::ptrdiff_t>(i), dist.end(),
                                       dist[i] + L);
      if (it == dist.end()) continue;
      const auto j = static_cast<std::size_t>(it - dist.begin());
      const Transform dref = pairs[i].ref.T.inverse() * pairs[j].ref.T;
      const Transform dest = pairs[i].est.T.inverse() * pairs[j].est.T;
      const Transform err = dref.inverse() * dest;
      t_sum += err.translation().norm() / L;
      r_sum += so3_log(err.rotation()).norm() / L;
      ++out.segments;
    }
  }
  if (out.segments == 0) throw Error(Errc::TrajectoryTooShort, "no complete segment");
  out.t_rel = 100.0 * t_sum / out.segments;
  out.r_rel = r_sum / out.segments * 180.0 / std::numbers::pi * 100.0;
  return out;
}

}  // namespace dbaf
