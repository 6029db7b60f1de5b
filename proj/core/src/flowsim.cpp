#include "dbafusion/flowsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t edge_seed(std::uint64_t seed, const EdgeKey& e) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(e.source));
  return splitmix64(h ^ static_cast<std::uint64_t>(e.target));
}

double border_taper(const Vec2& u, const Intrinsics& K, double margin) {
  if (margin <= 0.0) return 1.0;
  const double d = std::min({u.x() + 0.5, u.y() + 0.5, K.width - 0.5 - u.x(),
                             K.height - 0.5 - u.y()});
  if (d >= margin) return 1.0;
  constexpr double floor = 0.1;
  const double s = 0.5 * (1.0 - std::cos(std::numbers::pi * std::max(d, 0.0) / margin));
  return floor + (1.0 - floor) * s;
}

}  // namespace

double mean_disparity(const Transform& Ti, const Transform& Tj, const DepthMap& depth_i,
                      const PixelGrid& grid, const Intrinsics& K) {
  const Reprojection rp = reproject(grid, depth_i.inv_depth, Ti, Tj, K);
  double sum = 0.0;
  int count = 0;
  for (int p = 0; p < grid.size(); ++p) {
    if (!rp.valid[p]) continue;
    sum += (rp.flow.segment<2>(2 * p) - grid.coords.col(p)).norm();
    ++count;
  }
  if (count == 0 || 4 * count < grid.size()) return kNotCovisible;
  return sum / count;
}

double flow_magnitude(const FlowMeasurement& meas, const PixelGrid& grid) {
  double sum = 0.0;
  int count = 0;
  for (int p = 0; p < grid.size(); ++p) {
    if (!meas.valid[p]) continue;
    sum += (meas.target.segment<2>(2 * p) - grid.coords.col(p)).norm();
    ++count;
  }
  if (count == 0 || 4 * count < grid.size()) return kNotCovisible;
  return sum / count;
}

const Transform& SyntheticScene::pose(FrameId id) const {
  const auto it = poses.find(id);
  if (it == poses.end()) {
    throw Error(Errc::InvalidArgument, "scene has no frame " + std::to_string(id));
  }
  return it->second;
}

const Eigen::VectorXd& SyntheticScene::depth(FrameId id) const {
  const auto it = inv_depth.find(id);
  if (it == inv_depth.end()) {
    throw Error(Errc::InvalidArgument, "scene has no depth for frame " + std::to_string(id));
  }
  return it->second;
}

FlowMeasurement synthetic_flow(const EdgeKey& edge, const SyntheticScene& scene,
                               const PixelGrid& grid, const Intrinsics& K, std::uint64_t seed) {
  const FlowNoise& cfg = scene.noise;
  if (cfg.sigma < 0.0 || cfg.dynamic_fraction < 0.0 || cfg.dynamic_fraction > 1.0) {
    throw Error(Errc::InvalidArgument, "invalid flow noise configuration");
  }
  const int n = grid.size();
  const Reprojection rp =
      reproject(grid, scene.depth(edge.source), scene.pose(edge.source), scene.pose(edge.target), K);

  FlowMeasurement m;
  m.edge = edge;
  m.target = rp.flow;
  m.weight = Eigen::VectorXd::Zero(2 * n);
  m.valid = rp.valid;

  std::mt19937_64 rng(edge_seed(seed, edge));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma_w = cfg.sigma > 0.0 ? cfg.sigma : kNoiselessSigma;
  const double w0 = 1.0 / (sigma_w * sigma_w);
  for (int p = 0; p < n; ++p) {
    // Draw for every pixel so the stream does not depend on the mask.
    const double nx = gauss(rng);
    const double ny = gauss(rng);
    if (!m.valid[p]) continue;
    m.target[2 * p] += cfg.sigma * nx;
    m.target[2 * p + 1] += cfg.sigma * ny;
    const double w = w0 * border_taper(grid.coords.col(p), K, cfg.border_margin);
    m.weight[2 * p] = w;
    m.weight[2 * p + 1] = w;
  }

  const int num_dynamic = static_cast<int>(std::floor(cfg.dynamic_fraction * n));
  if (num_dynamic > 0) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> size(20.0, 40.0);
    for (int k = 0; k < num_dynamic; ++k) {
      const int p = order[k];
      const double a = angle(rng);
      const double s = size(rng);
      if (!m.valid[p]) continue;
      m.target[2 * p] += s * std::cos(a);
      m.target[2 * p + 1] += s * std::sin(a);
      m.weight[2 * p] = kDynamicWeight;
      m.weight[2 * p + 1] = kDynamicWeight;
    }
  }
  return m;
}

FlowMeasurement SyntheticFlowProvider::flow(const EdgeKey& edge, const Transform&,
                                            const Transform&, const DepthMap&) const {
  return synthetic_flow(edge, scene_, grid_, K_, seed_);
}

}  // namespace dbaf
