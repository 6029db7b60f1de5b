#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "dbafusion/dba.hpp"

using namespace dbaf;

namespace {

Intrinsics camera() {
  Intrinsics K;
  K.fx = K.fy = 128.0;
  K.cx = 128.0;
  K.cy = 96.0;
  K.width = 256;
  K.height = 192;
  return K;
}

Transform pose(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  const Vec3 phi(n(rng), n(rng), n(rng));
  return Transform(Eigen::AngleAxisd(phi.norm(), phi.normalized()).toRotationMatrix(),
                   Vec3(n(rng), n(rng), n(rng)));
}

// Window of `frames` keyframes with every pair within `range` connected.
struct Problem {
  Intrinsics K = camera();
  PixelGrid grid = PixelGrid::make(K);
  VisualWindow window;
  std::vector<FlowMeasurement> flows;

  Problem(int frames, int range) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> depth(0.2, 0.5), weight(0.5, 2.0);
    for (int f = 0; f < frames; ++f) {
      window.frames.push_back(f);
      window.poses.push_back(f == 0 ? Transform() : pose(rng, 0.03));
      window.depths.push_back(
          {f, Eigen::VectorXd::NullaryExpr(grid.size(), [&] { return depth(rng); })});
    }
    for (int i = 0; i < frames; ++i) {
      for (int j = 0; j < frames; ++j) {
        if (i == j || std::abs(i - j) > range) continue;
        const Reprojection r =
            reproject(grid, window.depths[i].inv_depth, window.poses[i], window.poses[j], K);
        FlowMeasurement m;
        m.edge = {i, j};
        m.target = r.flow.array() + 0.3;
        m.weight = Eigen::VectorXd::NullaryExpr(2 * grid.size(), [&] { return weight(rng); });
        m.valid = r.valid;
        flows.push_back(std::move(m));
      }
    }
  }

  EdgeBlocks edge(std::size_t e) const {
    const auto& m = flows[e];
    return linearize_edge(m, window.poses[m.edge.source], window.poses[m.edge.target],
                          window.depths[m.edge.source], grid, K);
  }
};

}  // namespace

static void BM_LinearizeEdge(benchmark::State& state) {
  const Problem p(2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(p.edge(0));
  state.SetItemsProcessed(state.iterations() * p.grid.size());
}
BENCHMARK(BM_LinearizeEdge);

static void BM_SchurEliminateDepth(benchmark::State& state) {
  const Problem p(static_cast<int>(state.range(0)) + 1, 100);
  std::vector<EdgeBlocks> blocks;
  for (std::size_t e = 0; e < p.flows.size(); ++e) {
    if (p.flows[e].edge.source == 0) blocks.push_back(p.edge(e));
  }
  const FrameSystem sys = assemble_frame_system(0, blocks);
  for (auto _ : state) benchmark::DoNotOptimize(schur_eliminate_depth(sys));
}
BENCHMARK(BM_SchurEliminateDepth)->Arg(2)->Arg(4)->Arg(8);

static void BM_LinearizeWindow(benchmark::State& state) {
  const Problem p(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(linearize_window(p.window, p.flows, p.grid, p.K));
  state.counters["edges"] = static_cast<double>(p.flows.size());
}
BENCHMARK(BM_LinearizeWindow)->Arg(8)->Arg(15)->Unit(benchmark::kMillisecond);
