#include <memory>

#include <benchmark/benchmark.h>

#include "dbafusion/factors.hpp"
#include "dbafusion/graph.hpp"
#include "dbafusion/simulation.hpp"

using namespace dbaf;

namespace {

const SimData& sim_data() {
  static const SimData data = [] {
    SimConfig cfg;
    cfg.duration = 6.0;
    return simulate(cfg);
  }();
  return data;
}

std::vector<ImuSample> between(const SimData& d, std::size_t k) {
  return {d.imu.begin() + static_cast<std::ptrdiff_t>(d.frame_imu_index[k - 1]),
          d.imu.begin() + static_cast<std::ptrdiff_t>(d.frame_imu_index[k]) + 1};
}

}  // namespace

static void BM_Preintegration(benchmark::State& state) {
  const SimData& d = sim_data();
  const auto samples = between(d, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Preintegration(samples, Vec3::Zero(), Vec3::Zero(), ImuNoise{}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}
BENCHMARK(BM_Preintegration);

// IMU chain over a full window, anchored by a prior on the oldest state.
static void BM_GraphOptimize(benchmark::State& state) {
  const SimData& d = sim_data();
  const auto n = static_cast<std::size_t>(state.range(0));
  FactorGraph g;
  for (std::size_t k = 0; k < n; ++k) {
    NavState x = d.frame_truth[k];
    x.T = Transform(x.T.rotation(), x.T.translation() + Vec3(0.05, -0.02, 0.01) * double(k));
    g.add_state(static_cast<StateKey>(k), x);
    if (k > 0) {
      g.add_imu_factor(static_cast<StateKey>(k - 1), static_cast<StateKey>(k),
                       Preintegration(between(d, k), x.ba, x.bg, ImuNoise{}));
    }
  }
  g.add_factor(std::make_shared<PriorFactor>(std::vector<StateKey>{0},
                                             std::vector<NavState>{d.frame_truth[0]},
                                             1e4 * Eigen::MatrixXd::Identity(15, 15),
                                             Eigen::VectorXd::Zero(15)));
  for (auto _ : state) {
    state.PauseTiming();
    FactorGraph work = g;
    state.ResumeTiming();
    benchmark::DoNotOptimize(work.optimize(4));
  }
}
BENCHMARK(BM_GraphOptimize)->Arg(8)->Arg(15)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
