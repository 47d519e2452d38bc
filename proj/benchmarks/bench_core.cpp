#include <benchmark/benchmark.h>

#include "rif/experiment.hpp"
#include "rif/imu.hpp"
#include "rif/ranging.hpp"
#include "rif/simulator.hpp"

namespace {

using namespace rif;

void BM_ExpSo3(benchmark::State& state) {
  const Vector3 omega(0.1, -0.2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exp_so3(omega));
  }
}
BENCHMARK(BM_ExpSo3);

void BM_RobustLossAsymmetric(benchmark::State& state) {
  RangeNoiseModel model;
  model.sigma_r = 0.15;
  const double estar = decision_boundary(model.sigma_r, model.effective_gamma());
  double e = -2.0;
  for (auto _ : state) {
    e += 0.01;
    if (e > 4.0) e = -2.0;
    benchmark::DoNotOptimize(robust_loss(e, model, estar));
  }
}
BENCHMARK(BM_RobustLossAsymmetric);

void BM_Preintegrate(benchmark::State& state) {
  std::vector<ImuSample> samples;
  for (int k = 0; k <= 20; ++k) {
    samples.push_back(ImuSample{k / 200.0, Vector3(0.1, -0.05, 0.3),
                                Vector3(0.5, 0.2, 9.7)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate(samples, ImuBias{}, ImuNoiseParams{}));
  }
}
BENCHMARK(BM_Preintegrate);

struct UpdateBenchData {
  std::vector<ImuSample> imu;
  std::vector<RangeMeasurement> ranges;
  std::vector<Anchor> anchors;
  ScenarioConfig scenario;
};

const UpdateBenchData& bench_data() {
  static const UpdateBenchData data = [] {
    UpdateBenchData d;
    d.scenario.duration = 40.0;
    d.scenario.seed = 7;
    d.anchors = default_anchor_layout(d.scenario.site_extents,
                                      d.scenario.anchor_count, 0.01);
    const SimTrajectory traj = generate_trajectory(d.scenario);
    d.imu = synthesize_imu(traj, d.scenario, d.scenario.seed).samples;
    d.ranges = synthesize_ranges(traj, d.scenario, d.anchors, d.scenario.seed);
    return d;
  }();
  return data;
}

void BM_SmootherUpdate(benchmark::State& state) {
  const UpdateBenchData& d = bench_data();
  const bool damped = state.range(0) != 0;
  for (auto _ : state) {
    FusionOptions options;
    options.noise_model.sigma_r = d.scenario.sigma_r;
    options.solver = damped ? SolverKind::disam2 : SolverKind::isam2_gn;
    options.init.imu_params = d.scenario.imu_noise;
    const FusionResult result = fuse(d.imu, d.ranges, d.anchors, options);
    double total_ms = 0;
    for (const auto& diag : result.diagnostics) total_ms += diag.wall_time_ms;
    state.counters["ms_per_update"] =
        total_ms / std::max<size_t>(result.diagnostics.size(), 1);
  }
}
BENCHMARK(BM_SmootherUpdate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
