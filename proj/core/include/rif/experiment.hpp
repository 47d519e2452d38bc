#pragma once

#include <string>
#include <vector>

#include "rif/batch_solver.hpp"
#include "rif/evaluation.hpp"
#include "rif/incremental_solver.hpp"
#include "rif/simulator.hpp"

namespace rif {

enum class SolverKind { isam2_gn, disam2, batch };

const char* solver_kind_name(SolverKind kind);
const char* noise_kind_name(NoiseKind kind);
SolverKind solver_kind_from_string(const std::string& s);
NoiseKind noise_kind_from_string(const std::string& s);

struct FusionOptions {
  RangeNoiseModel noise_model;
  SolverKind solver = SolverKind::disam2;
  double init_window = 10.0;   // s of batch initialization
  double rate_limit = 0.0;     // cumulative Hz; 0 disables downsampling
  bool imu_rate_output = false;
  DIsam2Config smoother;
  InitializationConfig init;
};

struct FusionResult {
  Trajectory trajectory;
  bool failed = false;
  std::string failure_reason;
  std::vector<UpdateDiagnostics> diagnostics;
  int epochs = 0;
  // Populated for the incremental solvers; gives tests and tooling access
  // to the final graph and per-variable state.
  std::shared_ptr<IncrementalSmoother> smoother;
};

/**
 * End-to-end fusion: 10 s batch initialization, then one incremental update
 * per range epoch (preintegration + bias evolution + range factors), with
 * optional IMU-rate extrapolated output between epochs.
 *
 * A LambdaOverflowError mid-stream marks the result failed and returns the
 * partial trajectory. Requires init_window seconds of overlapping data.
 */
FusionResult fuse(const std::vector<ImuSample>& imu,
                  const std::vector<RangeMeasurement>& ranges,
                  const std::vector<Anchor>& anchors, const FusionOptions& options);

/// Round-robin decimation to a cumulative target rate, preferring the
/// anchor least recently kept so diversity survives heavy downsampling.
std::vector<RangeMeasurement> downsample_ranges(
    const std::vector<RangeMeasurement>& ranges, double target_hz);

struct ExperimentCell {
  NoiseKind model = NoiseKind::asymmetric;
  SolverKind solver = SolverKind::disam2;
  double rate_hz = 40.0;
  uint64_t seed = 0;
};

struct ExperimentRow {
  ExperimentCell cell;
  std::string status;  // "ok" or "fail"
  std::string reason;
  double ape_mean = 0.0;
  double ape_max = 0.0;
  double ape_rmse = 0.0;
  int matched_pairs = 0;
  bool has_ape = false;
  int updates = 0;
  double update_ms_mean = 0.0;
  double update_ms_max = 0.0;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<NoiseKind> models{NoiseKind::gaussian, NoiseKind::huber,
                                NoiseKind::cauchy, NoiseKind::asymmetric};
  std::vector<SolverKind> solvers{SolverKind::disam2};
  std::vector<double> rates{40.0};
  int num_seeds = 5;  // seeds scenario.seed + 0 .. num_seeds-1
  FusionOptions base_options;
  int parallelism = 0;  // 0 = hardware concurrency
};

/// Runs the full (model x solver x rate x seed) matrix. Estimator failures
/// become "fail" rows carrying the partial APE; cells are independent.
std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config);

/// Runs one cell (simulate + fuse + eval); used by the matrix and tests.
ExperimentRow run_cell(const ScenarioConfig& scenario, const ExperimentCell& cell,
                       const FusionOptions& base_options);

/// Deterministic result table (no wall-clock columns).
void write_experiment_csv(const std::string& path,
                          const std::vector<ExperimentRow>& rows);
/// Wall-clock sidecar, separated so the main CSV stays bit-reproducible.
void write_timing_csv(const std::string& path,
                      const std::vector<ExperimentRow>& rows);
/// JSON provenance sidecar: scenario + matrix + seeds.
void write_experiment_sidecar(const std::string& path,
                              const ExperimentConfig& config);

}  // namespace rif
