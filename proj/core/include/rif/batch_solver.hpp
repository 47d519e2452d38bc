#pragma once

#include <vector>

#include "rif/factor_graph.hpp"
#include "rif/imu.hpp"
#include "rif/ranging.hpp"

namespace rif {

/// Levenberg-Marquardt schedule. Damping uses lambda * diag(J^T J)
/// (Marquardt scaling) so heterogeneous units damp consistently.
struct LmConfig {
  double lambda_init = 1e-4;
  double lambda_min = 1e-9;
  double lambda_max = 1e8;
  double lambda_up_factor = 10.0;
  double lambda_down_factor = 10.0;
  int max_iterations = 100;
  double rel_error_tol = 1e-10;
  double abs_error_tol = 1e-10;  // on |delta|

  bool valid() const {
    return lambda_min > 0 && lambda_min <= lambda_init &&
           lambda_init <= lambda_max && lambda_up_factor > 1 &&
           lambda_down_factor > 1 && max_iterations > 0;
  }
};

struct LmResult {
  Values values;
  double final_error = 0.0;
  int iterations = 0;  // accepted steps
  bool converged = false;
  std::vector<double> error_history;  // error after each accepted step
};

/**
 * Classic LM loop on the whole graph: solves (J^T J + lambda D) delta = J^T b
 * per iteration, accepts steps that decrease total_error, returns the best
 * values found.
 *
 * Throws LambdaOverflowError if lambda exceeds lambda_max before any step is
 * accepted, SingularSystemError if the damped normal equations stay
 * rank-deficient.
 */
LmResult optimize(const FactorGraph& graph, const Values& initial_values,
                  const LmConfig& config);

/// Everything the batch initializer needs to know about the fusion setup.
struct InitializationConfig {
  RangeNoiseModel noise_model;
  ImuNoiseParams imu_params;
  ImuBias factory_bias;                  // prior mean for the first bias
  Vector6 factory_bias_sigma =
      (Vector6() << 0.1, 0.1, 0.1, 0.01, 0.01, 0.01).finished();
  LmConfig lm;
};

/// Ranging epoch: all measurements sharing one timestamp.
struct RangeEpoch {
  double t = 0.0;
  std::vector<RangeMeasurement> measurements;
};

/// Groups a sorted measurement stream into per-timestamp epochs.
std::vector<RangeEpoch> group_epochs(const std::vector<RangeMeasurement>& ranges,
                                     double tol = 1e-9);

struct InitializationResult {
  FactorGraph graph;
  Values values;
  std::vector<double> epoch_times;
  Rotation initial_orientation;  // gravity-aligned roll/pitch estimate
  LmResult lm;
};

/**
 * Builds and solves the joint batch graph over the leading window:
 * preintegration between range epochs, robust range factors, factory bias
 * prior, anchor priors. Positions are seeded by per-epoch multilateration,
 * roll/pitch from the mean accelerometer direction.
 *
 * Throws InsufficientAnchorsError (< 3 distinct or collinear anchors ranged
 * in the window) and InsufficientImuError (< 1 s of IMU data).
 */
InitializationResult initialize(const std::vector<ImuSample>& imu_stream,
                                const std::vector<RangeMeasurement>& range_stream,
                                const std::vector<Anchor>& anchors,
                                double window,
                                const InitializationConfig& config);

/// Least-squares point solve from ranges to known anchor positions; used for
/// seeding. Gauss-Newton from `guess`.
Vector3 multilaterate(const std::vector<Vector3>& anchor_positions,
                      const std::vector<double>& ranges, const Vector3& guess,
                      int iterations = 20);

/// Slices [t0, t1] out of a sample stream, interpolating boundary samples so
/// the slice covers the window exactly.
std::vector<ImuSample> slice_imu(const std::vector<ImuSample>& stream, double t0,
                                 double t1);

}  // namespace rif
