#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rif/batch_solver.hpp"
#include "rif/factor_graph.hpp"

namespace rif {

/// Per-kind tangent-norm relinearization thresholds. A threshold of zero
/// relinearizes every variable on every update.
///
/// Rotation staleness is what hurts: the preintegration residuals are
/// nonlinear in the orientations only, so second-order terms ~ dphi^2 get
/// measured against the (stiff) whitened noise scale and can exceed the
/// per-update error decrease, making the accept loop reject everything.
/// Position, velocity and bias enter the residuals (almost) linearly, so
/// their linearization points may lag somewhat further at no cost (their
/// residual cross terms with stale rotations still matter). The pose check
/// splits its tangent: |dphi| > pose OR |dp| > 4 * pose.
struct RelinThresholds {
  double pose = 0.005;    // rad on the rotation block; meters use 4x this
  double velocity = 0.05; // m/s
  double bias = 0.05;
  double anchor = 0.02;   // m

  double of(VariableKind kind) const;
};

/**
 * Trust-region incremental smoother configuration.
 *
 * With damping_enabled the update follows the accept/reject lambda schedule
 * and attaches a zero-error damping row block (Jacobian sqrt(lambda) I) to
 * every variable that is new in the update; the lambda of old variables is
 * never touched. With damping_enabled=false the update is a single vanilla
 * Gauss-Newton-style incremental step (no special factors, no retry loop).
 */
struct DIsam2Config {
  double lambda_init = 1e-2;
  double lambda_min = 1e-3;
  double lambda_max = 1e8;
  double lambda_up_factor = 10.0;
  double lambda_down_factor = 10.0;
  RelinThresholds relin_threshold;
  int max_inner_retries = 100;
  bool damping_enabled = true;

  bool valid() const {
    if (!damping_enabled) return true;
    return lambda_min > 0 && lambda_min <= lambda_init &&
           lambda_init <= lambda_max && lambda_up_factor > 1 &&
           lambda_down_factor > 1 && max_inner_retries > 0;
  }
};

/// Per-update diagnostic record (serialized as JSON-lines by the CLI).
struct UpdateDiagnostics {
  int update_index = 0;
  std::vector<double> lambdas_tried;
  double error_before = 0.0;
  double error_after = 0.0;
  int cliques_relinearized = 0;
  double wall_time_ms = 0.0;
};

/**
 * Bayes-tree incremental smoother with the damped update loop.
 *
 * Variables are grouped into elimination supernodes: one group per state
 * epoch (pose, velocity, bias) ordered oldest to newest, anchors in their
 * own groups eliminated last, at the root. An update re-eliminates only the
 * cliques reached by new factors or by relinearized variables, reusing the
 * cached separator marginals of untouched subtrees.
 */
class IncrementalSmoother {
 public:
  explicit IncrementalSmoother(DIsam2Config config);

  /// Transplants an already-optimized graph (the batch initialization
  /// window) as the initial smoother state: single elimination pass, no
  /// accept/reject loop.
  void bootstrap(const FactorGraph& graph, const Values& solution);

  /**
   * One damped incremental update: inserts the new variables and factors,
   * then runs the accept/reject loop. Every accepted update satisfies
   * error_after <= error_before (strict decrease up to machine tolerance;
   * the equality allowance covers no-op updates at an optimum).
   *
   * Throws LambdaOverflowError when lambda reaches lambda_max without an
   * acceptable step (insertion is rolled back), MissingInitializationError
   * when a new factor references an unknown, uninitialized variable.
   */
  UpdateDiagnostics update(const std::vector<FactorPtr>& new_factors,
                           const Values& new_variable_inits);

  /// Current estimate of one variable. Throws UnknownKeyError.
  VariableValue estimate_at(const VariableKey& key) const;

  /// Current estimate of every variable.
  Values estimate() const;

  /// Forward strapdown propagation from the newest solved epoch using the
  /// current bias estimate. samples[0] must sit at the epoch time; an empty
  /// span returns the solved state itself. Throws NoSolvedStateError.
  NavState extrapolate(std::span<const ImuSample> samples) const;

  /// Same, emitting the state at every sample time.
  std::vector<std::pair<double, NavState>> extrapolate_trace(
      std::span<const ImuSample> samples) const;

  /// Total nonlinear error of the stored graph at the current estimate.
  double total_error() const;

  double current_lambda() const { return lambda_; }
  /// Damping attached to a variable (0 when damping is disabled).
  double lambda_of(const VariableKey& key) const;

  int num_updates() const { return update_count_; }
  size_t num_factors() const { return factors_.size(); }
  size_t num_variables() const { return lin_points_.size(); }
  size_t num_cliques() const { return cliques_.size(); }
  const Values& linearization_points() const { return lin_points_; }
  const std::map<VariableKey, Eigen::VectorXd>& deltas() const { return deltas_; }
  const ImuNoiseParams& imu_params() const { return imu_params_; }
  void set_imu_params(ImuNoiseParams p) { imu_params_ = std::move(p); }

  /// All factors inserted so far, as a graph (for oracle comparisons).
  FactorGraph graph() const;

 private:
  struct Clique {
    int64_t group = 0;
    std::vector<VariableKey> frontals;
    std::vector<VariableKey> separator;
    Eigen::MatrixXd r;         // frontal x frontal, upper triangular
    Eigen::MatrixXd s;         // frontal x separator
    Eigen::VectorXd d;
    LinearFactor marginal;     // cached contribution to the parent
    int64_t parent_group = -1;
  };

  int64_t group_of(const VariableKey& key) const;
  void insert_variable(const VariableKey& key, const VariableValue& value,
                       double lambda);
  std::vector<int64_t> mark_dirty(const std::vector<int>& new_factor_indices,
                                  const std::vector<VariableKey>& relin_vars,
                                  const std::vector<VariableKey>& new_vars) const;
  void eliminate(const std::vector<int64_t>& dirty_groups, double trial_lambda,
                 const std::vector<VariableKey>& new_vars);
  void back_substitute();
  std::vector<VariableKey> relin_candidates() const;

  DIsam2Config config_;
  double lambda_;
  int update_count_ = 0;

  std::vector<FactorPtr> factors_;
  std::vector<int64_t> factor_group_;                 // consumption group
  std::map<int64_t, std::vector<int>> factors_by_group_;
  std::unordered_map<VariableKey, std::vector<int>, VariableKeyHash> var_factors_;

  Values lin_points_;
  std::map<VariableKey, Eigen::VectorXd> deltas_;
  std::unordered_map<VariableKey, double, VariableKeyHash> var_lambda_;

  std::map<int64_t, Clique> cliques_;

  int32_t last_epoch_ = -1;
  ImuNoiseParams imu_params_;  // gravity/bias model for extrapolation
};

}  // namespace rif
