#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "rif/geometry.hpp"
#include "rif/imu.hpp"
#include "rif/ranging.hpp"

namespace rif {

enum class VariableKind : uint8_t { pose, velocity, bias, anchor };

/// Tangent-space dimension per variable kind.
int variable_dim(VariableKind kind);
const char* variable_kind_name(VariableKind kind);

/// Graph variable identifier: (kind, epoch index or anchor ordinal).
struct VariableKey {
  VariableKind kind = VariableKind::pose;
  int32_t index = 0;

  bool operator==(const VariableKey&) const = default;
  bool operator<(const VariableKey& o) const {
    return kind != o.kind ? kind < o.kind : index < o.index;
  }
  std::string name() const;
};

struct VariableKeyHash {
  size_t operator()(const VariableKey& k) const {
    return std::hash<uint64_t>()((uint64_t(k.index) << 8) | uint64_t(k.kind));
  }
};

inline VariableKey pose_key(int32_t i) { return {VariableKind::pose, i}; }
inline VariableKey velocity_key(int32_t i) { return {VariableKind::velocity, i}; }
inline VariableKey bias_key(int32_t i) { return {VariableKind::bias, i}; }
inline VariableKey anchor_key(int32_t i) { return {VariableKind::anchor, i}; }

/// Value storage for one variable; the alternative is selected by kind
/// (velocity and anchor share Vector3).
using VariableValue = std::variant<Pose, Vector3, ImuBias>;

/**
 * Variable assignment map. Retraction applies exp_so3 on pose rotation
 * blocks and vector addition everywhere else; retract(x, 0) = x.
 */
class Values {
 public:
  void insert(const VariableKey& key, VariableValue value);
  void erase(const VariableKey& key) { map_.erase(key); }
  bool has(const VariableKey& key) const { return map_.count(key) > 0; }
  size_t size() const { return map_.size(); }

  const Pose& pose(const VariableKey& key) const;
  const Vector3& vector3(const VariableKey& key) const;  // velocity or anchor
  const ImuBias& bias(const VariableKey& key) const;

  void set(const VariableKey& key, VariableValue value);

  /// Applies a tangent increment to one variable in place.
  void retract_in_place(const VariableKey& key,
                        const Eigen::Ref<const Eigen::VectorXd>& delta);
  /// Whole-map retraction; delta laid out per `ordering`.
  Values retract(const std::vector<VariableKey>& ordering,
                 const Eigen::VectorXd& delta) const;

  std::vector<VariableKey> keys() const;  // sorted

  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

 private:
  const VariableValue& at(const VariableKey& key) const;
  std::unordered_map<VariableKey, VariableValue, VariableKeyHash> map_;
};

/// One linearized (whitened) factor: || sum_i A_i dx_i - b ||^2.
struct LinearFactor {
  std::vector<VariableKey> keys;
  std::vector<Eigen::MatrixXd> jacobians;
  Eigen::VectorXd rhs;  // b = -(whitened residual)

  int rows() const { return static_cast<int>(rhs.size()); }
};

/// Residual-producing constraint between graph variables.
class Factor {
 public:
  virtual ~Factor() = default;

  const std::vector<VariableKey>& keys() const { return keys_; }
  virtual int dim() const = 0;

  /// Contribution to the total nonlinear objective: rho(e) for robust
  /// factors, half the squared whitened residual otherwise.
  virtual double error(const Values& values) const = 0;

  /// Whitened Jacobians and rhs at the given estimate (IRLS sqrt-weight
  /// convention for robust factors).
  virtual LinearFactor linearize(const Values& values) const = 0;

  /// One-line human-readable form for graph dumps.
  virtual std::string describe() const = 0;

 protected:
  explicit Factor(std::vector<VariableKey> keys) : keys_(std::move(keys)) {}
  std::vector<VariableKey> keys_;
};

using FactorPtr = std::shared_ptr<const Factor>;

/// Gaussian prior on a pose; residual [log(R0^-1 R), p - p0].
class PosePriorFactor final : public Factor {
 public:
  PosePriorFactor(VariableKey key, Pose mean, Vector6 sigmas);
  int dim() const override { return 6; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;
  Vector6 residual(const Values& values) const;

 private:
  Pose mean_;
  Vector6 inv_sigmas_;
};

/// Gaussian prior on a 3-vector variable (velocity or anchor).
class Vector3PriorFactor final : public Factor {
 public:
  Vector3PriorFactor(VariableKey key, Vector3 mean, Vector3 sigmas);
  int dim() const override { return 3; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;

 private:
  Vector3 mean_;
  Vector3 inv_sigmas_;
};

/// Gaussian prior on an IMU bias.
class BiasPriorFactor final : public Factor {
 public:
  BiasPriorFactor(VariableKey key, ImuBias mean, Vector6 sigmas);
  int dim() const override { return 6; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;

 private:
  ImuBias mean_;
  Vector6 inv_sigmas_;
};

/// Preintegrated IMU constraint between two epochs:
/// keys [pose_i, vel_i, pose_j, vel_j, bias_i], 9-dim residual whitened by
/// the preintegration covariance.
class PreintFactor final : public Factor {
 public:
  PreintFactor(VariableKey pose_i, VariableKey vel_i, VariableKey pose_j,
               VariableKey vel_j, VariableKey bias_i, PreintegratedDelta delta,
               Vector3 gravity);
  int dim() const override { return 9; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;

  Vector9 residual(const Values& values) const;
  const PreintegratedDelta& delta() const { return delta_; }

 private:
  PreintegratedDelta delta_;
  Vector3 gravity_;
  Eigen::Matrix<double, 9, 9> sqrt_info_;  // lower-tri L^-1 with Sigma = L L^T
};

/// Gauss-Markov bias evolution between consecutive epochs, whitened by
/// sigma_bias_rw^2 * dt.
class BiasEvolutionFactor final : public Factor {
 public:
  BiasEvolutionFactor(VariableKey bias_t, VariableKey bias_t1, double dt,
                      ImuNoiseParams params);
  int dim() const override { return 6; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;

 private:
  double dt_;
  double decay_;
  ImuNoiseParams params_;
  Vector6 inv_sigmas_;
};

/// Ranging constraint between a pose and an anchor, with the configured
/// robust model on e = measured - predicted.
class RangeFactor final : public Factor {
 public:
  RangeFactor(VariableKey pose, VariableKey anchor, double measured_range,
              RangeNoiseModel model);
  int dim() const override { return 1; }
  double error(const Values& values) const override;
  LinearFactor linearize(const Values& values) const override;
  std::string describe() const override;

  double unwhitened_error(const Values& values) const;

 private:
  LossValue loss(double e) const;
  double measured_;
  RangeNoiseModel model_;
  double estar_ = 0.0;  // cached decision boundary (asymmetric only)
};

/// Sparse linearization of a whole graph at one estimate.
struct LinearSystem {
  std::vector<VariableKey> ordering;            // column block layout
  std::unordered_map<VariableKey, int, VariableKeyHash> offsets;
  int total_dim = 0;
  std::vector<LinearFactor> factors;

  /// Stacks the factor blocks into one sparse Jacobian / rhs pair.
  void assemble(Eigen::SparseMatrix<double>& jacobian, Eigen::VectorXd& rhs) const;
  int total_rows() const;
};

/// Factor container plus whole-graph evaluation.
class FactorGraph {
 public:
  void add(FactorPtr factor) { factors_.push_back(std::move(factor)); }
  size_t size() const { return factors_.size(); }
  const std::vector<FactorPtr>& factors() const { return factors_; }

  /// Sum of per-factor errors. Throws MissingVariableError if a referenced
  /// key is absent from values.
  double total_error(const Values& values) const;

  /// Linearizes every factor; ordering defaults to sorted keys.
  LinearSystem linearize(const Values& values) const;
  LinearSystem linearize(const Values& values,
                         const std::vector<VariableKey>& ordering) const;

  /// One factor per line.
  std::string dump() const;

 private:
  std::vector<FactorPtr> factors_;
};

}  // namespace rif
