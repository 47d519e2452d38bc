#include "rif/factor_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <algorithm>
#include <sstream>

#include "rif/error.hpp"

namespace rif {

int variable_dim(VariableKind kind) {
  switch (kind) {
    case VariableKind::pose:
      return 6;
    case VariableKind::velocity:
      return 3;
    case VariableKind::bias:
      return 6;
    case VariableKind::anchor:
      return 3;
  }
  return 0;
}

const char* variable_kind_name(VariableKind kind) {
  switch (kind) {
    case VariableKind::pose:
      return "pose";
    case VariableKind::velocity:
      return "vel";
    case VariableKind::bias:
      return "bias";
    case VariableKind::anchor:
      return "anchor";
  }
  return "?";
}

std::string VariableKey::name() const {
  std::ostringstream os;
  os << variable_kind_name(kind) << index;
  return os.str();
}

// ---------------------------------------------------------------------------
// Values

void Values::insert(const VariableKey& key, VariableValue value) {
  map_[key] = std::move(value);
}

void Values::set(const VariableKey& key, VariableValue value) {
  map_[key] = std::move(value);
}

const VariableValue& Values::at(const VariableKey& key) const {
  auto it = map_.find(key);
  if (it == map_.end()) {
    throw MissingVariableError("missing variable " + key.name());
  }
  return it->second;
}

const Pose& Values::pose(const VariableKey& key) const {
  return std::get<Pose>(at(key));
}

const Vector3& Values::vector3(const VariableKey& key) const {
  return std::get<Vector3>(at(key));
}

const ImuBias& Values::bias(const VariableKey& key) const {
  return std::get<ImuBias>(at(key));
}

void Values::retract_in_place(const VariableKey& key,
                              const Eigen::Ref<const Eigen::VectorXd>& delta) {
  auto it = map_.find(key);
  if (it == map_.end()) {
    throw MissingVariableError("retract: missing variable " + key.name());
  }
  switch (key.kind) {
    case VariableKind::pose: {
      Pose& p = std::get<Pose>(it->second);
      p.rotation = p.rotation * exp_so3(delta.head<3>());
      p.position += delta.tail<3>();
      break;
    }
    case VariableKind::velocity:
    case VariableKind::anchor:
      std::get<Vector3>(it->second) += delta.head<3>();
      break;
    case VariableKind::bias: {
      ImuBias& b = std::get<ImuBias>(it->second);
      b = b + Vector6(delta.head<6>());
      break;
    }
  }
}

Values Values::retract(const std::vector<VariableKey>& ordering,
                       const Eigen::VectorXd& delta) const {
  Values out = *this;
  int offset = 0;
  for (const VariableKey& key : ordering) {
    const int d = variable_dim(key.kind);
    out.retract_in_place(key, delta.segment(offset, d));
    offset += d;
  }
  return out;
}

std::vector<VariableKey> Values::keys() const {
  std::vector<VariableKey> out;
  out.reserve(map_.size());
  for (const auto& [k, v] : map_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// PosePriorFactor

PosePriorFactor::PosePriorFactor(VariableKey key, Pose mean, Vector6 sigmas)
    : Factor({key}), mean_(std::move(mean)), inv_sigmas_(sigmas.cwiseInverse()) {}

Vector6 PosePriorFactor::residual(const Values& values) const {
  const Pose& p = values.pose(keys_[0]);
  Vector6 r;
  r.head<3>() = log_so3(mean_.rotation.inverse() * p.rotation);
  r.tail<3>() = p.position - mean_.position;
  return r;
}

double PosePriorFactor::error(const Values& values) const {
  return 0.5 * (inv_sigmas_.asDiagonal() * residual(values)).squaredNorm();
}

LinearFactor PosePriorFactor::linearize(const Values& values) const {
  const Vector6 r = residual(values);
  Eigen::Matrix<double, 6, 6> j = Eigen::Matrix<double, 6, 6>::Zero();
  j.block<3, 3>(0, 0) = so3_right_jacobian_inverse(r.head<3>());
  j.block<3, 3>(3, 3) = Matrix3::Identity();
  LinearFactor lf;
  lf.keys = keys_;
  lf.jacobians.push_back(inv_sigmas_.asDiagonal() * j);
  lf.rhs = -(inv_sigmas_.asDiagonal() * r);
  return lf;
}

std::string PosePriorFactor::describe() const {
  return "PosePrior(" + keys_[0].name() + ")";
}

// ---------------------------------------------------------------------------
// Vector3PriorFactor

Vector3PriorFactor::Vector3PriorFactor(VariableKey key, Vector3 mean, Vector3 sigmas)
    : Factor({key}), mean_(std::move(mean)), inv_sigmas_(sigmas.cwiseInverse()) {}

double Vector3PriorFactor::error(const Values& values) const {
  const Vector3 r = values.vector3(keys_[0]) - mean_;
  return 0.5 * (inv_sigmas_.asDiagonal() * r).squaredNorm();
}

LinearFactor Vector3PriorFactor::linearize(const Values& values) const {
  const Vector3 r = values.vector3(keys_[0]) - mean_;
  LinearFactor lf;
  lf.keys = keys_;
  lf.jacobians.push_back(Matrix3(inv_sigmas_.asDiagonal()));
  lf.rhs = -(inv_sigmas_.asDiagonal() * r);
  return lf;
}

std::string Vector3PriorFactor::describe() const {
  return "Vector3Prior(" + keys_[0].name() + ")";
}

// ---------------------------------------------------------------------------
// BiasPriorFactor

BiasPriorFactor::BiasPriorFactor(VariableKey key, ImuBias mean, Vector6 sigmas)
    : Factor({key}), mean_(std::move(mean)), inv_sigmas_(sigmas.cwiseInverse()) {}

double BiasPriorFactor::error(const Values& values) const {
  const Vector6 r = values.bias(keys_[0]).vector() - mean_.vector();
  return 0.5 * (inv_sigmas_.asDiagonal() * r).squaredNorm();
}

LinearFactor BiasPriorFactor::linearize(const Values& values) const {
  const Vector6 r = values.bias(keys_[0]).vector() - mean_.vector();
  LinearFactor lf;
  lf.keys = keys_;
  lf.jacobians.push_back(Eigen::MatrixXd(inv_sigmas_.asDiagonal()));
  lf.rhs = -(inv_sigmas_.asDiagonal() * r);
  return lf;
}

std::string BiasPriorFactor::describe() const {
  return "BiasPrior(" + keys_[0].name() + ")";
}

// ---------------------------------------------------------------------------
// PreintFactor

PreintFactor::PreintFactor(VariableKey pose_i, VariableKey vel_i,
                           VariableKey pose_j, VariableKey vel_j,
                           VariableKey bias_i, PreintegratedDelta delta,
                           Vector3 gravity)
    : Factor({pose_i, vel_i, pose_j, vel_j, bias_i}),
      delta_(std::move(delta)),
      gravity_(std::move(gravity)) {
  Matrix9 cov = delta_.covariance;
  // Guard against numerically semi-definite covariances.
  double jitter = 1e-14 * std::max(1.0, cov.trace() / 9.0);
  Eigen::LLT<Matrix9> llt(cov);
  for (int attempt = 0; llt.info() != Eigen::Success && attempt < 8; ++attempt) {
    cov += jitter * Matrix9::Identity();
    jitter *= 100.0;
    llt.compute(cov);
  }
  if (llt.info() != Eigen::Success) {
    throw SingularSystemError("PreintFactor: covariance not positive definite");
  }
  sqrt_info_ = Matrix9(llt.matrixL()).inverse();
}

Vector9 PreintFactor::residual(const Values& values) const {
  const Pose& pi = values.pose(keys_[0]);
  const Pose& pj = values.pose(keys_[2]);
  NavState si{pi.rotation, values.vector3(keys_[1]), pi.position};
  NavState sj{pj.rotation, values.vector3(keys_[3]), pj.position};
  return preint_residual(si, sj, values.bias(keys_[4]), delta_, gravity_);
}

double PreintFactor::error(const Values& values) const {
  return 0.5 * (sqrt_info_ * residual(values)).squaredNorm();
}

LinearFactor PreintFactor::linearize(const Values& values) const {
  const Pose& pi = values.pose(keys_[0]);
  const Pose& pj = values.pose(keys_[2]);
  const Vector3& vi = values.vector3(keys_[1]);
  const Vector3& vj = values.vector3(keys_[3]);
  const ImuBias& bi = values.bias(keys_[4]);
  const double dt = delta_.dt_total;

  const Vector9 r = residual(values);
  const Vector3 r_rot = r.head<3>();
  const Matrix3 inv_jr = so3_right_jacobian_inverse(r_rot);
  const Matrix3 ri_t = pi.rotation.matrix().transpose();
  const Matrix3 rj_t_ri = pj.rotation.matrix().transpose() * pi.rotation.matrix();

  Eigen::Matrix<double, 9, 6> h_pose_i = Eigen::Matrix<double, 9, 6>::Zero();
  h_pose_i.block<3, 3>(0, 0) = -inv_jr * rj_t_ri;
  h_pose_i.block<3, 3>(3, 0) = skew(ri_t * (vj - vi - gravity_ * dt));
  h_pose_i.block<3, 3>(6, 0) = skew(ri_t * (pj.position - pi.position -
                                            vi * dt - 0.5 * gravity_ * dt * dt));
  h_pose_i.block<3, 3>(6, 3) = -ri_t;

  Eigen::Matrix<double, 9, 3> h_vel_i = Eigen::Matrix<double, 9, 3>::Zero();
  h_vel_i.block<3, 3>(3, 0) = -ri_t;
  h_vel_i.block<3, 3>(6, 0) = -ri_t * dt;

  Eigen::Matrix<double, 9, 6> h_pose_j = Eigen::Matrix<double, 9, 6>::Zero();
  h_pose_j.block<3, 3>(0, 0) = inv_jr;
  h_pose_j.block<3, 3>(6, 3) = ri_t;

  Eigen::Matrix<double, 9, 3> h_vel_j = Eigen::Matrix<double, 9, 3>::Zero();
  h_vel_j.block<3, 3>(3, 0) = ri_t;

  // Bias Jacobian: rotation row needs the chain through the exp-map
  // correction; velocity/position rows are the stored first-order terms.
  const Vector3 dbg = bi.gyro_bias - delta_.bias_lin_point.gyro_bias;
  const Matrix3 jr_b = so3_right_jacobian(delta_.dR_dbg() * dbg);
  const Matrix3 exp_r_t = exp_so3(r_rot).matrix().transpose();
  Eigen::Matrix<double, 9, 6> h_bias = Eigen::Matrix<double, 9, 6>::Zero();
  h_bias.block<3, 3>(0, 3) = -inv_jr * exp_r_t * jr_b * delta_.dR_dbg();
  h_bias.block<3, 3>(3, 0) = -delta_.dv_dba();
  h_bias.block<3, 3>(3, 3) = -delta_.dv_dbg();
  h_bias.block<3, 3>(6, 0) = -delta_.dp_dba();
  h_bias.block<3, 3>(6, 3) = -delta_.dp_dbg();

  LinearFactor lf;
  lf.keys = keys_;
  lf.jacobians = {sqrt_info_ * h_pose_i, sqrt_info_ * h_vel_i,
                  sqrt_info_ * h_pose_j, sqrt_info_ * h_vel_j,
                  sqrt_info_ * h_bias};
  lf.rhs = -(sqrt_info_ * r);
  return lf;
}

std::string PreintFactor::describe() const {
  std::ostringstream os;
  os << "Preint(" << keys_[0].name() << "," << keys_[1].name() << " -> "
     << keys_[2].name() << "," << keys_[3].name() << "; " << keys_[4].name()
     << "; dt=" << delta_.dt_total << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// BiasEvolutionFactor

BiasEvolutionFactor::BiasEvolutionFactor(VariableKey bias_t, VariableKey bias_t1,
                                         double dt, ImuNoiseParams params)
    : Factor({bias_t, bias_t1}), dt_(dt), params_(std::move(params)) {
  if (dt <= 0) {
    throw NonPositiveDtError("BiasEvolutionFactor: dt must be positive");
  }
  decay_ = std::exp(-dt / params_.tau_bias);
  // Brownian-limit variance: sigma_rw^2 * dt.
  inv_sigmas_ = (params_.sigma_bias_rw * std::sqrt(dt)).cwiseInverse();
}

double BiasEvolutionFactor::error(const Values& values) const {
  const Vector6 r =
      bias_residual(values.bias(keys_[0]), values.bias(keys_[1]), dt_, params_);
  return 0.5 * (inv_sigmas_.asDiagonal() * r).squaredNorm();
}

LinearFactor BiasEvolutionFactor::linearize(const Values& values) const {
  const Vector6 r =
      bias_residual(values.bias(keys_[0]), values.bias(keys_[1]), dt_, params_);
  LinearFactor lf;
  lf.keys = keys_;
  lf.jacobians.push_back(Eigen::MatrixXd(inv_sigmas_.asDiagonal()) * -decay_);
  lf.jacobians.push_back(Eigen::MatrixXd(inv_sigmas_.asDiagonal()));
  lf.rhs = -(inv_sigmas_.asDiagonal() * r);
  return lf;
}

std::string BiasEvolutionFactor::describe() const {
  std::ostringstream os;
  os << "BiasEvolution(" << keys_[0].name() << " -> " << keys_[1].name()
     << "; dt=" << dt_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// RangeFactor

RangeFactor::RangeFactor(VariableKey pose, VariableKey anchor,
                         double measured_range, RangeNoiseModel model)
    : Factor({pose, anchor}), measured_(measured_range), model_(std::move(model)) {
  if (model_.kind == NoiseKind::asymmetric) {
    estar_ = decision_boundary(model_.sigma_r, model_.effective_gamma());
  }
}

LossValue RangeFactor::loss(double e) const {
  return robust_loss(e, model_, estar_);
}

double RangeFactor::unwhitened_error(const Values& values) const {
  const Pose& p = values.pose(keys_[0]);
  const Vector3& a = values.vector3(keys_[1]);
  return measured_ - (p.position - a).norm();
}

double RangeFactor::error(const Values& values) const {
  const Pose& p = values.pose(keys_[0]);
  const Vector3& a = values.vector3(keys_[1]);
  const RangePrediction pred = predict_range(p.position, a);
  return loss(measured_ - pred.range).rho;
}

LinearFactor RangeFactor::linearize(const Values& values) const {
  const Pose& p = values.pose(keys_[0]);
  const Vector3& a = values.vector3(keys_[1]);
  RangePrediction pred;
  try {
    pred = predict_range(p.position, a);
  } catch (const DegenerateRangeError&) {
    throw DegenerateRangeError("linearize: degenerate range factor " + describe());
  }
  const double e = measured_ - pred.range;
  const double sw = std::sqrt(loss(e).weight);

  LinearFactor lf;
  lf.keys = keys_;
  Eigen::MatrixXd j_pose = Eigen::MatrixXd::Zero(1, 6);
  j_pose.block<1, 3>(0, 3) = -pred.jacobian;  // de/dp
  lf.jacobians.push_back(sw * j_pose);
  lf.jacobians.push_back(Eigen::MatrixXd(sw * pred.jacobian));  // de/dA
  lf.rhs = Eigen::VectorXd::Constant(1, -sw * e);
  return lf;
}

std::string RangeFactor::describe() const {
  std::ostringstream os;
  os << "Range(" << keys_[0].name() << " -> " << keys_[1].name()
     << "; r=" << measured_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// LinearSystem / FactorGraph

int LinearSystem::total_rows() const {
  int rows = 0;
  for (const LinearFactor& f : factors) rows += f.rows();
  return rows;
}

void LinearSystem::assemble(Eigen::SparseMatrix<double>& jacobian,
                            Eigen::VectorXd& rhs) const {
  const int rows = total_rows();
  rhs.resize(rows);
  std::vector<Eigen::Triplet<double>> triplets;
  int row = 0;
  for (const LinearFactor& f : factors) {
    for (size_t i = 0; i < f.keys.size(); ++i) {
      const int col0 = offsets.at(f.keys[i]);
      const Eigen::MatrixXd& block = f.jacobians[i];
      for (int r = 0; r < block.rows(); ++r) {
        for (int c = 0; c < block.cols(); ++c) {
          if (block(r, c) != 0.0) {
            triplets.emplace_back(row + r, col0 + c, block(r, c));
          }
        }
      }
    }
    rhs.segment(row, f.rows()) = f.rhs;
    row += f.rows();
  }
  jacobian.resize(rows, total_dim);
  jacobian.setFromTriplets(triplets.begin(), triplets.end());
}

double FactorGraph::total_error(const Values& values) const {
  double sum = 0.0;
  for (const FactorPtr& f : factors_) sum += f->error(values);
  return sum;
}

LinearSystem FactorGraph::linearize(const Values& values) const {
  std::vector<VariableKey> ordering;
  {
    std::unordered_map<VariableKey, bool, VariableKeyHash> seen;
    for (const FactorPtr& f : factors_) {
      for (const VariableKey& k : f->keys()) {
        if (!seen[k]) {
          seen[k] = true;
          ordering.push_back(k);
        }
      }
    }
    std::sort(ordering.begin(), ordering.end());
  }
  return linearize(values, ordering);
}

LinearSystem FactorGraph::linearize(const Values& values,
                                    const std::vector<VariableKey>& ordering) const {
  LinearSystem sys;
  sys.ordering = ordering;
  for (const VariableKey& k : ordering) {
    sys.offsets[k] = sys.total_dim;
    sys.total_dim += variable_dim(k.kind);
  }
  sys.factors.reserve(factors_.size());
  for (const FactorPtr& f : factors_) {
    for (const VariableKey& k : f->keys()) {
      if (!values.has(k)) {
        throw MissingVariableError("linearize: missing variable " + k.name() +
                                   " for factor " + f->describe());
      }
      if (!sys.offsets.count(k)) {
        throw MissingVariableError("linearize: variable " + k.name() +
                                   " absent from ordering");
      }
    }
    sys.factors.push_back(f->linearize(values));
  }
  return sys;
}

std::string FactorGraph::dump() const {
  std::ostringstream os;
  for (const FactorPtr& f : factors_) os << f->describe() << "\n";
  return os.str();
}

}  // namespace rif
