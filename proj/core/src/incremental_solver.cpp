#include "rif/incremental_solver.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "rif/error.hpp"

namespace rif {

namespace {
constexpr int64_t kAnchorGroupBase = int64_t(1) << 40;
}

double RelinThresholds::of(VariableKind kind) const {
  switch (kind) {
    case VariableKind::pose:
      return pose;
    case VariableKind::velocity:
      return velocity;
    case VariableKind::bias:
      return bias;
    case VariableKind::anchor:
      return anchor;
  }
  return 0.0;
}

IncrementalSmoother::IncrementalSmoother(DIsam2Config config)
    : config_(std::move(config)), lambda_(config_.lambda_init) {
  if (!config_.valid()) {
    throw Error("IncrementalSmoother: invalid DIsam2Config");
  }
}

int64_t IncrementalSmoother::group_of(const VariableKey& key) const {
  return key.kind == VariableKind::anchor ? kAnchorGroupBase + key.index
                                          : int64_t(key.index);
}

void IncrementalSmoother::insert_variable(const VariableKey& key,
                                          const VariableValue& value,
                                          double lambda) {
  lin_points_.insert(key, value);
  deltas_[key] = Eigen::VectorXd::Zero(variable_dim(key.kind));
  var_lambda_[key] = lambda;
  if (key.kind == VariableKind::pose) {
    last_epoch_ = std::max(last_epoch_, key.index);
  }
}

Values IncrementalSmoother::estimate() const {
  Values v = lin_points_;
  for (const auto& [key, delta] : deltas_) {
    v.retract_in_place(key, delta);
  }
  return v;
}

VariableValue IncrementalSmoother::estimate_at(const VariableKey& key) const {
  if (!lin_points_.has(key)) {
    throw UnknownKeyError("estimate_at: unknown key " + key.name());
  }
  Values v;
  switch (key.kind) {
    case VariableKind::pose:
      v.insert(key, lin_points_.pose(key));
      break;
    case VariableKind::velocity:
    case VariableKind::anchor:
      v.insert(key, lin_points_.vector3(key));
      break;
    case VariableKind::bias:
      v.insert(key, lin_points_.bias(key));
      break;
  }
  v.retract_in_place(key, deltas_.at(key));
  switch (key.kind) {
    case VariableKind::pose:
      return v.pose(key);
    case VariableKind::velocity:
    case VariableKind::anchor:
      return v.vector3(key);
    case VariableKind::bias:
      return v.bias(key);
  }
  throw UnknownKeyError("estimate_at: unknown kind");
}

double IncrementalSmoother::lambda_of(const VariableKey& key) const {
  auto it = var_lambda_.find(key);
  return it == var_lambda_.end() ? 0.0 : it->second;
}

FactorGraph IncrementalSmoother::graph() const {
  FactorGraph g;
  for (const FactorPtr& f : factors_) g.add(f);
  return g;
}

double IncrementalSmoother::total_error() const {
  return graph().total_error(estimate());
}

std::vector<VariableKey> IncrementalSmoother::relin_candidates() const {
  std::vector<VariableKey> out;
  for (const auto& [key, delta] : deltas_) {
    const double threshold = config_.relin_threshold.of(key.kind);
    bool trip;
    if (key.kind == VariableKind::pose) {
      trip = delta.head<3>().norm() >= threshold ||
             delta.tail<3>().norm() >= 4.0 * threshold;
    } else {
      trip = delta.norm() >= threshold;
    }
    if (trip) out.push_back(key);
  }
  return out;
}

std::vector<int64_t> IncrementalSmoother::mark_dirty(
    const std::vector<int>& new_factor_indices,
    const std::vector<VariableKey>& relin_vars,
    const std::vector<VariableKey>& new_vars) const {
  std::set<int64_t> seed;
  auto mark_factor = [&](int idx) {
    for (const VariableKey& k : factors_[idx]->keys()) {
      seed.insert(group_of(k));
    }
  };
  for (int idx : new_factor_indices) mark_factor(idx);
  for (const VariableKey& v : relin_vars) {
    seed.insert(group_of(v));
    auto it = var_factors_.find(v);
    if (it != var_factors_.end()) {
      for (int idx : it->second) mark_factor(idx);
    }
  }
  for (const VariableKey& v : new_vars) seed.insert(group_of(v));

  // Close over ancestors in the current tree.
  std::set<int64_t> dirty;
  std::vector<int64_t> stack(seed.begin(), seed.end());
  while (!stack.empty()) {
    const int64_t g = stack.back();
    stack.pop_back();
    if (!dirty.insert(g).second) continue;
    auto it = cliques_.find(g);
    if (it != cliques_.end() && it->second.parent_group >= 0) {
      stack.push_back(it->second.parent_group);
    }
  }
  return {dirty.begin(), dirty.end()};  // ascending
}

void IncrementalSmoother::eliminate(const std::vector<int64_t>& dirty_groups,
                                    double trial_lambda,
                                    const std::vector<VariableKey>& new_vars) {
  const std::set<int64_t> dirty(dirty_groups.begin(), dirty_groups.end());
  const std::set<VariableKey> new_set(new_vars.begin(), new_vars.end());

  // Cached marginals of clean cliques whose parent is being rebuilt.
  std::map<int64_t, std::vector<const LinearFactor*>> clean_contribs;
  for (const auto& [g, clique] : cliques_) {
    if (dirty.count(g)) continue;
    if (clique.parent_group >= 0 && dirty.count(clique.parent_group) &&
        clique.marginal.rows() > 0) {
      clean_contribs[clique.parent_group].push_back(&clique.marginal);
    }
  }

  // Frontal variables per dirty group.
  std::map<int64_t, std::vector<VariableKey>> frontals;
  for (const auto& [key, delta] : deltas_) {
    const int64_t g = group_of(key);
    if (dirty.count(g)) frontals[g].push_back(key);
  }
  for (auto& [g, keys] : frontals) std::sort(keys.begin(), keys.end());

  std::map<int64_t, std::vector<LinearFactor>> pending;

  for (const int64_t g : dirty_groups) {
    auto fit = frontals.find(g);
    if (fit == frontals.end()) continue;  // group has no variables (stale id)
    const std::vector<VariableKey>& front = fit->second;

    // Gather contributions: original factors consumed here, cached clean
    // marginals, marginals produced earlier in this pass.
    std::vector<LinearFactor> rows;
    auto fbg = factors_by_group_.find(g);
    if (fbg != factors_by_group_.end()) {
      for (int idx : fbg->second) {
        rows.push_back(factors_[idx]->linearize(lin_points_));
      }
    }
    if (auto cc = clean_contribs.find(g); cc != clean_contribs.end()) {
      for (const LinearFactor* m : cc->second) rows.push_back(*m);
    }
    if (auto p = pending.find(g); p != pending.end()) {
      for (LinearFactor& m : p->second) rows.push_back(std::move(m));
      pending.erase(p);
    }

    // Column layout: frontals first, then separator ordered by group.
    std::map<VariableKey, int> col_of;
    int fdim = 0;
    for (const VariableKey& k : front) {
      col_of[k] = fdim;
      fdim += variable_dim(k.kind);
    }
    std::vector<VariableKey> separator;
    for (const LinearFactor& lf : rows) {
      for (const VariableKey& k : lf.keys) {
        if (!col_of.count(k)) {
          separator.push_back(k);
          col_of[k] = -1;  // placeholder
        }
      }
    }
    std::sort(separator.begin(), separator.end(),
              [&](const VariableKey& a, const VariableKey& b) {
                const int64_t ga = group_of(a), gb = group_of(b);
                return ga != gb ? ga < gb : a < b;
              });
    int sdim = 0;
    for (const VariableKey& k : separator) {
      col_of[k] = fdim + sdim;
      sdim += variable_dim(k.kind);
    }

    int nrows = 0;
    for (const LinearFactor& lf : rows) nrows += lf.rows();
    if (config_.damping_enabled) nrows += fdim;  // damping rows

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nrows, fdim + sdim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nrows);
    int row = 0;
    for (const LinearFactor& lf : rows) {
      for (size_t i = 0; i < lf.keys.size(); ++i) {
        a.block(row, col_of[lf.keys[i]], lf.rows(), lf.jacobians[i].cols()) =
            lf.jacobians[i];
      }
      b.segment(row, lf.rows()) = lf.rhs;
      row += lf.rows();
    }
    if (config_.damping_enabled) {
      for (const VariableKey& k : front) {
        const double lam = new_set.count(k) ? trial_lambda : var_lambda_.at(k);
        const int dim = variable_dim(k.kind);
        if (lam > 0) {
          a.block(row, col_of[k], dim, dim) =
              std::sqrt(lam) * Eigen::MatrixXd::Identity(dim, dim);
        }
        row += dim;
      }
    }

    if (nrows < fdim) {
      throw SingularSystemError("eliminate: underdetermined clique at group " +
                                std::to_string(g));
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const int keep = std::min(nrows, fdim + sdim);
    const Eigen::MatrixXd rs =
        Eigen::MatrixXd(qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>());
    Eigen::VectorXd qtb = qr.householderQ().transpose() * b;

    Clique clique;
    clique.group = g;
    clique.frontals = front;
    clique.separator = separator;
    clique.r = rs.topLeftCorner(fdim, fdim);
    clique.s = rs.topRightCorner(fdim, sdim);
    clique.d = qtb.head(fdim);
    for (int i = 0; i < fdim; ++i) {
      if (std::abs(clique.r(i, i)) < 1e-12) {
        throw SingularSystemError(
            "eliminate: indeterminant system, zero pivot in group " +
            std::to_string(g));
      }
    }

    const int mrows = std::min(nrows, fdim + sdim) - fdim;
    if (mrows > 0 && sdim > 0) {
      LinearFactor marginal;
      marginal.keys = separator;
      marginal.rhs = qtb.segment(fdim, mrows);
      int c = 0;
      for (const VariableKey& k : separator) {
        const int dim = variable_dim(k.kind);
        marginal.jacobians.push_back(rs.block(fdim, fdim + c, mrows, dim));
        c += dim;
      }
      clique.marginal = marginal;
      clique.parent_group = group_of(separator.front());
      pending[clique.parent_group].push_back(std::move(marginal));
    } else if (sdim > 0) {
      clique.parent_group = group_of(separator.front());
    } else {
      clique.parent_group = -1;
    }

    cliques_[g] = std::move(clique);
  }

  if (!pending.empty()) {
    // A marginal escaped the dirty set: the ancestor closure is broken.
    throw Error("eliminate: internal error, marginal left unconsumed");
  }
}

void IncrementalSmoother::back_substitute() {
  for (auto it = cliques_.rbegin(); it != cliques_.rend(); ++it) {
    Clique& c = it->second;
    Eigen::VectorXd sep_delta(c.s.cols());
    int off = 0;
    for (const VariableKey& k : c.separator) {
      const Eigen::VectorXd& d = deltas_.at(k);
      sep_delta.segment(off, d.size()) = d;
      off += static_cast<int>(d.size());
    }
    const Eigen::VectorXd rhs =
        c.d - (c.s.cols() > 0 ? Eigen::VectorXd(c.s * sep_delta)
                              : Eigen::VectorXd::Zero(c.d.size()));
    const Eigen::VectorXd sol =
        c.r.triangularView<Eigen::Upper>().solve(rhs);
    off = 0;
    for (const VariableKey& k : c.frontals) {
      Eigen::VectorXd& d = deltas_.at(k);
      d = sol.segment(off, d.size());
      off += static_cast<int>(d.size());
    }
  }
}

void IncrementalSmoother::bootstrap(const FactorGraph& graph,
                                    const Values& solution) {
  if (!factors_.empty()) {
    throw Error("bootstrap: smoother already holds factors");
  }
  for (const auto& [key, value] : solution) {
    insert_variable(key, value, config_.damping_enabled ? lambda_ : 0.0);
  }
  std::vector<VariableKey> new_vars;
  for (const auto& [key, delta] : deltas_) new_vars.push_back(key);

  std::vector<int> new_indices;
  for (const FactorPtr& f : graph.factors()) {
    for (const VariableKey& k : f->keys()) {
      if (!lin_points_.has(k)) {
        throw MissingInitializationError("bootstrap: variable " + k.name() +
                                         " missing from solution");
      }
    }
    const int idx = static_cast<int>(factors_.size());
    factors_.push_back(f);
    int64_t g = std::numeric_limits<int64_t>::max();
    for (const VariableKey& k : f->keys()) g = std::min(g, group_of(k));
    factor_group_.push_back(g);
    factors_by_group_[g].push_back(idx);
    for (const VariableKey& k : f->keys()) var_factors_[k].push_back(idx);
    new_indices.push_back(idx);
  }

  const auto dirty = mark_dirty(new_indices, {}, new_vars);
  eliminate(dirty, lambda_, new_vars);
  back_substitute();
}

UpdateDiagnostics IncrementalSmoother::update(
    const std::vector<FactorPtr>& new_factors, const Values& new_variable_inits) {
  const auto t0 = std::chrono::steady_clock::now();
  UpdateDiagnostics diag;
  diag.update_index = update_count_;

  // Insert new variables and factors.
  const int32_t last_epoch_before = last_epoch_;
  std::vector<VariableKey> new_vars;
  for (const auto& [key, value] : new_variable_inits) {
    if (lin_points_.has(key)) {
      throw Error("update: variable " + key.name() + " already exists");
    }
    insert_variable(key, value, config_.damping_enabled ? lambda_ : 0.0);
    new_vars.push_back(key);
  }
  std::vector<int> new_indices;
  const size_t factors_before = factors_.size();
  for (const FactorPtr& f : new_factors) {
    for (const VariableKey& k : f->keys()) {
      if (!lin_points_.has(k)) {
        throw MissingInitializationError(
            "update: factor " + f->describe() +
            " references uninitialized variable " + k.name());
      }
    }
    const int idx = static_cast<int>(factors_.size());
    factors_.push_back(f);
    int64_t g = std::numeric_limits<int64_t>::max();
    for (const VariableKey& k : f->keys()) g = std::min(g, group_of(k));
    factor_group_.push_back(g);
    factors_by_group_[g].push_back(idx);
    for (const VariableKey& k : f->keys()) var_factors_[k].push_back(idx);
    new_indices.push_back(idx);
  }

  const FactorGraph full = graph();
  diag.error_before = full.total_error(estimate());

  // Snapshot for the reject/retry path.
  std::optional<Values> lin_snapshot;
  std::optional<std::map<VariableKey, Eigen::VectorXd>> delta_snapshot;
  std::optional<std::map<int64_t, Clique>> clique_snapshot;
  if (config_.damping_enabled) {
    lin_snapshot = lin_points_;
    delta_snapshot = deltas_;
    clique_snapshot = cliques_;
  }

  auto rollback_insertion = [&]() {
    for (size_t i = factors_before; i < factors_.size(); ++i) {
      const int idx = static_cast<int>(i);
      auto& vec = factors_by_group_[factor_group_[i]];
      vec.erase(std::remove(vec.begin(), vec.end(), idx), vec.end());
      for (const VariableKey& k : factors_[i]->keys()) {
        auto& vf = var_factors_[k];
        vf.erase(std::remove(vf.begin(), vf.end(), idx), vf.end());
      }
    }
    factors_.resize(factors_before);
    factor_group_.resize(factors_before);
  };

  double trial_lambda = lambda_;
  int retries = 0;
  while (true) {
    diag.lambdas_tried.push_back(config_.damping_enabled ? trial_lambda : 0.0);

    // A rejection means the partial linear model disagreed with the
    // objective; retries relinearize everything so only the step's own
    // second-order terms remain and the lambda schedule can work.
    std::vector<VariableKey> relin;
    if (retries > 0) {
      for (const auto& [key, delta] : deltas_) relin.push_back(key);
    } else {
      relin = relin_candidates();
    }
    for (const VariableKey& v : relin) {
      lin_points_.retract_in_place(v, deltas_.at(v));
      deltas_.at(v).setZero();
    }

    const auto dirty = mark_dirty(new_indices, relin, new_vars);
    diag.cliques_relinearized = static_cast<int>(dirty.size());
    eliminate(dirty, trial_lambda, new_vars);
    back_substitute();

    diag.error_after = full.total_error(estimate());

    const bool accept =
        !config_.damping_enabled ||
        diag.error_after <= diag.error_before * (1.0 + 1e-12) + 1e-15;
    if (accept) break;
#ifdef RIF_DEBUG_UPDATE
    {
      double max_delta = 0;
      std::string max_key;
      for (const auto& [k, d] : deltas_) {
        if (d.norm() > max_delta) {
          max_delta = d.norm();
          max_key = k.name();
        }
      }
      const Values est = estimate();
      double worst_err = 0;
      std::string worst_f;
      for (const FactorPtr& f : factors_) {
        const double e = f->error(est);
        if (e > worst_err) {
          worst_err = e;
          worst_f = f->describe();
        }
      }
      std::fprintf(stderr,
                   "  reject u%d lambda %.3e before %.6f after %.6f maxdelta %.4f@%s "
                   "worst %.3f %s\n",
                   update_count_, trial_lambda, diag.error_before, diag.error_after,
                   max_delta, max_key.c_str(), worst_err, worst_f.c_str());
    }
#endif

    // Reject: restore the pre-update state and escalate lambda.
    lin_points_ = *lin_snapshot;
    deltas_ = *delta_snapshot;
    cliques_ = *clique_snapshot;
    if (trial_lambda >= config_.lambda_max || retries >= config_.max_inner_retries) {
      rollback_insertion();
      for (const VariableKey& k : new_vars) {
        deltas_.erase(k);
        var_lambda_.erase(k);
        lin_points_.erase(k);
      }
      last_epoch_ = last_epoch_before;
      throw LambdaOverflowError(
          "update: lambda reached lambda_max without error decrease");
    }
    trial_lambda = std::min(trial_lambda * config_.lambda_up_factor,
                            config_.lambda_max);
    ++retries;
  }

  // Accepted: freeze the damping of the new variables at the accepted value
  // and relax the carry-over lambda.
  if (config_.damping_enabled) {
    for (const VariableKey& k : new_vars) var_lambda_[k] = trial_lambda;
    lambda_ = std::max(trial_lambda / config_.lambda_down_factor,
                       config_.lambda_min);
  }
  ++update_count_;
  diag.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                t0)
          .count();
  return diag;
}

NavState IncrementalSmoother::extrapolate(
    std::span<const ImuSample> samples) const {
  const auto trace = extrapolate_trace(samples);
  if (trace.empty()) {
    throw NoSolvedStateError("extrapolate: no solved epoch");
  }
  return trace.back().second;
}

std::vector<std::pair<double, NavState>> IncrementalSmoother::extrapolate_trace(
    std::span<const ImuSample> samples) const {
  if (last_epoch_ < 0) {
    throw NoSolvedStateError("extrapolate: no solved epoch");
  }
  const Pose pose = std::get<Pose>(estimate_at(pose_key(last_epoch_)));
  const Vector3 vel = std::get<Vector3>(estimate_at(velocity_key(last_epoch_)));
  const ImuBias bias = std::get<ImuBias>(estimate_at(bias_key(last_epoch_)));

  NavState state{pose.rotation, vel, pose.position};
  std::vector<std::pair<double, NavState>> out;
  if (samples.empty()) {
    out.emplace_back(0.0, state);
    return out;
  }
  out.emplace_back(samples[0].t, state);
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    state = strapdown_step(state, bias, samples[i], samples[i + 1],
                           imu_params_.gravity);
    out.emplace_back(samples[i + 1].t, state);
  }
  return out;
}

}  // namespace rif
