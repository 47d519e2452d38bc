#include "rif/batch_solver.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

#include "rif/error.hpp"

namespace rif {

namespace {

// Interpolated sample at time t between a and b.
ImuSample lerp_sample(const ImuSample& a, const ImuSample& b, double t) {
  const double w = (t - a.t) / (b.t - a.t);
  ImuSample s;
  s.t = t;
  s.gyro = (1 - w) * a.gyro + w * b.gyro;
  s.accel = (1 - w) * a.accel + w * b.accel;
  return s;
}

}  // namespace

LmResult optimize(const FactorGraph& graph, const Values& initial_values,
                  const LmConfig& config) {
  if (!config.valid()) {
    throw Error("optimize: invalid LmConfig");
  }

  LmResult result;
  result.values = initial_values;
  result.final_error = graph.total_error(result.values);

  double lambda = config.lambda_init;
  bool any_accepted = false;

  for (int outer = 0; outer < config.max_iterations; ++outer) {
    const LinearSystem sys = graph.linearize(result.values);
    Eigen::SparseMatrix<double> jac;
    Eigen::VectorXd rhs;
    sys.assemble(jac, rhs);

    const Eigen::SparseMatrix<double> hessian =
        Eigen::SparseMatrix<double>(jac.transpose()) * jac;
    const Eigen::VectorXd gradient = jac.transpose() * rhs;

    Eigen::VectorXd diag = hessian.diagonal();
    const double diag_floor = 1e-10 * std::max(1.0, diag.maxCoeff());
    diag = diag.cwiseMax(diag_floor);

    bool stepped = false;
    while (true) {
      Eigen::SparseMatrix<double> damped = hessian;
      for (int i = 0; i < damped.rows(); ++i) {
        damped.coeffRef(i, i) += lambda * diag[i];
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      bool solved = solver.info() == Eigen::Success;
      Eigen::VectorXd delta;
      if (solved) {
        delta = solver.solve(gradient);
        solved = solver.info() == Eigen::Success && delta.allFinite();
      }

      if (solved && delta.norm() < config.abs_error_tol) {
        // Already at a stationary point; leave values untouched.
        result.converged = true;
        return result;
      }

      double candidate_error = std::numeric_limits<double>::infinity();
      Values candidate;
      if (solved) {
        candidate = result.values.retract(sys.ordering, delta);
        candidate_error = graph.total_error(candidate);
      }

      if (solved && candidate_error < result.final_error) {
        const double prev_error = result.final_error;
        result.values = std::move(candidate);
        result.final_error = candidate_error;
        result.iterations += 1;
        result.error_history.push_back(candidate_error);
        any_accepted = true;
        stepped = true;
        lambda = std::max(lambda / config.lambda_down_factor, config.lambda_min);
        const double rel =
            (prev_error - candidate_error) / std::max(prev_error, 1e-300);
        if (rel < config.rel_error_tol || delta.norm() < config.abs_error_tol) {
          result.converged = true;
          return result;
        }
        break;  // relinearize
      }

      // Rejected: raise lambda and retry this linearization.
      if (lambda >= config.lambda_max) {
        if (!any_accepted) {
          if (!solved) {
            throw SingularSystemError(
                "optimize: damped normal equations rank-deficient at lambda_max");
          }
          throw LambdaOverflowError(
              "optimize: lambda exceeded lambda_max without an accepted step");
        }
        return result;  // stalled after progress; best values so far
      }
      lambda = std::min(lambda * config.lambda_up_factor, config.lambda_max);
    }

    if (!stepped) break;
  }
  return result;
}

std::vector<RangeEpoch> group_epochs(const std::vector<RangeMeasurement>& ranges,
                                     double tol) {
  std::vector<RangeEpoch> epochs;
  for (const RangeMeasurement& m : ranges) {
    if (epochs.empty() || m.t - epochs.back().t > tol) {
      epochs.push_back(RangeEpoch{m.t, {}});
    }
    epochs.back().measurements.push_back(m);
  }
  return epochs;
}

std::vector<ImuSample> slice_imu(const std::vector<ImuSample>& stream, double t0,
                                 double t1) {
  std::vector<ImuSample> out;
  if (stream.size() < 2 || t1 <= t0) return out;
  const double lo = std::max(t0, stream.front().t);
  const double hi = std::min(t1, stream.back().t);
  if (hi <= lo) return out;

  auto it = std::lower_bound(stream.begin(), stream.end(), lo,
                             [](const ImuSample& s, double t) { return s.t < t; });
  if (it == stream.begin()) ++it;
  // Boundary sample at lo, interpolated between neighbors.
  out.push_back(lerp_sample(*(it - 1), *it, lo));
  for (; it != stream.end() && it->t < hi; ++it) {
    if (it->t > lo) out.push_back(*it);
  }
  if (it != stream.end()) {
    out.push_back(lerp_sample(*(it - 1), *it, hi));
  } else {
    out.back().t = hi;  // unreachable given hi <= back().t
  }
  return out;
}

Vector3 multilaterate(const std::vector<Vector3>& anchor_positions,
                      const std::vector<double>& ranges, const Vector3& guess,
                      int iterations) {
  Vector3 x = guess;
  for (int it = 0; it < iterations; ++it) {
    Matrix3 h = Matrix3::Zero();
    Vector3 g = Vector3::Zero();
    for (size_t i = 0; i < anchor_positions.size(); ++i) {
      const Vector3 diff = x - anchor_positions[i];
      const double d = std::max(diff.norm(), 1e-9);
      const Vector3 j = diff / d;
      const double r = d - ranges[i];
      h += j * j.transpose();
      g += j * r;
    }
    h += 1e-9 * Matrix3::Identity();
    const Vector3 step = h.ldlt().solve(-g);
    x += step;
    if (step.norm() < 1e-10) break;
  }
  return x;
}

InitializationResult initialize(const std::vector<ImuSample>& imu_stream,
                                const std::vector<RangeMeasurement>& range_stream,
                                const std::vector<Anchor>& anchors,
                                double window,
                                const InitializationConfig& config) {
  if (imu_stream.size() < 2) {
    throw InsufficientImuError("initialize: need at least 2 IMU samples");
  }
  const double t_start = std::max(imu_stream.front().t, range_stream.empty()
                                                            ? imu_stream.front().t
                                                            : range_stream.front().t);
  const double t_end = t_start + window;

  std::vector<RangeMeasurement> in_window;
  for (const RangeMeasurement& m : range_stream) {
    if (m.t >= t_start && m.t <= t_end) in_window.push_back(m);
  }
  std::vector<RangeEpoch> epochs = group_epochs(in_window);

  std::unordered_map<std::string, int> anchor_ordinal;
  for (size_t i = 0; i < anchors.size(); ++i) {
    anchor_ordinal[anchors[i].id] = static_cast<int>(i);
  }

  // Distinct, non-collinear anchors ranged inside the window.
  std::vector<int> ranged;
  {
    std::vector<bool> seen(anchors.size(), false);
    for (const RangeMeasurement& m : in_window) {
      auto it = anchor_ordinal.find(m.anchor_id);
      if (it == anchor_ordinal.end()) {
        throw ParseError("initialize: range to unknown anchor " + m.anchor_id);
      }
      if (!seen[it->second]) {
        seen[it->second] = true;
        ranged.push_back(it->second);
      }
    }
  }
  if (ranged.size() < 3) {
    throw InsufficientAnchorsError("initialize: fewer than 3 distinct anchors in window");
  }
  {
    Eigen::MatrixXd spread(ranged.size() - 1, 3);
    for (size_t i = 1; i < ranged.size(); ++i) {
      spread.row(i - 1) =
          (anchors[ranged[i]].position - anchors[ranged[0]].position).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(spread);
    if (svd.singularValues().size() < 2 || svd.singularValues()[1] < 1e-6) {
      throw InsufficientAnchorsError("initialize: ranged anchors are collinear");
    }
  }

  const double imu_span = std::min(imu_stream.back().t, t_end) -
                          std::max(imu_stream.front().t, t_start);
  if (imu_span < 1.0) {
    throw InsufficientImuError("initialize: less than 1 s of IMU data in window");
  }
  if (epochs.empty()) {
    throw InsufficientAnchorsError("initialize: no range epochs in window");
  }

  // Roll/pitch seed: rotate the mean specific-force direction onto +z.
  Vector3 accel_mean = Vector3::Zero();
  int accel_count = 0;
  for (const ImuSample& s : imu_stream) {
    if (s.t >= t_start && s.t <= t_end) {
      accel_mean += s.accel;
      ++accel_count;
    }
  }
  Rotation r0;
  if (accel_count > 0 && accel_mean.norm() > 1e-6) {
    const Vector3 up_body = accel_mean.normalized();
    const Vector3 up_world(0, 0, 1);
    const Vector3 axis = up_body.cross(up_world);
    const double s = axis.norm();
    const double c = up_body.dot(up_world);
    if (s > 1e-12) {
      r0 = exp_so3(axis / s * std::atan2(s, c));
    } else if (c < 0) {
      r0 = exp_so3(Vector3(M_PI, 0, 0));
    }
  }

  // Per-epoch position seeds: most recent measurement per anchor within
  // +-1 s, multilaterated with the previous epoch as warm start.
  Vector3 site_center = Vector3::Zero();
  for (const Anchor& a : anchors) site_center += a.position;
  site_center /= static_cast<double>(anchors.size());

  std::vector<Vector3> seeds(epochs.size());
  Vector3 prev_seed = site_center;
  for (size_t e = 0; e < epochs.size(); ++e) {
    std::unordered_map<std::string, RangeMeasurement> latest;
    for (const RangeMeasurement& m : in_window) {
      if (std::abs(m.t - epochs[e].t) <= 1.0) {
        auto it = latest.find(m.anchor_id);
        if (it == latest.end() ||
            std::abs(m.t - epochs[e].t) < std::abs(it->second.t - epochs[e].t)) {
          latest[m.anchor_id] = m;
        }
      }
    }
    std::vector<Vector3> pos;
    std::vector<double> rng;
    for (const auto& [id, m] : latest) {
      pos.push_back(anchors[anchor_ordinal[id]].position);
      rng.push_back(m.range);
    }
    seeds[e] = pos.size() >= 3 ? multilaterate(pos, rng, prev_seed) : prev_seed;
    prev_seed = seeds[e];
  }

  // Joint graph over the window.
  InitializationResult out;
  Values& values = out.values;
  FactorGraph& graph = out.graph;

  for (size_t i = 0; i < anchors.size(); ++i) {
    values.insert(anchor_key(static_cast<int>(i)), anchors[i].position);
    graph.add(std::make_shared<Vector3PriorFactor>(
        anchor_key(static_cast<int>(i)), anchors[i].position,
        Vector3::Constant(anchors[i].prior_sigma)));
  }

  graph.add(std::make_shared<BiasPriorFactor>(bias_key(0), config.factory_bias,
                                              config.factory_bias_sigma));

  for (size_t e = 0; e < epochs.size(); ++e) {
    const int idx = static_cast<int>(e);
    const Vector3 vel = e == 0 ? Vector3::Zero()
                               : Vector3((seeds[e] - seeds[e - 1]) /
                                         std::max(epochs[e].t - epochs[e - 1].t, 1e-6));
    values.insert(pose_key(idx), Pose{r0, seeds[e]});
    values.insert(velocity_key(idx), vel);
    values.insert(bias_key(idx), config.factory_bias);

    for (const RangeMeasurement& m : epochs[e].measurements) {
      graph.add(std::make_shared<RangeFactor>(pose_key(idx),
                                              anchor_key(anchor_ordinal[m.anchor_id]),
                                              m.range, config.noise_model));
    }
    if (e > 0) {
      const auto samples = slice_imu(imu_stream, epochs[e - 1].t, epochs[e].t);
      if (samples.size() >= 2) {
        graph.add(std::make_shared<PreintFactor>(
            pose_key(idx - 1), velocity_key(idx - 1), pose_key(idx),
            velocity_key(idx), bias_key(idx - 1),
            integrate(samples, config.factory_bias, config.imu_params),
            config.imu_params.gravity));
      }
      graph.add(std::make_shared<BiasEvolutionFactor>(
          bias_key(idx - 1), bias_key(idx), epochs[e].t - epochs[e - 1].t,
          config.imu_params));
    }
    out.epoch_times.push_back(epochs[e].t);
  }

  out.lm = optimize(graph, values, config.lm);
  out.values = out.lm.values;
  out.initial_orientation = out.values.pose(pose_key(0)).rotation;
  return out;
}

}  // namespace rif
