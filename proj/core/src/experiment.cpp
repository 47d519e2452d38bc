#include "rif/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rif/error.hpp"

namespace rif {

const char* solver_kind_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::isam2_gn:
      return "isam2";
    case SolverKind::disam2:
      return "disam2";
    case SolverKind::batch:
      return "batch";
  }
  return "?";
}

const char* noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian:
      return "gaussian";
    case NoiseKind::huber:
      return "huber";
    case NoiseKind::cauchy:
      return "cauchy";
    case NoiseKind::asymmetric:
      return "asym";
  }
  return "?";
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "isam2") return SolverKind::isam2_gn;
  if (s == "disam2") return SolverKind::disam2;
  if (s == "batch") return SolverKind::batch;
  throw Error("unknown solver kind: " + s);
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "huber") return NoiseKind::huber;
  if (s == "cauchy") return NoiseKind::cauchy;
  if (s == "asym" || s == "asymmetric") return NoiseKind::asymmetric;
  throw Error("unknown noise kind: " + s);
}

std::vector<RangeMeasurement> downsample_ranges(
    const std::vector<RangeMeasurement>& ranges, double target_hz) {
  if (target_hz <= 0 || ranges.empty()) return ranges;

  // Token bucket over per-timestamp tick groups: budget accrues at the
  // target cumulative rate; within a tick the anchors that have waited
  // longest since last being kept win, so diversity survives heavy
  // decimation.
  std::vector<RangeMeasurement> out;
  std::unordered_map<std::string, double> last_kept;
  const double cap = std::max(1.0, 0.25 * target_hz);
  double budget = cap;  // the first tick's burst passes through
  double prev_t = ranges.front().t;

  size_t i = 0;
  while (i < ranges.size()) {
    size_t j = i;
    while (j < ranges.size() && ranges[j].t - ranges[i].t < 1e-9) ++j;

    budget = std::min(cap, budget + (ranges[i].t - prev_t) * target_hz);
    prev_t = ranges[i].t;

    int n_keep = std::min<int>(static_cast<int>(budget), static_cast<int>(j - i));
    if (n_keep > 0) {
      std::vector<size_t> order;
      for (size_t k = i; k < j; ++k) order.push_back(k);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        auto ita = last_kept.find(ranges[a].anchor_id);
        auto itb = last_kept.find(ranges[b].anchor_id);
        const double wa = ita == last_kept.end() ? -1.0 : ita->second;
        const double wb = itb == last_kept.end() ? -1.0 : itb->second;
        return wa < wb;  // least recently kept first
      });
      for (int k = 0; k < n_keep; ++k) {
        out.push_back(ranges[order[k]]);
        last_kept[ranges[order[k]].anchor_id] = ranges[order[k]].t;
      }
      std::stable_sort(out.end() - n_keep, out.end(),
                       [](const RangeMeasurement& a, const RangeMeasurement& b) {
                         return a.anchor_id < b.anchor_id;
                       });
      budget -= n_keep;
    }
    i = j;
  }
  return out;
}

namespace {

NavState predict_next(const NavState& prev, const ImuBias& bias,
                      const PreintegratedDelta& delta, const Vector3& gravity) {
  const double dt = delta.dt_total;
  const Vector3 dbg = bias.gyro_bias - delta.bias_lin_point.gyro_bias;
  const Vector3 dba = bias.accel_bias - delta.bias_lin_point.accel_bias;
  const Rotation dR = delta.delta_R * exp_so3(delta.dR_dbg() * dbg);
  const Vector3 dv = delta.delta_v + delta.dv_dbg() * dbg + delta.dv_dba() * dba;
  const Vector3 dp = delta.delta_p + delta.dp_dbg() * dbg + delta.dp_dba() * dba;

  NavState out;
  out.rotation = prev.rotation * dR;
  out.velocity = prev.velocity + gravity * dt + prev.rotation * dv;
  out.position = prev.position + prev.velocity * dt + 0.5 * gravity * dt * dt +
                 prev.rotation * dp;
  return out;
}

}  // namespace

FusionResult fuse(const std::vector<ImuSample>& imu,
                  const std::vector<RangeMeasurement>& ranges_in,
                  const std::vector<Anchor>& anchors, const FusionOptions& options) {
  FusionResult result;
  if (imu.size() < 2 || ranges_in.empty()) {
    throw InsufficientImuError("fuse: empty input stream");
  }

  std::vector<RangeMeasurement> ranges = ranges_in;
  std::stable_sort(ranges.begin(), ranges.end(),
                   [](const RangeMeasurement& a, const RangeMeasurement& b) {
                     return a.t < b.t;
                   });
  if (options.rate_limit > 0) {
    ranges = downsample_ranges(ranges, options.rate_limit);
  }

  const double t_start = std::max(imu.front().t, ranges.front().t);
  const double t_overlap = std::min(imu.back().t, ranges.back().t);
  if (t_overlap - t_start < options.init_window) {
    throw InsufficientImuError("fuse: less than init_window of overlapping data");
  }

  InitializationConfig init_cfg = options.init;
  init_cfg.noise_model = options.noise_model;

  std::unordered_map<std::string, int> anchor_ordinal;
  for (size_t i = 0; i < anchors.size(); ++i) {
    anchor_ordinal[anchors[i].id] = static_cast<int>(i);
  }

  if (options.solver == SolverKind::batch) {
    // One joint optimization over the whole stream.
    const auto init =
        initialize(imu, ranges, anchors, t_overlap - t_start + 1.0, init_cfg);
    result.epochs = static_cast<int>(init.epoch_times.size());
    for (size_t e = 0; e < init.epoch_times.size(); ++e) {
      const Pose& p = init.values.pose(pose_key(static_cast<int>(e)));
      result.trajectory.points.push_back(
          TrajectoryPoint{init.epoch_times[e], p.position, p.rotation});
    }
    return result;
  }

  const auto init =
      initialize(imu, ranges, anchors, options.init_window, init_cfg);

  DIsam2Config smoother_cfg = options.smoother;
  smoother_cfg.damping_enabled = options.solver == SolverKind::disam2;
  result.smoother = std::make_shared<IncrementalSmoother>(smoother_cfg);
  IncrementalSmoother& smoother = *result.smoother;
  smoother.set_imu_params(init_cfg.imu_params);
  smoother.bootstrap(init.graph, init.values);

  std::vector<double> epoch_times = init.epoch_times;
  int epoch = static_cast<int>(epoch_times.size()) - 1;

  const auto remaining = group_epochs(ranges);
  for (const RangeEpoch& re : remaining) {
    if (re.t <= epoch_times.back() + 1e-9) continue;  // inside init window
    const double t_prev = epoch_times.back();
    const auto samples = slice_imu(imu, t_prev, re.t);
    if (samples.size() < 2) continue;  // no IMU coverage; skip the epoch

    const int next = epoch + 1;
    const ImuBias bias_est =
        std::get<ImuBias>(smoother.estimate_at(bias_key(epoch)));
    const PreintegratedDelta delta =
        integrate(samples, bias_est, init_cfg.imu_params);

    const Pose prev_pose = std::get<Pose>(smoother.estimate_at(pose_key(epoch)));
    const Vector3 prev_vel =
        std::get<Vector3>(smoother.estimate_at(velocity_key(epoch)));
    const NavState pred = predict_next(
        NavState{prev_pose.rotation, prev_vel, prev_pose.position}, bias_est,
        delta, init_cfg.imu_params.gravity);

    std::vector<FactorPtr> new_factors;
    new_factors.push_back(std::make_shared<PreintFactor>(
        pose_key(epoch), velocity_key(epoch), pose_key(next), velocity_key(next),
        bias_key(epoch), delta, init_cfg.imu_params.gravity));
    new_factors.push_back(std::make_shared<BiasEvolutionFactor>(
        bias_key(epoch), bias_key(next), re.t - t_prev, init_cfg.imu_params));
    for (const RangeMeasurement& m : re.measurements) {
      auto it = anchor_ordinal.find(m.anchor_id);
      if (it == anchor_ordinal.end()) {
        throw ParseError("fuse: range to unknown anchor " + m.anchor_id);
      }
      new_factors.push_back(std::make_shared<RangeFactor>(
          pose_key(next), anchor_key(it->second), m.range, options.noise_model));
    }

    Values inits;
    inits.insert(pose_key(next), Pose{pred.rotation, pred.position});
    inits.insert(velocity_key(next), pred.velocity);
    inits.insert(bias_key(next), bias_est);

    try {
      result.diagnostics.push_back(smoother.update(new_factors, inits));
    } catch (const LambdaOverflowError& e) {
      result.failed = true;
      result.failure_reason = e.what();
      break;
    } catch (const SingularSystemError& e) {
      result.failed = true;
      result.failure_reason = e.what();
      break;
    }
    epoch = next;
    epoch_times.push_back(re.t);
  }

  result.epochs = static_cast<int>(epoch_times.size());

  // Final smoothed trajectory at the epochs, with optional IMU-rate
  // extrapolated segments in between.
  for (int e = 0; e <= epoch; ++e) {
    const Pose p = std::get<Pose>(smoother.estimate_at(pose_key(e)));
    result.trajectory.points.push_back(
        TrajectoryPoint{epoch_times[e], p.position, p.rotation});
    if (options.imu_rate_output && e < epoch) {
      const ImuBias bias_e = std::get<ImuBias>(smoother.estimate_at(bias_key(e)));
      const Vector3 vel_e =
          std::get<Vector3>(smoother.estimate_at(velocity_key(e)));
      NavState state{p.rotation, vel_e, p.position};
      const auto seg = slice_imu(imu, epoch_times[e], epoch_times[e + 1]);
      for (size_t i = 0; i + 1 < seg.size(); ++i) {
        state = strapdown_step(state, bias_e, seg[i], seg[i + 1],
                               init_cfg.imu_params.gravity);
        if (seg[i + 1].t < epoch_times[e + 1] - 1e-9) {
          result.trajectory.points.push_back(
              TrajectoryPoint{seg[i + 1].t, state.position, state.rotation});
        }
      }
    }
  }
  result.trajectory.sort_by_time();
  return result;
}

ExperimentRow run_cell(const ScenarioConfig& scenario_in, const ExperimentCell& cell,
                       const FusionOptions& base_options) {
  ExperimentRow row;
  row.cell = cell;

  ScenarioConfig scenario = scenario_in;
  scenario.seed = cell.seed;

  const std::vector<Anchor> anchors =
      scenario.anchors.empty()
          ? default_anchor_layout(scenario.site_extents, scenario.anchor_count,
                                  scenario.anchor_prior_sigma)
          : scenario.anchors;

  const SimTrajectory traj = generate_trajectory(scenario);
  const SyntheticImu imu = synthesize_imu(traj, scenario, scenario.seed);
  const auto ranges = synthesize_ranges(traj, scenario, anchors, scenario.seed);

  Trajectory gt;
  for (const auto& [t, state] : sample_ground_truth(traj, scenario.imu_rate)) {
    gt.points.push_back(TrajectoryPoint{t, state.position, state.rotation});
  }

  FusionOptions options = base_options;
  options.noise_model.kind = cell.model;
  options.noise_model.sigma_r = scenario.sigma_r;
  options.solver = cell.solver;
  options.rate_limit = cell.rate_hz;
  options.init.imu_params = scenario.imu_noise;

  FusionResult fr;
  try {
    fr = fuse(imu.samples, ranges, anchors, options);
  } catch (const Error& e) {
    row.status = "fail";
    row.reason = e.what();
    return row;
  }

  row.updates = static_cast<int>(fr.diagnostics.size());
  double sum_ms = 0.0;
  for (const UpdateDiagnostics& d : fr.diagnostics) {
    sum_ms += d.wall_time_ms;
    row.update_ms_max = std::max(row.update_ms_max, d.wall_time_ms);
  }
  row.update_ms_mean = row.updates > 0 ? sum_ms / row.updates : 0.0;

  if (!fr.trajectory.points.empty()) {
    try {
      const ApeReport report = ape(fr.trajectory, gt, 0.02);
      row.ape_mean = report.mean;
      row.ape_max = report.max;
      row.ape_rmse = report.rmse;
      row.matched_pairs = report.matched_pairs;
      row.has_ape = true;
      if (fr.failed) {
        row.status = "fail";
        row.reason = "estimator: " + fr.failure_reason;
      } else if (report.failed) {
        row.status = "fail";
        row.reason = "ape_exceeds_threshold";
      } else {
        row.status = "ok";
      }
    } catch (const NoMatchesError& e) {
      row.status = "fail";
      row.reason = e.what();
    }
  } else {
    row.status = "fail";
    row.reason = fr.failed ? fr.failure_reason : "empty trajectory";
  }
  return row;
}

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config) {
  std::vector<ExperimentCell> cells;
  for (const NoiseKind model : config.models) {
    for (const SolverKind solver : config.solvers) {
      for (const double rate : config.rates) {
        for (int s = 0; s < config.num_seeds; ++s) {
          cells.push_back(ExperimentCell{model, solver, rate,
                                         config.scenario.seed + uint64_t(s)});
        }
      }
    }
  }

  std::vector<ExperimentRow> rows(cells.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(
      config.parallelism > 0 ? config.parallelism : hw,
      static_cast<unsigned>(cells.size()));

  std::atomic<size_t> next{0};
  auto work = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      rows[i] = run_cell(config.scenario, cells[i], config.base_options);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  return rows;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

void write_experiment_csv(const std::string& path,
                          const std::vector<ExperimentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "model,solver,rate_hz,seed,status,reason,ape_mean,ape_max,ape_rmse,"
         "matched_pairs,updates\n";
  for (const ExperimentRow& r : rows) {
    out << noise_kind_name(r.cell.model) << ',' << solver_kind_name(r.cell.solver)
        << ',' << fmt_double(r.cell.rate_hz) << ',' << r.cell.seed << ','
        << r.status << ',' << r.reason << ',';
    if (r.has_ape) {
      out << fmt_double(r.ape_mean) << ',' << fmt_double(r.ape_max) << ','
          << fmt_double(r.ape_rmse) << ',' << r.matched_pairs;
    } else {
      out << ",,,0";
    }
    out << ',' << r.updates << "\n";
  }
}

void write_timing_csv(const std::string& path,
                      const std::vector<ExperimentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "model,solver,rate_hz,seed,updates,update_ms_mean,update_ms_max\n";
  for (const ExperimentRow& r : rows) {
    out << noise_kind_name(r.cell.model) << ',' << solver_kind_name(r.cell.solver)
        << ',' << fmt_double(r.cell.rate_hz) << ',' << r.cell.seed << ','
        << r.updates << ',' << fmt_double(r.update_ms_mean) << ','
        << fmt_double(r.update_ms_max) << "\n";
  }
}

void write_experiment_sidecar(const std::string& path,
                              const ExperimentConfig& config) {
  nlohmann::json j;
  j["base_seed"] = config.scenario.seed;
  j["num_seeds"] = config.num_seeds;
  std::vector<std::string> models, solvers;
  for (const NoiseKind m : config.models) models.push_back(noise_kind_name(m));
  for (const SolverKind s : config.solvers) solvers.push_back(solver_kind_name(s));
  j["models"] = models;
  j["solvers"] = solvers;
  j["rates_hz"] = config.rates;
  j["scenario"] = {{"duration", config.scenario.duration},
                   {"walk_speed", config.scenario.walk_speed},
                   {"imu_rate", config.scenario.imu_rate},
                   {"range_rate", config.scenario.range_rate},
                   {"sigma_r", config.scenario.sigma_r},
                   {"anchor_count", config.scenario.anchor_count},
                   {"nlos_p_enter", config.scenario.nlos.p_enter},
                   {"nlos_mean_dwell", config.scenario.nlos.mean_dwell_nlos},
                   {"nlos_gamma_env", config.scenario.nlos.gamma_env},
                   {"nlos_cap_factor", config.scenario.nlos.cap_factor}};
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace rif
