// Command-line front end: simulate / fuse / eval / sweep.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rif/error.hpp"
#include "rif/experiment.hpp"
#include "rif/io.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_simulate(const std::string& config_path, int64_t seed,
                 const std::string& out_dir) {
  rif::ScenarioConfig config = rif::read_scenario_config(config_path);
  if (seed >= 0) config.seed = static_cast<uint64_t>(seed);

  const auto anchors =
      config.anchors.empty()
          ? rif::default_anchor_layout(config.site_extents, config.anchor_count,
                                       config.anchor_prior_sigma)
          : config.anchors;

  const rif::SimTrajectory traj = rif::generate_trajectory(config);
  const rif::SyntheticImu imu = rif::synthesize_imu(traj, config, config.seed);
  const auto ranges = rif::synthesize_ranges(traj, config, anchors, config.seed);

  fs::create_directories(out_dir);
  rif::write_imu_jsonl(out_dir + "/imu.jsonl", imu.samples);
  rif::write_ranges_jsonl(out_dir + "/ranges.jsonl", ranges);
  rif::write_anchors_json(out_dir + "/anchors.json", anchors);
  rif::write_bias_truth_jsonl(out_dir + "/bias_truth.jsonl", imu.samples,
                              imu.bias_truth);

  rif::Trajectory gt;
  for (const auto& [t, state] : rif::sample_ground_truth(traj, config.imu_rate)) {
    gt.points.push_back(rif::TrajectoryPoint{t, state.position, state.rotation});
  }
  rif::write_trajectory_jsonl(out_dir + "/ground_truth.jsonl", gt);
  rif::write_scenario_config(out_dir + "/scenario.json", config);

  std::cout << "simulate: " << imu.samples.size() << " IMU samples, "
            << ranges.size() << " range measurements, " << anchors.size()
            << " anchors -> " << out_dir << "\n";
  return 0;
}

int cmd_fuse(const std::string& imu_path, const std::string& ranges_path,
             const std::string& anchors_path, const std::string& model,
             const std::string& solver, double rate_limit,
             const std::string& out_path, const std::string& diag_path,
             bool imu_rate_output) {
  const auto imu = rif::read_imu_jsonl(imu_path);
  const auto ranges = rif::read_ranges_jsonl(ranges_path);
  const auto anchors = rif::read_anchors_json(anchors_path);

  rif::FusionOptions options;
  options.noise_model.kind = rif::noise_kind_from_string(model);
  options.solver = rif::solver_kind_from_string(solver);
  options.rate_limit = rate_limit;
  options.imu_rate_output = imu_rate_output;

  const rif::FusionResult result = rif::fuse(imu, ranges, anchors, options);
  rif::write_trajectory_jsonl(out_path, result.trajectory);
  if (!diag_path.empty()) {
    rif::write_diagnostics_jsonl(diag_path, result.diagnostics);
  }

  if (result.failed) {
    std::cout << "fuse: FAIL (" << result.failure_reason << "), partial trajectory "
              << result.trajectory.points.size() << " points -> " << out_path
              << "\n";
    return 2;
  }
  std::cout << "fuse: " << result.epochs << " epochs, "
            << result.trajectory.points.size() << " trajectory points -> "
            << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, double max_dt,
             const std::string& out_path) {
  const rif::Trajectory est = rif::read_trajectory_jsonl(est_path);
  const rif::Trajectory gt = rif::read_trajectory_jsonl(gt_path);
  const rif::ApeReport report = rif::ape(est, gt, max_dt);
  rif::write_ape_report_json(out_path, report);
  std::cout << "eval: mean " << report.mean << " m, max " << report.max
            << " m, rmse " << report.rmse << " m over " << report.matched_pairs
            << " pairs" << (report.failed ? " [FAIL]" : "") << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& freqs,
              const std::string& models, const std::string& solvers, int seeds,
              const std::string& out_path) {
  rif::ExperimentConfig config;
  config.scenario = rif::read_scenario_config(config_path);
  config.num_seeds = seeds;

  config.rates.clear();
  for (const std::string& f : split_csv(freqs)) config.rates.push_back(std::stod(f));
  config.models.clear();
  for (const std::string& m : split_csv(models)) {
    config.models.push_back(rif::noise_kind_from_string(m));
  }
  config.solvers.clear();
  for (const std::string& s : split_csv(solvers)) {
    config.solvers.push_back(rif::solver_kind_from_string(s));
  }

  const auto rows = rif::run_experiment(config);
  rif::write_experiment_csv(out_path, rows);
  rif::write_timing_csv(out_path + ".timing.csv", rows);
  rif::write_experiment_sidecar(out_path + ".sidecar.json", config);

  int ok = 0, fail = 0;
  for (const auto& r : rows) (r.status == "ok" ? ok : fail)++;
  std::cout << "sweep: " << rows.size() << " cells (" << ok << " ok, " << fail
            << " fail) -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ranging-IMU fusion toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out;
  int64_t sim_seed = -1;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scenario");
  sim->add_option("--config", sim_config, "Scenario config JSON")->required();
  sim->add_option("--seed", sim_seed, "Override the config seed");
  sim->add_option("--out", sim_out, "Output directory")->required();

  // fuse
  std::string fuse_imu, fuse_ranges, fuse_anchors, fuse_out, fuse_diag;
  std::string fuse_model = "asym", fuse_solver = "disam2";
  double fuse_rate_limit = 0.0;
  bool fuse_imu_rate = false;
  auto* fus = app.add_subcommand("fuse", "Run the estimator on recorded streams");
  fus->add_option("--imu", fuse_imu, "IMU JSON-lines stream")->required();
  fus->add_option("--ranges", fuse_ranges, "Range JSON-lines stream")->required();
  fus->add_option("--anchors", fuse_anchors, "Anchor JSON file")->required();
  fus->add_option("--model", fuse_model, "gaussian|huber|cauchy|asym");
  fus->add_option("--solver", fuse_solver, "isam2|disam2|batch");
  fus->add_option("--rate-limit", fuse_rate_limit,
                  "Downsample ranges to this cumulative Hz");
  fus->add_option("--out", fuse_out, "Output trajectory JSON-lines")->required();
  fus->add_option("--diag", fuse_diag, "Per-update diagnostics JSON-lines");
  fus->add_flag("--imu-rate-output", fuse_imu_rate,
                "Emit extrapolated IMU-rate states between epochs");

  // eval
  std::string eval_est, eval_gt, eval_out;
  double eval_max_dt = 0.02;
  auto* ev = app.add_subcommand("eval", "3D APE against ground truth");
  ev->add_option("--est", eval_est, "Estimated trajectory")->required();
  ev->add_option("--gt", eval_gt, "Ground-truth trajectory")->required();
  ev->add_option("--max-dt", eval_max_dt, "Association tolerance, s");
  ev->add_option("--out", eval_out, "APE report JSON")->required();

  // sweep
  std::string sweep_config, sweep_out;
  std::string sweep_freqs = "1,5,10,20,40";
  std::string sweep_models = "gaussian,huber,cauchy,asym";
  std::string sweep_solvers = "disam2";
  int sweep_seeds = 5;
  auto* sw = app.add_subcommand("sweep", "Noise-model x frequency experiment matrix");
  sw->add_option("--config", sweep_config, "Scenario config JSON")->required();
  sw->add_option("--freqs", sweep_freqs, "Comma-separated cumulative rates, Hz");
  sw->add_option("--models", sweep_models, "Comma-separated noise models");
  sw->add_option("--solvers", sweep_solvers, "Comma-separated solvers");
  sw->add_option("--seeds", sweep_seeds, "Number of seeds (base .. base+n-1)");
  sw->add_option("--out", sweep_out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_seed, sim_out);
    if (fus->parsed()) {
      return cmd_fuse(fuse_imu, fuse_ranges, fuse_anchors, fuse_model, fuse_solver,
                      fuse_rate_limit, fuse_out, fuse_diag, fuse_imu_rate);
    }
    if (ev->parsed()) return cmd_eval(eval_est, eval_gt, eval_max_dt, eval_out);
    if (sw->parsed()) {
      return cmd_sweep(sweep_config, sweep_freqs, sweep_models, sweep_solvers,
                       sweep_seeds, sweep_out);
    }
  } catch (const rif::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
