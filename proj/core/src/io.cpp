#include "rif/io.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "rif/error.hpp"

namespace rif {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  return out;
}

Vector3 to_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected 3-vector");
  return Vector3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json from_vec3(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::vector<ImuSample> read_imu_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ImuSample s;
      s.t = j.at("t").get<double>();
      s.gyro = to_vec3(j.at("gyro"));
      s.accel = to_vec3(j.at("accel"));
      if (s.saturated()) throw ParseError("saturated sample");
      if (!out.empty() && s.t <= out.back().t) throw ParseError("non-monotonic t");
      out.push_back(s);
    } catch (const std::exception& e) {
      std::cerr << path << ":" << line_no << ": skipping IMU record (" << e.what()
                << ")\n";
    }
  }
  return out;
}

void write_imu_jsonl(const std::string& path, const std::vector<ImuSample>& samples) {
  auto out = open_out(path);
  for (const ImuSample& s : samples) {
    json j{{"t", s.t}, {"gyro", from_vec3(s.gyro)}, {"accel", from_vec3(s.accel)}};
    out << j.dump() << "\n";
  }
}

std::vector<RangeMeasurement> read_ranges_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<RangeMeasurement> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      RangeMeasurement m;
      m.t = j.at("t").get<double>();
      m.anchor_id = j.at("anchor_id").get<std::string>();
      m.range = j.at("range").get<double>();
      m.los = j.value("los", true);
      if (!m.in_site_guard()) throw ParseError("range outside site guard");
      out.push_back(std::move(m));
    } catch (const std::exception& e) {
      std::cerr << path << ":" << line_no << ": skipping range record (" << e.what()
                << ")\n";
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RangeMeasurement& a, const RangeMeasurement& b) {
                     return a.t < b.t;
                   });
  return out;
}

void write_ranges_jsonl(const std::string& path,
                        const std::vector<RangeMeasurement>& ranges) {
  auto out = open_out(path);
  for (const RangeMeasurement& m : ranges) {
    json j{{"t", m.t}, {"anchor_id", m.anchor_id}, {"range", m.range}, {"los", m.los}};
    out << j.dump() << "\n";
  }
}

std::vector<Anchor> read_anchors_json(const std::string& path) {
  auto in = open_in(path);
  json j;
  in >> j;
  if (!j.is_array()) throw ParseError(path + ": anchor file must be a JSON array");
  std::vector<Anchor> out;
  for (const json& a : j) {
    Anchor anchor;
    anchor.id = a.at("id").get<std::string>();
    anchor.position = to_vec3(a.at("position"));
    anchor.prior_sigma = a.value("prior_sigma", 0.01);
    if (anchor.prior_sigma <= 0) {
      throw ParseError(path + ": anchor " + anchor.id + " needs prior_sigma > 0");
    }
    out.push_back(std::move(anchor));
  }
  return out;
}

void write_anchors_json(const std::string& path, const std::vector<Anchor>& anchors) {
  json j = json::array();
  for (const Anchor& a : anchors) {
    j.push_back({{"id", a.id},
                 {"position", from_vec3(a.position)},
                 {"prior_sigma", a.prior_sigma}});
  }
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

Trajectory read_trajectory_jsonl(const std::string& path) {
  auto in = open_in(path);
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TrajectoryPoint p;
      p.t = j.at("t").get<double>();
      p.position = to_vec3(j.at("p"));
      if (j.contains("q")) {
        const json& q = j["q"];
        p.orientation = Rotation(Eigen::Quaterniond(
            q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
            q[3].get<double>()));
      }
      traj.points.push_back(std::move(p));
    } catch (const std::exception& e) {
      std::cerr << path << ":" << line_no << ": skipping trajectory record ("
                << e.what() << ")\n";
    }
  }
  traj.sort_by_time();
  return traj;
}

void write_trajectory_jsonl(const std::string& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  for (const TrajectoryPoint& p : trajectory.points) {
    json j{{"t", p.t}, {"p", from_vec3(p.position)}};
    const Rotation r = p.orientation.value_or(Rotation());
    const Eigen::Quaterniond& q = r.quaternion();
    j["q"] = json::array({q.w(), q.x(), q.y(), q.z()});
    out << j.dump() << "\n";
  }
}

ScenarioConfig read_scenario_config(const std::string& path) {
  auto in = open_in(path);
  json j;
  in >> j;
  ScenarioConfig c;
  if (j.contains("site_extents")) c.site_extents = to_vec3(j["site_extents"]);
  c.anchor_count = j.value("anchor_count", c.anchor_count);
  c.anchor_prior_sigma = j.value("anchor_prior_sigma", c.anchor_prior_sigma);
  if (j.contains("anchors")) {
    for (const json& a : j["anchors"]) {
      c.anchors.push_back(Anchor{a.at("id").get<std::string>(),
                                 to_vec3(a.at("position")),
                                 a.value("prior_sigma", c.anchor_prior_sigma)});
    }
  }
  c.duration = j.value("duration", c.duration);
  c.walk_speed = j.value("walk_speed", c.walk_speed);
  c.imu_rate = j.value("imu_rate", c.imu_rate);
  c.range_rate = j.value("range_rate", c.range_rate);
  c.max_simultaneous_anchors =
      j.value("max_simultaneous_anchors", c.max_simultaneous_anchors);
  c.sigma_r = j.value("sigma_r", c.sigma_r);
  c.seed = j.value("seed", c.seed);
  c.zero_imu_noise = j.value("zero_imu_noise", c.zero_imu_noise);
  if (j.contains("nlos")) {
    const json& n = j["nlos"];
    c.nlos.p_enter = n.value("p_enter", c.nlos.p_enter);
    c.nlos.mean_dwell_nlos = n.value("mean_dwell_nlos", c.nlos.mean_dwell_nlos);
    c.nlos.gamma_env = n.value("gamma_env", c.nlos.gamma_env);
    c.nlos.cap_factor = n.value("cap_factor", c.nlos.cap_factor);
  }
  if (j.contains("imu_noise")) {
    const json& n = j["imu_noise"];
    c.imu_noise.sigma_gyro = n.value("sigma_gyro", c.imu_noise.sigma_gyro);
    c.imu_noise.sigma_accel = n.value("sigma_accel", c.imu_noise.sigma_accel);
    c.imu_noise.tau_bias = n.value("tau_bias", c.imu_noise.tau_bias);
    if (n.contains("sigma_bias_rw")) {
      const json& s = n["sigma_bias_rw"];
      if (!s.is_array() || s.size() != 6) {
        throw ParseError(path + ": sigma_bias_rw must be a 6-array");
      }
      for (int i = 0; i < 6; ++i) c.imu_noise.sigma_bias_rw[i] = s[i].get<double>();
    }
    if (n.contains("gravity")) c.imu_noise.gravity = to_vec3(n["gravity"]);
  }
  if (!c.valid()) throw ParseError(path + ": invalid scenario config");
  return c;
}

void write_scenario_config(const std::string& path, const ScenarioConfig& c) {
  json j;
  j["site_extents"] = from_vec3(c.site_extents);
  j["anchor_count"] = c.anchor_count;
  j["anchor_prior_sigma"] = c.anchor_prior_sigma;
  if (!c.anchors.empty()) {
    json arr = json::array();
    for (const Anchor& a : c.anchors) {
      arr.push_back({{"id", a.id},
                     {"position", from_vec3(a.position)},
                     {"prior_sigma", a.prior_sigma}});
    }
    j["anchors"] = arr;
  }
  j["duration"] = c.duration;
  j["walk_speed"] = c.walk_speed;
  j["imu_rate"] = c.imu_rate;
  j["range_rate"] = c.range_rate;
  j["max_simultaneous_anchors"] = c.max_simultaneous_anchors;
  j["sigma_r"] = c.sigma_r;
  j["seed"] = c.seed;
  j["zero_imu_noise"] = c.zero_imu_noise;
  j["nlos"] = {{"p_enter", c.nlos.p_enter},
               {"mean_dwell_nlos", c.nlos.mean_dwell_nlos},
               {"gamma_env", c.nlos.gamma_env},
               {"cap_factor", c.nlos.cap_factor}};
  json rw = json::array();
  for (int i = 0; i < 6; ++i) rw.push_back(c.imu_noise.sigma_bias_rw[i]);
  j["imu_noise"] = {{"sigma_gyro", c.imu_noise.sigma_gyro},
                    {"sigma_accel", c.imu_noise.sigma_accel},
                    {"tau_bias", c.imu_noise.tau_bias},
                    {"sigma_bias_rw", rw},
                    {"gravity", from_vec3(c.imu_noise.gravity)}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_diagnostics_jsonl(const std::string& path,
                             const std::vector<UpdateDiagnostics>& diags) {
  auto out = open_out(path);
  for (const UpdateDiagnostics& d : diags) {
    json j{{"update", d.update_index},
           {"lambdas", d.lambdas_tried},
           {"error_before", d.error_before},
           {"error_after", d.error_after},
           {"cliques_relinearized", d.cliques_relinearized},
           {"wall_ms", d.wall_time_ms}};
    out << j.dump() << "\n";
  }
}

void write_bias_truth_jsonl(const std::string& path,
                            const std::vector<ImuSample>& samples,
                            const std::vector<ImuBias>& bias_truth) {
  auto out = open_out(path);
  for (size_t i = 0; i < samples.size() && i < bias_truth.size(); ++i) {
    json j{{"t", samples[i].t},
           {"accel_bias", from_vec3(bias_truth[i].accel_bias)},
           {"gyro_bias", from_vec3(bias_truth[i].gyro_bias)}};
    out << j.dump() << "\n";
  }
}

void write_ape_report_json(const std::string& path, const ApeReport& report) {
  json j{{"mean", report.mean},
         {"max", report.max},
         {"rmse", report.rmse},
         {"matched_pairs", report.matched_pairs},
         {"failed", report.failed},
         {"errors", report.errors},
         {"timestamps", report.timestamps}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace rif
