#pragma once

#include <string>
#include <vector>

#include "rif/evaluation.hpp"
#include "rif/imu.hpp"
#include "rif/incremental_solver.hpp"
#include "rif/ranging.hpp"
#include "rif/simulator.hpp"

namespace rif {

// JSON-lines IMU stream: {"t": s, "gyro": [3], "accel": [3]} per line.
// Lines that fail to parse or violate the saturation guard are skipped with
// a warning (line number) on stderr.
std::vector<ImuSample> read_imu_jsonl(const std::string& path);
void write_imu_jsonl(const std::string& path, const std::vector<ImuSample>& samples);

// JSON-lines range stream: {"t": s, "anchor_id": str, "range": m, "los": bool?}.
// los is simulator ground truth; readers keep it, the estimator ignores it.
std::vector<RangeMeasurement> read_ranges_jsonl(const std::string& path);
void write_ranges_jsonl(const std::string& path,
                        const std::vector<RangeMeasurement>& ranges);

// Anchor file: JSON array of {"id": str, "position": [3], "prior_sigma": m}.
std::vector<Anchor> read_anchors_json(const std::string& path);
void write_anchors_json(const std::string& path, const std::vector<Anchor>& anchors);

// Trajectory JSON-lines: {"t": s, "p": [3], "q": [w,x,y,z]} per line.
Trajectory read_trajectory_jsonl(const std::string& path);
void write_trajectory_jsonl(const std::string& path, const Trajectory& trajectory);

// Scenario config: single JSON object, every field optional with defaults.
ScenarioConfig read_scenario_config(const std::string& path);
void write_scenario_config(const std::string& path, const ScenarioConfig& config);

// Per-update diagnostics as JSON-lines.
void write_diagnostics_jsonl(const std::string& path,
                             const std::vector<UpdateDiagnostics>& diags);

// Ground-truth bias trace: {"t": s, "accel_bias": [3], "gyro_bias": [3]}.
void write_bias_truth_jsonl(const std::string& path,
                            const std::vector<ImuSample>& samples,
                            const std::vector<ImuBias>& bias_truth);

// APE report as a single JSON object.
void write_ape_report_json(const std::string& path, const ApeReport& report);

}  // namespace rif
