#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rif/geometry.hpp"

namespace rif {

/// Failure threshold on mean APE: above this the run counts as a failure.
inline constexpr double kApeFailThreshold = 10.0;  // m

struct TrajectoryPoint {
  double t = 0.0;
  Vector3 position = Vector3::Zero();
  std::optional<Rotation> orientation;
};

/// Time-ordered pose sequence; sorted at ingestion.
struct Trajectory {
  std::vector<TrajectoryPoint> points;

  void sort_by_time();
  bool strictly_increasing() const;
};

struct ApeReport {
  double mean = 0.0;   // m
  double max = 0.0;    // m
  double rmse = 0.0;   // m
  std::vector<double> errors;      // per matched estimate timestamp
  std::vector<double> timestamps;
  int matched_pairs = 0;
  bool failed = false;  // mean > 10 m
};

/**
 * 3D absolute position error. Each estimate timestamp is associated to the
 * ground truth by linear interpolation in time; no alignment transform is
 * applied (both trajectories live in the anchor frame). Estimate samples
 * farther than max_dt outside the ground-truth span are skipped.
 *
 * Throws NoMatchesError when nothing is matchable.
 */
ApeReport ape(const Trajectory& estimate, const Trajectory& ground_truth,
              double max_dt = 0.02);

}  // namespace rif
