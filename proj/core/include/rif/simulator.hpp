#pragma once

#include <optional>
#include <vector>

#include "rif/geometry.hpp"
#include "rif/imu.hpp"
#include "rif/ranging.hpp"

namespace rif {

/// Persistent-NLOS model: a two-state Markov chain per anchor, advanced at
/// that anchor's ranging events. NLOS adds a one-sided half-Cauchy offset,
/// capped at cap_factor * true_range (total measurement <= 2x true range).
struct NlosModel {
  double p_enter = 0.004;        // per ranging event
  double mean_dwell_nlos = 6.0;  // s
  double gamma_env = 1.5;        // m, half-Cauchy scale of the offset
  double cap_factor = 1.0;       // offset cap as a fraction of true range

  bool valid() const {
    return p_enter >= 0 && p_enter <= 1 && mean_dwell_nlos > 0 &&
           gamma_env > 0 && cap_factor > 0 && cap_factor <= 1;
  }
};

/// Office-scale walking scenario.
struct ScenarioConfig {
  Vector3 site_extents = Vector3(30, 50, 3);  // m
  std::vector<Anchor> anchors;                // empty = auto perimeter layout
  int anchor_count = 6;                       // used by the auto layout
  double anchor_prior_sigma = 0.01;           // m
  double duration = 120.0;                    // s
  double walk_speed = 1.0;                    // m/s; 0 = stationary
  double imu_rate = 200.0;                    // Hz
  double range_rate = 10.0;                   // Hz per ranging round
  int max_simultaneous_anchors = 4;
  double sigma_r = 0.15;                      // m, LOS noise
  NlosModel nlos;
  ImuNoiseParams imu_noise;
  bool zero_imu_noise = false;                // noise-free IMU synthesis
  uint64_t seed = 1;

  bool valid() const {
    return imu_rate > 0 && range_rate > 0 && duration > 0 &&
           (anchors.size() >= 3 || anchor_count >= 3) && nlos.valid();
  }
};

/// Deterministic perimeter layout with cycled heights (non-coplanar).
std::vector<Anchor> default_anchor_layout(const Vector3& extents, int count,
                                          double prior_sigma);

/**
 * C2-smooth ground-truth trajectory: natural cubic spline through random
 * waypoints, yaw aligned with the walking direction, roll/pitch zero.
 */
class SimTrajectory {
 public:
  struct Point {
    double t = 0.0;
    NavState state;
    Vector3 angular_velocity_body = Vector3::Zero();  // rad/s
    Vector3 accel_world = Vector3::Zero();            // m/s^2, gravity excluded
  };

  Point at(double t) const;
  double duration() const { return duration_; }
  double path_length(double dt = 0.01) const;

 private:
  friend SimTrajectory generate_trajectory(const ScenarioConfig& config);

  Vector3 position(double t) const;
  Vector3 velocity(double t) const;
  Vector3 acceleration(double t) const;

  std::vector<double> knot_t_;
  std::vector<Vector3> knot_y_;
  std::vector<Vector3> second_deriv_;
  double duration_ = 0.0;
  bool stationary_ = false;
  Vector3 fixed_point_ = Vector3::Zero();
};

SimTrajectory generate_trajectory(const ScenarioConfig& config);

struct SyntheticImu {
  std::vector<ImuSample> samples;
  std::vector<ImuBias> bias_truth;  // parallel to samples
};

/// Inverts the strapdown model: gyro = body rates + bias + white noise,
/// accel = R^T (a_world - g) + bias + white noise; biases follow the
/// Gauss-Markov process, started from its stationary distribution.
SyntheticImu synthesize_imu(const SimTrajectory& trajectory,
                            const ScenarioConfig& config, uint64_t seed);

/// SS-TWR synthesis: at each ranging round the nearest
/// max_simultaneous_anchors emit; per-anchor LOS/NLOS Markov chains inject
/// persistent one-sided offsets. Output sorted by time, los flag set.
std::vector<RangeMeasurement> synthesize_ranges(const SimTrajectory& trajectory,
                                                const ScenarioConfig& config,
                                                const std::vector<Anchor>& anchors,
                                                uint64_t seed);

/// Dense ground-truth samples (one per IMU tick).
std::vector<std::pair<double, NavState>> sample_ground_truth(
    const SimTrajectory& trajectory, double rate);

}  // namespace rif
