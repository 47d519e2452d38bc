#include "rif/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rif/error.hpp"

namespace rif {

namespace {

constexpr double kWallMargin = 2.5;  // m, keeps spline overshoot inside

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return seed * 0x9E3779B97F4A7C15ull + stream;
}

}  // namespace

std::vector<Anchor> default_anchor_layout(const Vector3& extents, int count,
                                          double prior_sigma) {
  // Perimeter walk at 1 m inset, heights cycled so no 3 anchors are
  // collinear and the set is non-coplanar.
  const double heights[] = {0.5, 2.5, 1.2, 2.0};
  std::vector<Anchor> anchors;
  const double w = extents.x() - 2.0, h = extents.y() - 2.0;
  const double perimeter = 2 * (w + h);
  for (int i = 0; i < count; ++i) {
    double s = perimeter * i / count;
    Vector3 p(1.0, 1.0, heights[i % 4]);
    if (s < w) {
      p.x() += s;
    } else if (s < w + h) {
      p.x() += w;
      p.y() += s - w;
    } else if (s < 2 * w + h) {
      p.x() += 2 * w + h - s;
      p.y() += h;
    } else {
      p.y() += perimeter - s;
    }
    anchors.push_back(Anchor{"A" + std::to_string(i), p, prior_sigma});
  }
  return anchors;
}

// ---------------------------------------------------------------------------
// SimTrajectory

Vector3 SimTrajectory::position(double t) const {
  if (stationary_) return fixed_point_;
  const size_t n = knot_t_.size();
  if (t <= knot_t_.front()) {
    return knot_y_.front() + velocity(knot_t_.front()) * (t - knot_t_.front());
  }
  if (t >= knot_t_.back()) {
    return knot_y_.back() + velocity(knot_t_.back()) * (t - knot_t_.back());
  }
  const size_t i =
      std::upper_bound(knot_t_.begin(), knot_t_.end(), t) - knot_t_.begin() - 1;
  const double h = knot_t_[i + 1] - knot_t_[i];
  const double a = (knot_t_[i + 1] - t) / h;
  const double b = (t - knot_t_[i]) / h;
  (void)n;
  return a * knot_y_[i] + b * knot_y_[i + 1] +
         ((a * a * a - a) * second_deriv_[i] + (b * b * b - b) * second_deriv_[i + 1]) *
             (h * h / 6.0);
}

Vector3 SimTrajectory::velocity(double t) const {
  if (stationary_) return Vector3::Zero();
  size_t i;
  if (t <= knot_t_.front()) {
    i = 0;
  } else if (t >= knot_t_.back()) {
    i = knot_t_.size() - 2;
    t = knot_t_.back();
  } else {
    i = std::upper_bound(knot_t_.begin(), knot_t_.end(), t) - knot_t_.begin() - 1;
  }
  if (t < knot_t_.front()) t = knot_t_.front();
  const double h = knot_t_[i + 1] - knot_t_[i];
  const double a = (knot_t_[i + 1] - t) / h;
  const double b = (t - knot_t_[i]) / h;
  return (knot_y_[i + 1] - knot_y_[i]) / h +
         ((3 * b * b - 1) * second_deriv_[i + 1] - (3 * a * a - 1) * second_deriv_[i]) *
             (h / 6.0);
}

Vector3 SimTrajectory::acceleration(double t) const {
  if (stationary_) return Vector3::Zero();
  if (t <= knot_t_.front() || t >= knot_t_.back()) return Vector3::Zero();
  const size_t i =
      std::upper_bound(knot_t_.begin(), knot_t_.end(), t) - knot_t_.begin() - 1;
  const double h = knot_t_[i + 1] - knot_t_[i];
  const double a = (knot_t_[i + 1] - t) / h;
  const double b = (t - knot_t_[i]) / h;
  return a * second_deriv_[i] + b * second_deriv_[i + 1];
}

SimTrajectory::Point SimTrajectory::at(double t) const {
  Point p;
  p.t = t;
  const Vector3 pos = position(t);
  const Vector3 vel = velocity(t);
  const Vector3 acc = acceleration(t);

  double yaw = 0.0, yaw_rate = 0.0;
  const double vxy2 = vel.x() * vel.x() + vel.y() * vel.y();
  if (vxy2 > 1e-6) {
    yaw = std::atan2(vel.y(), vel.x());
    yaw_rate = (vel.x() * acc.y() - vel.y() * acc.x()) / vxy2;
  }
  p.state.rotation = exp_so3(Vector3(0, 0, yaw));
  p.state.velocity = vel;
  p.state.position = pos;
  p.angular_velocity_body = Vector3(0, 0, yaw_rate);
  p.accel_world = acc;
  return p;
}

double SimTrajectory::path_length(double dt) const {
  if (stationary_) return 0.0;
  double len = 0.0;
  Vector3 prev = position(0.0);
  for (double t = dt; t <= duration_ + 1e-9; t += dt) {
    const Vector3 cur = position(t);
    len += (cur - prev).norm();
    prev = cur;
  }
  return len;
}

SimTrajectory generate_trajectory(const ScenarioConfig& config) {
  if (!config.valid()) {
    throw Error("generate_trajectory: invalid ScenarioConfig");
  }
  SimTrajectory traj;
  traj.duration_ = config.duration;

  std::mt19937_64 rng(mix_seed(config.seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Vector3 ext = config.site_extents;
  const double zlo = 0.9, zhi = std::min(1.8, ext.z() - 0.5);
  auto random_interior = [&]() {
    return Vector3(kWallMargin + unit(rng) * (ext.x() - 2 * kWallMargin),
                   kWallMargin + unit(rng) * (ext.y() - 2 * kWallMargin),
                   zlo + unit(rng) * (zhi - zlo));
  };

  if (config.walk_speed <= 0.0) {
    traj.stationary_ = true;
    traj.fixed_point_ = random_interior();
    return traj;
  }

  // Random waypoint walk: bounded step lengths, gentle direction changes,
  // turned toward the interior when a step would leave the margin box.
  std::vector<double> times{0.0};
  std::vector<Vector3> pts{random_interior()};
  double heading = unit(rng) * 2 * std::numbers::pi;
  const Vector3 center(ext.x() / 2, ext.y() / 2, 0.5 * (zlo + zhi));
  while (times.back() < config.duration + 4.0) {
    const double step = 4.0 + 4.0 * unit(rng);
    heading += (unit(rng) - 0.5) * (2 * std::numbers::pi / 3);
    Vector3 next = pts.back() + step * Vector3(std::cos(heading), std::sin(heading), 0);
    next.z() = std::clamp(pts.back().z() + (unit(rng) - 0.5) * 0.3, zlo, zhi);
    int guard = 0;
    while ((next.x() < kWallMargin || next.x() > ext.x() - kWallMargin ||
            next.y() < kWallMargin || next.y() > ext.y() - kWallMargin) &&
           guard++ < 32) {
      const Vector3 to_center = (center - pts.back()).normalized();
      heading = std::atan2(to_center.y(), to_center.x()) + (unit(rng) - 0.5);
      next = pts.back() + step * Vector3(std::cos(heading), std::sin(heading), 0);
      next.z() = std::clamp(pts.back().z(), zlo, zhi);
    }
    next.x() = std::clamp(next.x(), kWallMargin, ext.x() - kWallMargin);
    next.y() = std::clamp(next.y(), kWallMargin, ext.y() - kWallMargin);
    times.push_back(times.back() + step / config.walk_speed);
    pts.push_back(next);
  }

  // Natural cubic spline second derivatives (tridiagonal solve).
  const size_t n = times.size();
  std::vector<Vector3> m(n, Vector3::Zero());
  if (n > 2) {
    std::vector<double> diag(n, 0.0), off(n, 0.0);
    std::vector<Vector3> rhs(n, Vector3::Zero());
    for (size_t i = 1; i + 1 < n; ++i) {
      const double h0 = times[i] - times[i - 1];
      const double h1 = times[i + 1] - times[i];
      diag[i] = 2 * (h0 + h1);
      off[i] = h1;
      rhs[i] = 6.0 * ((pts[i + 1] - pts[i]) / h1 - (pts[i] - pts[i - 1]) / h0);
    }
    // Thomas algorithm on the interior unknowns.
    for (size_t i = 2; i + 1 < n; ++i) {
      const double h0 = times[i] - times[i - 1];
      const double w = h0 / diag[i - 1];
      diag[i] -= w * off[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (size_t i = n - 2; i >= 1; --i) {
      Vector3 carry = Vector3::Zero();
      if (i + 1 < n - 1) carry = off[i] * m[i + 1];
      m[i] = (rhs[i] - carry) / diag[i];
      if (i == 1) break;
    }
  }

  traj.knot_t_ = std::move(times);
  traj.knot_y_ = std::move(pts);
  traj.second_deriv_ = std::move(m);
  return traj;
}

SyntheticImu synthesize_imu(const SimTrajectory& trajectory,
                            const ScenarioConfig& config, uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gauss3 = [&]() { return Vector3(gauss(rng), gauss(rng), gauss(rng)); };

  const ImuNoiseParams& p = config.imu_noise;
  const double dt = 1.0 / config.imu_rate;
  const double sqrt_rate = std::sqrt(config.imu_rate);
  const int n = static_cast<int>(std::floor(trajectory.duration() * config.imu_rate)) + 1;

  // Gauss-Markov bias, started from the stationary distribution.
  Vector6 bias = Vector6::Zero();
  const double decay = std::exp(-dt / p.tau_bias);
  if (!config.zero_imu_noise) {
    for (int i = 0; i < 6; ++i) {
      bias[i] = gauss(rng) * p.sigma_bias_rw[i] * std::sqrt(p.tau_bias / 2.0);
    }
  }

  SyntheticImu out;
  out.samples.reserve(n);
  out.bias_truth.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    const auto pt = trajectory.at(t);
    const Matrix3 r_t = pt.state.rotation.matrix().transpose();

    ImuSample s;
    s.t = t;
    s.gyro = pt.angular_velocity_body + bias.tail<3>();
    s.accel = r_t * (pt.accel_world - p.gravity) + bias.head<3>();
    if (!config.zero_imu_noise) {
      s.gyro += p.sigma_gyro * sqrt_rate * gauss3();
      s.accel += p.sigma_accel * sqrt_rate * gauss3();
    }
    out.samples.push_back(s);
    out.bias_truth.push_back(ImuBias::from_vector(bias));

    if (!config.zero_imu_noise) {
      for (int i = 0; i < 6; ++i) {
        bias[i] = decay * bias[i] + gauss(rng) * p.sigma_bias_rw[i] * std::sqrt(dt);
      }
    }
  }
  return out;
}

std::vector<RangeMeasurement> synthesize_ranges(const SimTrajectory& trajectory,
                                                const ScenarioConfig& config,
                                                const std::vector<Anchor>& anchors,
                                                uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double tick_dt = 1.0 / config.range_rate;
  std::vector<bool> nlos(anchors.size(), false);
  std::vector<double> last_event(anchors.size(), 0.0);

  std::vector<RangeMeasurement> out;
  for (double t = tick_dt; t <= trajectory.duration() + 1e-9; t += tick_dt) {
    const Vector3 pos = trajectory.at(t).state.position;

    // Nearest anchors stand in for strongest signal strength.
    std::vector<std::pair<double, size_t>> order;
    for (size_t i = 0; i < anchors.size(); ++i) {
      order.emplace_back((pos - anchors[i].position).norm(), i);
    }
    std::sort(order.begin(), order.end());
    const size_t emit =
        std::min<size_t>(config.max_simultaneous_anchors, order.size());

    for (size_t k = 0; k < emit; ++k) {
      const size_t i = order[k].second;
      const double true_range = order[k].first;

      // Markov transition at this anchor's ranging event.
      const double dwell_dt = t - last_event[i];
      last_event[i] = t;
      if (nlos[i]) {
        const double p_exit = std::min(1.0, dwell_dt / config.nlos.mean_dwell_nlos);
        if (unit(rng) < p_exit) nlos[i] = false;
      } else {
        if (unit(rng) < config.nlos.p_enter) nlos[i] = true;
      }

      RangeMeasurement m;
      m.t = t;
      m.anchor_id = anchors[i].id;
      m.los = !nlos[i];
      double r = true_range + config.sigma_r * gauss(rng);
      if (nlos[i]) {
        const double raw =
            config.nlos.gamma_env *
            std::abs(std::tan(0.5 * std::numbers::pi * unit(rng)));
        r += std::min(raw, config.nlos.cap_factor * true_range);
      }
      m.range = std::max(r, 0.01);
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<std::pair<double, NavState>> sample_ground_truth(
    const SimTrajectory& trajectory, double rate) {
  std::vector<std::pair<double, NavState>> out;
  const double dt = 1.0 / rate;
  const int n = static_cast<int>(std::floor(trajectory.duration() * rate)) + 1;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    out.emplace_back(t, trajectory.at(t).state);
  }
  return out;
}

}  // namespace rif
