#include "rif/simulator.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rif/imu.hpp"

using namespace rif;

TEST(Trajectory, ZeroSpeedIsStationary) {
  ScenarioConfig config;
  config.walk_speed = 0.0;
  config.seed = 3;
  const SimTrajectory traj = generate_trajectory(config);
  const Vector3 p0 = traj.at(0.0).state.position;
  for (double t = 0; t < config.duration; t += 7.3) {
    EXPECT_LT((traj.at(t).state.position - p0).norm(), 1e-12);
    EXPECT_LT(traj.at(t).state.velocity.norm(), 1e-12);
  }
}

TEST(Trajectory, StaysInsideSiteExtents) {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    ScenarioConfig config;
    config.seed = seed;
    const SimTrajectory traj = generate_trajectory(config);
    for (double t = 0; t <= config.duration; t += 0.005) {
      const Vector3 p = traj.at(t).state.position;
      EXPECT_GE(p.x(), 0.0);
      EXPECT_LE(p.x(), config.site_extents.x());
      EXPECT_GE(p.y(), 0.0);
      EXPECT_LE(p.y(), config.site_extents.y());
      EXPECT_GE(p.z(), 0.0);
      EXPECT_LE(p.z(), config.site_extents.z());
    }
  }
}

TEST(Trajectory, DefaultConfigPathLengthInRange) {
  for (uint64_t seed : {1u, 7u, 42u}) {
    ScenarioConfig config;
    config.seed = seed;
    const double len = generate_trajectory(config).path_length();
    EXPECT_GE(len, 50.0);
    EXPECT_LE(len, 130.0);
  }
}

TEST(Trajectory, SecondDifferenceMatchesSplineAcceleration) {
  ScenarioConfig config;
  config.seed = 9;
  const SimTrajectory traj = generate_trajectory(config);
  const double dt = 1.0 / 200.0;
  for (double t = 1.0; t < config.duration - 1.0; t += 0.31) {
    const Vector3 p0 = traj.at(t - dt).state.position;
    const Vector3 p1 = traj.at(t).state.position;
    const Vector3 p2 = traj.at(t + dt).state.position;
    const Vector3 fd = (p2 - 2 * p1 + p0) / (dt * dt);
    EXPECT_LT((fd - traj.at(t).accel_world).norm(), 1e-3) << "t=" << t;
  }
}

TEST(SynthesizeImu, StationarySpecificForceConvention) {
  ScenarioConfig config;
  config.walk_speed = 0.0;
  config.zero_imu_noise = true;
  config.seed = 4;
  const SimTrajectory traj = generate_trajectory(config);
  const SyntheticImu imu = synthesize_imu(traj, config, config.seed);
  ASSERT_GT(imu.samples.size(), 100u);
  for (size_t i = 0; i < imu.samples.size(); i += 501) {
    EXPECT_LT((imu.samples[i].accel - Vector3(0, 0, 9.81)).norm(), 1e-9);
    EXPECT_LT(imu.samples[i].gyro.norm(), 1e-9);
  }
}

TEST(SynthesizeImu, ZeroNoiseRoundTripThroughIntegrate) {
  ScenarioConfig config;
  config.duration = 30.0;
  config.zero_imu_noise = true;
  config.seed = 8;
  const SimTrajectory traj = generate_trajectory(config);
  const SyntheticImu imu = synthesize_imu(traj, config, config.seed);

  // Re-integrate 1 s windows and compare to the trajectory's own deltas.
  const double window = 1.0;
  for (double t0 = 2.0; t0 + window < config.duration - 2.0; t0 += 5.0) {
    std::vector<ImuSample> slice;
    for (const ImuSample& s : imu.samples) {
      if (s.t >= t0 - 1e-9 && s.t <= t0 + window + 1e-9) slice.push_back(s);
    }
    const auto delta = integrate(slice, ImuBias{}, config.imu_noise);

    const auto a = traj.at(slice.front().t);
    const auto b = traj.at(slice.back().t);
    const double dt = slice.back().t - slice.front().t;
    const Matrix3 ra_t = a.state.rotation.matrix().transpose();
    const Vector3 g = config.imu_noise.gravity;

    const Vector3 dv_true = ra_t * (b.state.velocity - a.state.velocity - g * dt);
    const Vector3 dp_true = ra_t * (b.state.position - a.state.position -
                                    a.state.velocity * dt - 0.5 * g * dt * dt);
    const Matrix3 dr_true = ra_t * b.state.rotation.matrix();

    EXPECT_LT((delta.delta_v - dv_true).norm(), 1e-4) << "t0=" << t0;
    EXPECT_LT((delta.delta_p - dp_true).norm(), 1e-4) << "t0=" << t0;
    EXPECT_LT((delta.delta_R.matrix() - dr_true).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(SynthesizeImu, BiasReachesGaussMarkovStationaryVariance) {
  // 1e6 samples; compare the empirical variance of the bias trace against
  // the analytic Ornstein-Uhlenbeck stationary value tau*sigma^2/2.
  ScenarioConfig config;
  config.duration = 5000.0;
  config.walk_speed = 0.0;
  config.imu_rate = 200.0;
  config.seed = 6;
  config.imu_noise.tau_bias = 50.0;  // several correlation times inside the run
  config.imu_noise.sigma_bias_rw.setConstant(1e-3);
  const SimTrajectory traj = generate_trajectory(config);
  const SyntheticImu imu = synthesize_imu(traj, config, config.seed);
  ASSERT_GE(imu.bias_truth.size(), 1000000u);

  const double expected = config.imu_noise.tau_bias * 1e-6 / 2.0;
  for (int axis : {0, 1, 2}) {
    double sum = 0.0, sum_sq = 0.0;
    for (const ImuBias& b : imu.bias_truth) {
      sum += b.accel_bias[axis];
      sum_sq += b.accel_bias[axis] * b.accel_bias[axis];
    }
    const double n = static_cast<double>(imu.bias_truth.size());
    const double var = sum_sq / n - (sum / n) * (sum / n);
    EXPECT_NEAR(var, expected, 0.15 * expected) << "axis " << axis;
  }
}

TEST(SynthesizeRanges, PureLosIsGaussian) {
  ScenarioConfig config;
  config.duration = 300.0;
  config.nlos.p_enter = 0.0;
  config.seed = 12;
  const auto anchors = default_anchor_layout(config.site_extents, 4, 0.01);
  const SimTrajectory traj = generate_trajectory(config);
  const auto ranges = synthesize_ranges(traj, config, anchors, config.seed);
  ASSERT_GE(ranges.size(), 10000u);

  std::unordered_map<std::string, Vector3> anchor_pos;
  for (const Anchor& a : anchors) anchor_pos[a.id] = a.position;

  // Jarque-Bera statistic of the standardized errors at alpha = 0.01.
  std::vector<double> errors;
  for (size_t i = 0; i < ranges.size() && errors.size() < 10000; ++i) {
    EXPECT_TRUE(ranges[i].los);
    const double truth =
        (traj.at(ranges[i].t).state.position - anchor_pos[ranges[i].anchor_id]).norm();
    errors.push_back(ranges[i].range - truth);
  }
  const double n = static_cast<double>(errors.size());
  double mean = 0;
  for (double e : errors) mean += e;
  mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double e : errors) {
    const double d = e - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double skew = m3 / std::pow(m2, 1.5);
  const double kurt = m4 / (m2 * m2) - 3.0;
  const double jb = n / 6.0 * (skew * skew + kurt * kurt / 4.0);
  EXPECT_LT(jb, 9.21);  // chi^2(2) 99th percentile
  EXPECT_NEAR(std::sqrt(m2), config.sigma_r, 0.01);
}

TEST(SynthesizeRanges, NlosOffsetsAreOneSidedAndCapped) {
  ScenarioConfig config;
  config.duration = 400.0;
  config.sigma_r = 0.01;  // isolate the NLOS offset
  config.nlos.p_enter = 0.05;
  config.nlos.mean_dwell_nlos = 3.0;
  config.nlos.cap_factor = 0.8;
  config.seed = 13;
  const auto anchors = default_anchor_layout(config.site_extents, 4, 0.01);
  const SimTrajectory traj = generate_trajectory(config);
  const auto ranges = synthesize_ranges(traj, config, anchors, config.seed);

  std::unordered_map<std::string, Vector3> anchor_pos;
  for (const Anchor& a : anchors) anchor_pos[a.id] = a.position;

  int nlos_count = 0;
  for (const RangeMeasurement& m : ranges) {
    if (m.los) continue;
    ++nlos_count;
    const double truth =
        (traj.at(m.t).state.position - anchor_pos[m.anchor_id]).norm();
    const double offset = m.range - truth;
    EXPECT_GT(offset, -0.1);  // one-sided up to the small Gaussian jitter
    EXPECT_LT(offset, config.nlos.cap_factor * truth + 0.1);
  }
  EXPECT_GT(nlos_count, 100);
}

TEST(SynthesizeRanges, DwellTimeMatchesConfiguredMean) {
  ScenarioConfig config;
  config.duration = 10000.0;
  config.walk_speed = 0.0;
  config.range_rate = 10.0;
  config.max_simultaneous_anchors = 3;
  config.anchor_count = 3;
  config.nlos.p_enter = 0.02;
  config.nlos.mean_dwell_nlos = 4.0;
  config.seed = 14;
  const auto anchors = default_anchor_layout(config.site_extents, 3, 0.01);
  const SimTrajectory traj = generate_trajectory(config);
  const auto ranges = synthesize_ranges(traj, config, anchors, config.seed);

  // Dwell episodes of one anchor.
  std::vector<double> dwell;
  double episode_start = -1.0;
  bool prev_nlos = false;
  for (const RangeMeasurement& m : ranges) {
    if (m.anchor_id != "A0") continue;
    const bool nlos = !m.los;
    if (nlos && !prev_nlos) episode_start = m.t;
    if (!nlos && prev_nlos) dwell.push_back(m.t - episode_start);
    prev_nlos = nlos;
  }
  ASSERT_GT(dwell.size(), 200u);
  double mean = 0;
  for (double d : dwell) mean += d;
  mean /= dwell.size();
  EXPECT_NEAR(mean, config.nlos.mean_dwell_nlos, 0.1 * config.nlos.mean_dwell_nlos);
}

TEST(SynthesizeRanges, PersistentWindowsReproduceHeatmapShape) {
  // With long dwells there must exist 5 s windows dominated by NLOS.
  ScenarioConfig config;
  config.duration = 120.0;
  config.nlos.p_enter = 0.02;
  config.nlos.mean_dwell_nlos = 8.0;
  config.seed = 15;
  const auto anchors = default_anchor_layout(config.site_extents, 4, 0.01);
  const SimTrajectory traj = generate_trajectory(config);
  const auto ranges = synthesize_ranges(traj, config, anchors, config.seed);

  int dominated = 0;
  for (double w0 = 0; w0 + 5.0 <= config.duration; w0 += 5.0) {
    int total = 0, nlos = 0;
    for (const RangeMeasurement& m : ranges) {
      if (m.t >= w0 && m.t < w0 + 5.0) {
        ++total;
        if (!m.los) ++nlos;
      }
    }
    if (total > 0 && nlos > total / 2) ++dominated;
  }
  EXPECT_GE(dominated, 1);
}

TEST(Simulator, SeededReproducibility) {
  ScenarioConfig config;
  config.duration = 20.0;
  config.seed = 77;
  const auto anchors = default_anchor_layout(config.site_extents, 5, 0.01);

  const SimTrajectory t1 = generate_trajectory(config);
  const SimTrajectory t2 = generate_trajectory(config);
  const SyntheticImu i1 = synthesize_imu(t1, config, config.seed);
  const SyntheticImu i2 = synthesize_imu(t2, config, config.seed);
  ASSERT_EQ(i1.samples.size(), i2.samples.size());
  for (size_t k = 0; k < i1.samples.size(); k += 37) {
    EXPECT_EQ(i1.samples[k].gyro, i2.samples[k].gyro);
    EXPECT_EQ(i1.samples[k].accel, i2.samples[k].accel);
  }
  const auto r1 = synthesize_ranges(t1, config, anchors, config.seed);
  const auto r2 = synthesize_ranges(t2, config, anchors, config.seed);
  ASSERT_EQ(r1.size(), r2.size());
  for (size_t k = 0; k < r1.size(); k += 11) {
    EXPECT_EQ(r1[k].range, r2[k].range);
    EXPECT_EQ(r1[k].anchor_id, r2[k].anchor_id);
    EXPECT_EQ(r1[k].los, r2[k].los);
  }
}
