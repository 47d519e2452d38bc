#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "rif/geometry.hpp"

namespace rif {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Vector9 = Eigen::Matrix<double, 9, 1>;
using Matrix9 = Eigen::Matrix<double, 9, 9>;
using Matrix9x6 = Eigen::Matrix<double, 9, 6>;

/// Sensor saturation guards; samples outside are rejected at ingestion.
inline constexpr double kMaxGyro = 35.0;    // rad/s
inline constexpr double kMaxAccel = 160.0;  // m/s^2

/// One timestamped inertial reading. accel is specific force (gravity
/// excluded), both vectors in the body frame.
struct ImuSample {
  double t = 0.0;                     // s
  Vector3 gyro = Vector3::Zero();     // rad/s
  Vector3 accel = Vector3::Zero();    // m/s^2

  bool saturated() const {
    return gyro.norm() >= kMaxGyro || accel.norm() >= kMaxAccel;
  }
};

/// Continuous-time noise densities plus the Gauss-Markov bias model.
struct ImuNoiseParams {
  double sigma_gyro = 1e-3;    // rad/s/sqrt(Hz)
  double sigma_accel = 1e-2;   // m/s^2/sqrt(Hz)
  double tau_bias = 3600.0;    // s, Gauss-Markov correlation time
  // Bias driving-noise std, accel xyz then gyro xyz, per sqrt(s).
  Vector6 sigma_bias_rw = (Vector6() << 1.2e-3, 1.2e-3, 1.2e-3, 4.7e-5, 4.7e-5, 4.7e-5).finished();
  Vector3 gravity = Vector3(0, 0, -9.81);  // m/s^2, earth frame
  // Additive per-interval covariance floor [rad, m/s, m], inflating the
  // raw densities against unmodeled effects. Over a 0.1 s interval the raw
  // position sigma is ~2e-4 m; without a floor, second-order linearization
  // terms of a few 1e-4 m measure several sigma and Gauss-Newton-style
  // steps stop decreasing the nonlinear error.
  Vector3 preint_sigma_floor = Vector3(2e-3, 2e-3, 1e-3);

  bool valid() const {
    return sigma_gyro > 0 && sigma_accel > 0 && tau_bias > 0 &&
           (sigma_bias_rw.array() >= 0).all() &&
           (preint_sigma_floor.array() >= 0).all();
  }
};

struct ImuBias {
  Vector3 accel_bias = Vector3::Zero();  // m/s^2
  Vector3 gyro_bias = Vector3::Zero();   // rad/s

  Vector6 vector() const {
    Vector6 v;
    v << accel_bias, gyro_bias;
    return v;
  }
  static ImuBias from_vector(const Vector6& v) {
    return ImuBias{v.head<3>(), v.tail<3>()};
  }
  ImuBias operator+(const Vector6& delta) const {
    return from_vector(vector() + delta);
  }
};

/**
 * Gravity-free motion deltas accumulated between two state epochs.
 *
 * delta_R/delta_v/delta_p are expressed in the body frame at the start of
 * the interval. covariance is 9x9 over [phi, v, p]; bias_jacobians is the
 * 9x6 derivative of the stacked delta w.r.t. [accel_bias, gyro_bias],
 * evaluated at bias_lin_point. Gravity is not applied during integration;
 * it enters the residual.
 */
struct PreintegratedDelta {
  Rotation delta_R;
  Vector3 delta_v = Vector3::Zero();
  Vector3 delta_p = Vector3::Zero();
  double dt_total = 0.0;
  Matrix9 covariance = Matrix9::Zero();
  Matrix9x6 bias_jacobians = Matrix9x6::Zero();  // columns: accel then gyro
  ImuBias bias_lin_point;

  Matrix3 dR_dbg() const { return bias_jacobians.block<3, 3>(0, 3); }
  Matrix3 dv_dba() const { return bias_jacobians.block<3, 3>(3, 0); }
  Matrix3 dv_dbg() const { return bias_jacobians.block<3, 3>(3, 3); }
  Matrix3 dp_dba() const { return bias_jacobians.block<3, 3>(6, 0); }
  Matrix3 dp_dbg() const { return bias_jacobians.block<3, 3>(6, 3); }
};

/**
 * Integrates an ordered sample stream into a PreintegratedDelta.
 *
 * Midpoint (trapezoidal) scheme per sample interval: the angular rate is
 * the two-sample mean, the specific force is averaged across the rotations
 * at both interval ends. Covariance and bias Jacobians are propagated with
 * the matching first-order linearization.
 *
 * Throws EmptyStreamError, NonMonotonicTimeError, SaturatedSampleError.
 */
PreintegratedDelta integrate(std::span<const ImuSample> samples,
                             const ImuBias& bias_lin_point,
                             const ImuNoiseParams& params);

/**
 * 9-vector preintegration residual [r_R, r_v, r_p].
 *
 * The delta is corrected to first order for (bias_i - bias_lin_point) via
 * the stored bias Jacobians; gravity enters through the strapdown terms.
 */
Vector9 preint_residual(const NavState& state_i, const NavState& state_j,
                        const ImuBias& bias_i, const PreintegratedDelta& delta,
                        const Vector3& gravity);

/// First-order Gauss-Markov bias factor residual: b_{t+1} - exp(-dt/tau) b_t.
/// Whitening (sigma_bias_rw^2 * dt) is applied by the factor, not here.
Vector6 bias_residual(const ImuBias& bias_t, const ImuBias& bias_t1, double dt,
                      const ImuNoiseParams& params);

/// Strapdown propagation of a full NavState through one sample interval
/// (midpoint scheme, gravity applied). Used by extrapolation and the
/// simulator round-trip tests.
NavState strapdown_step(const NavState& state, const ImuBias& bias,
                        const ImuSample& s0, const ImuSample& s1,
                        const Vector3& gravity);

}  // namespace rif
