#include "rif/imu.hpp"

#include <cmath>
#include <sstream>

#include "rif/error.hpp"

namespace rif {

PreintegratedDelta integrate(std::span<const ImuSample> samples,
                             const ImuBias& bias_lin_point,
                             const ImuNoiseParams& params) {
  if (samples.empty()) {
    throw EmptyStreamError("integrate: empty sample stream");
  }
  for (const ImuSample& s : samples) {
    if (s.saturated()) {
      std::ostringstream os;
      os << "integrate: saturated sample at t=" << s.t;
      throw SaturatedSampleError(os.str());
    }
  }

  PreintegratedDelta out;
  out.bias_lin_point = bias_lin_point;

  Matrix3 dR = Matrix3::Identity();  // accumulated delta_R as matrix
  Matrix3 j_r_bg = Matrix3::Zero();
  Matrix3 j_v_bg = Matrix3::Zero(), j_v_ba = Matrix3::Zero();
  Matrix3 j_p_bg = Matrix3::Zero(), j_p_ba = Matrix3::Zero();
  Matrix9 cov = Matrix9::Zero();
  Vector3 dv = Vector3::Zero(), dp = Vector3::Zero();
  Rotation delta_R;

  for (size_t k = 0; k + 1 < samples.size(); ++k) {
    const ImuSample& a = samples[k];
    const ImuSample& b = samples[k + 1];
    const double dt = b.t - a.t;
    if (dt <= 0) {
      std::ostringstream os;
      os << "integrate: non-monotonic timestamps at t=" << b.t;
      throw NonMonotonicTimeError(os.str());
    }

    const Vector3 omega = 0.5 * (a.gyro + b.gyro) - bias_lin_point.gyro_bias;
    const Vector3 u0 = a.accel - bias_lin_point.accel_bias;
    const Vector3 u1 = b.accel - bias_lin_point.accel_bias;

    const Rotation inc = exp_so3(omega * dt);
    const Matrix3 inc_m = inc.matrix();
    const Matrix3 jr = so3_right_jacobian(omega * dt);
    const Matrix3 r0 = dR;            // delta_R at interval start
    const Matrix3 r1 = dR * inc_m;    // delta_R at interval end

    // Trapezoidal specific force in the frame at epoch start.
    const Vector3 acc = 0.5 * (r0 * u0 + r1 * u1);

    // Bias Jacobians. Order matters: position uses the pre-update velocity
    // Jacobians, the accel terms use the pre-update rotation Jacobian.
    const Matrix3 da_dbg =
        0.5 * (-r0 * skew(u0) * j_r_bg -
               r1 * skew(u1) * (inc_m.transpose() * j_r_bg - jr * dt));
    const Matrix3 da_dba = -0.5 * (r0 + r1);

    j_p_bg += j_v_bg * dt + 0.5 * dt * dt * da_dbg;
    j_p_ba += j_v_ba * dt + 0.5 * dt * dt * da_dba;
    j_v_bg += dt * da_dbg;
    j_v_ba += dt * da_dba;
    j_r_bg = inc_m.transpose() * j_r_bg - jr * dt;

    // Covariance propagation, state [phi, v, p] with right-perturbed phi.
    const Matrix3 dphi = 0.5 * (-r0 * skew(u0) - r1 * skew(u1) * inc_m.transpose());
    Matrix9 A = Matrix9::Identity();
    A.block<3, 3>(0, 0) = inc_m.transpose();
    A.block<3, 3>(3, 0) = dphi * dt;
    A.block<3, 3>(6, 0) = dphi * 0.5 * dt * dt;
    A.block<3, 3>(6, 3) = Matrix3::Identity() * dt;

    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    const Matrix3 dn_g = -0.5 * r1 * skew(u1) * jr * dt;  // gyro noise into accel
    const Matrix3 dn_a = 0.5 * (r0 + r1);
    B.block<3, 3>(0, 0) = jr * dt;
    B.block<3, 3>(3, 0) = dn_g * dt;
    B.block<3, 3>(6, 0) = dn_g * 0.5 * dt * dt;
    B.block<3, 3>(3, 3) = dn_a * dt;
    B.block<3, 3>(6, 3) = dn_a * 0.5 * dt * dt;

    Vector6 noise_diag;
    noise_diag.head<3>().setConstant(params.sigma_gyro * params.sigma_gyro / dt);
    noise_diag.tail<3>().setConstant(params.sigma_accel * params.sigma_accel / dt);

    cov = A * cov * A.transpose() + B * noise_diag.asDiagonal() * B.transpose();

    dp += dv * dt + 0.5 * dt * dt * acc;
    dv += acc * dt;
    delta_R = delta_R * inc;
    dR = delta_R.matrix();
    out.dt_total += dt;
  }

  out.delta_R = delta_R;
  out.delta_v = dv;
  out.delta_p = dp;
  if (samples.size() > 1) {
    const Vector3& floor = params.preint_sigma_floor;
    cov.block<3, 3>(0, 0) += floor.x() * floor.x() * Matrix3::Identity();
    cov.block<3, 3>(3, 3) += floor.y() * floor.y() * Matrix3::Identity();
    cov.block<3, 3>(6, 6) += floor.z() * floor.z() * Matrix3::Identity();
  }
  out.covariance = 0.5 * (cov + cov.transpose());
  out.bias_jacobians.block<3, 3>(0, 3) = j_r_bg;
  out.bias_jacobians.block<3, 3>(3, 0) = j_v_ba;
  out.bias_jacobians.block<3, 3>(3, 3) = j_v_bg;
  out.bias_jacobians.block<3, 3>(6, 0) = j_p_ba;
  out.bias_jacobians.block<3, 3>(6, 3) = j_p_bg;
  return out;
}

Vector9 preint_residual(const NavState& state_i, const NavState& state_j,
                        const ImuBias& bias_i, const PreintegratedDelta& delta,
                        const Vector3& gravity) {
  const double dt = delta.dt_total;
  const Vector3 dbg = bias_i.gyro_bias - delta.bias_lin_point.gyro_bias;
  const Vector3 dba = bias_i.accel_bias - delta.bias_lin_point.accel_bias;

  const Rotation corrected_R = delta.delta_R * exp_so3(delta.dR_dbg() * dbg);
  const Vector3 corrected_v = delta.delta_v + delta.dv_dbg() * dbg + delta.dv_dba() * dba;
  const Vector3 corrected_p = delta.delta_p + delta.dp_dbg() * dbg + delta.dp_dba() * dba;

  const Rotation ri_inv = state_i.rotation.inverse();
  const Vector3 r_R = log_so3(corrected_R.inverse() * (ri_inv * state_j.rotation));
  const Vector3 r_v =
      ri_inv * (state_j.velocity - state_i.velocity - gravity * dt) - corrected_v;
  const Vector3 r_p = ri_inv * (state_j.position - state_i.position -
                                state_i.velocity * dt - 0.5 * gravity * dt * dt) -
                      corrected_p;

  Vector9 r;
  r << r_R, r_v, r_p;
  return r;
}

Vector6 bias_residual(const ImuBias& bias_t, const ImuBias& bias_t1, double dt,
                      const ImuNoiseParams& params) {
  if (dt <= 0) {
    throw NonPositiveDtError("bias_residual: dt must be positive");
  }
  const double decay = std::exp(-dt / params.tau_bias);
  return bias_t1.vector() - decay * bias_t.vector();
}

NavState strapdown_step(const NavState& state, const ImuBias& bias,
                        const ImuSample& s0, const ImuSample& s1,
                        const Vector3& gravity) {
  const double dt = s1.t - s0.t;
  if (dt <= 0) {
    throw NonMonotonicTimeError("strapdown_step: non-positive dt");
  }
  const Vector3 omega = 0.5 * (s0.gyro + s1.gyro) - bias.gyro_bias;
  const Rotation r1 = state.rotation * exp_so3(omega * dt);
  const Vector3 acc =
      0.5 * (state.rotation * (s0.accel - bias.accel_bias) +
             r1 * (s1.accel - bias.accel_bias)) +
      gravity;

  NavState out;
  out.rotation = r1;
  out.position = state.position + state.velocity * dt + 0.5 * dt * dt * acc;
  out.velocity = state.velocity + acc * dt;
  return out;
}

}  // namespace rif
