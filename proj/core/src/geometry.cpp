#include "rif/geometry.hpp"

#include <cmath>

namespace rif {

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  // clang-format off
  m <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return m;
}

Rotation exp_so3(const Vector3& omega) {
  const double angle = omega.norm();
  double half = 0.5 * angle;
  double w, s;
  if (angle < kSmallAngle) {
    // sin(x/2)/x = 1/2 - x^2/48 + O(x^4)
    w = 1.0 - 0.125 * angle * angle;
    s = 0.5 - angle * angle / 48.0;
  } else {
    w = std::cos(half);
    s = std::sin(half) / angle;
  }
  return Rotation(Eigen::Quaterniond(w, s * omega.x(), s * omega.y(), s * omega.z()));
}

Vector3 log_so3(const Rotation& r) {
  Eigen::Quaterniond q = r.quaternion();
  if (q.w() < 0) q.coeffs() = -q.coeffs();  // pick the short arc
  const Vector3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // theta/sin(theta/2) ~ 2 + s^2/(3 w^2), with w ~ 1
    return (2.0 / q.w()) * (1.0 + s * s / (3.0 * q.w() * q.w())) * v;
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return (theta / s) * v;
}

Matrix3 so3_right_jacobian(const Vector3& omega) {
  const double t = omega.norm();
  const Matrix3 w = skew(omega);
  if (t < kSmallAngle) {
    return Matrix3::Identity() - 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double t2 = t * t;
  const double a = (1.0 - std::cos(t)) / t2;
  const double b = (t - std::sin(t)) / (t2 * t);
  return Matrix3::Identity() - a * w + b * w * w;
}

Matrix3 so3_right_jacobian_inverse(const Vector3& omega) {
  const double t = omega.norm();
  const Matrix3 w = skew(omega);
  if (t < kSmallAngle) {
    return Matrix3::Identity() + 0.5 * w + (1.0 / 12.0) * w * w;
  }
  const double c = 1.0 / (t * t) - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  return Matrix3::Identity() + 0.5 * w + c * w * w;
}

}  // namespace rif
