#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rif {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// Angle below which exp/log and the SO(3) Jacobians switch to their
/// Taylor-series branches.
inline constexpr double kSmallAngle = 1e-6;

/**
 * An element of SO(3), stored as a unit quaternion.
 *
 * The quaternion is renormalized on every composition so that long
 * integration chains (1e4+ compositions) stay orthonormal to well below
 * 1e-9. The public interface is matrix action plus exp/log.
 */
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q.normalized()) {}
  explicit Rotation(const Matrix3& m) : q_(m) { q_.normalize(); }

  static Rotation identity() { return Rotation(); }

  Matrix3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Vector3 operator*(const Vector3& v) const { return q_ * v; }

  Rotation operator*(const Rotation& other) const {
    Eigen::Quaterniond q = q_ * other.q_;
    q.normalize();
    Rotation r;
    r.q_ = q;
    return r;
  }

  Rotation inverse() const {
    Rotation r;
    r.q_ = q_.conjugate();
    return r;
  }

  /// Angle of the relative rotation to `other`, in radians.
  double angular_distance(const Rotation& other) const {
    return q_.angularDistance(other.q_);
  }

 private:
  Eigen::Quaterniond q_;
};

/// Skew-symmetric matrix [v]x such that [v]x * w = v.cross(w).
Matrix3 skew(const Vector3& v);

/// Exponential map: rotation by |omega| radians about omega/|omega|.
Rotation exp_so3(const Vector3& omega);

/// Logarithm map, inverse of exp_so3 for angles < pi. Stable up to and
/// including angle = pi (axis taken from the quaternion vector part).
Vector3 log_so3(const Rotation& r);

/// Right Jacobian of the SO(3) exponential: Exp(w + dw) ~ Exp(w) Exp(Jr(w) dw).
Matrix3 so3_right_jacobian(const Vector3& omega);

/// Inverse of the right Jacobian.
Matrix3 so3_right_jacobian_inverse(const Vector3& omega);

/// Rigid placement used for graph pose variables: rotation + position.
/// Retraction is exp_so3 on the rotation block, vector addition on position.
struct Pose {
  Rotation rotation;
  Vector3 position = Vector3::Zero();
};

/// Full navigation state: attitude, earth-frame velocity and position.
struct NavState {
  Rotation rotation;
  Vector3 velocity = Vector3::Zero();
  Vector3 position = Vector3::Zero();

  Pose pose() const { return Pose{rotation, position}; }
};

}  // namespace rif
