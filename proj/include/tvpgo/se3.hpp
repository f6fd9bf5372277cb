#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tvpgo {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Element of SO(3), stored as a unit quaternion. Composition renormalizes,
/// so orthonormality survives arbitrarily long product chains.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    Rotation r;
    r.q_ = q;
    // Renormalize only on measurable drift, so coefficients that are
    // already unit (e.g. freshly parsed from text) pass through bit-exact.
    if (std::abs(r.q_.squaredNorm() - 1.0) > 2e-12) r.q_.normalize();
    return r;
  }

  /// Conversion from a rotation matrix; uses the stable largest-diagonal
  /// branch internally (Eigen's matrix-to-quaternion path).
  static Rotation from_matrix(const Matrix3& m) {
    return from_quaternion(Eigen::Quaterniond(m));
  }

  static Rotation identity() { return Rotation(); }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Matrix3 matrix() const { return q_.toRotationMatrix(); }

  Rotation operator*(const Rotation& other) const {
    Rotation r;
    r.q_ = (q_ * other.q_).normalized();
    return r;
  }

  Vector3 operator*(const Vector3& v) const { return q_ * v; }

  Rotation inverse() const {
    Rotation r;
    r.q_ = q_.conjugate();
    return r;
  }

 private:
  Eigen::Quaterniond q_;
};

/// Rigid transform in SE(3): x -> rotation * x + translation.
struct Pose {
  Rotation rotation;
  Vector3 translation = Vector3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vector3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Pose operator*(const Pose& other) const {
    return Pose(rotation * other.rotation,
                translation + rotation * other.translation);
  }

  Vector3 operator*(const Vector3& point) const {
    return rotation * point + translation;
  }

  Pose inverse() const {
    Rotation rinv = rotation.inverse();
    return Pose(rinv, -(rinv * translation));
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

/// Tangent vector of SE(3). Component order is fixed throughout the library:
/// elements 0..2 rotational (axis-angle, radians), 3..5 translational (m).
using Twist = Vector6;

inline Twist make_twist(const Vector3& rot, const Vector3& trans) {
  Twist xi;
  xi.head<3>() = rot;
  xi.tail<3>() = trans;
  return xi;
}

Matrix3 skew(const Vector3& v);

/// Exponential map of SO(3) (Rodrigues), Taylor branch below 1e-8.
Rotation rot_exp(const Vector3& axis_angle);

/// Logarithm map of SO(3); inverse of rot_exp for angles < pi. At exactly pi
/// one of the two antipodal axis choices is returned.
Vector3 rot_log(const Rotation& r);

/// Left Jacobian of SO(3) and its inverse (the V matrix of the SE(3)
/// exponential and its inverse).
Matrix3 so3_left_jacobian(const Vector3& axis_angle);
Matrix3 so3_left_jacobian_inverse(const Vector3& axis_angle);

/// Right-Jacobian variants: J_r(w) = J_l(-w).
inline Matrix3 so3_right_jacobian_inverse(const Vector3& w) {
  return so3_left_jacobian_inverse(-w);
}

/// SE(3) exponential with the full V matrix: (R, t) = (exp(w), V(w) v).
Pose pose_exp(const Twist& xi);

/// SE(3) logarithm, inverse of pose_exp for rotational norm < pi.
Twist pose_log(const Pose& p);

inline Pose pose_compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose pose_inverse(const Pose& p) { return p.inverse(); }

/// a^{-1} * b: the pose of b expressed in a's frame.
inline Pose relative_pose(const Pose& a, const Pose& b) {
  return a.inverse() * b;
}

struct PoseMetrics {
  double rot_angle;    // radians
  double trans_norm;   // meters
};

/// Rotation angle and translation norm of a transform, the quantities the
/// retrieval gates and the consistency filter threshold on.
PoseMetrics pose_metrics(const Pose& t);

/// Adjoint of SE(3) in (rotation, translation) tangent ordering.
Matrix6 adjoint(const Pose& p);

/// Inverse right Jacobian of SE(3) at xi; maps right-perturbations of the
/// group element to perturbations of its logarithm.
Matrix6 se3_right_jacobian_inverse(const Twist& xi);

}  // namespace tvpgo
