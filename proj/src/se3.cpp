#include "tvpgo/se3.hpp"

#include <cmath>

namespace tvpgo {

namespace {
// Below this angle the closed forms lose digits to cancellation and the
// leading Taylor terms are exact to double precision.
constexpr double kSmallAngle = 1e-8;
}  // namespace

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Rotation rot_exp(const Vector3& axis_angle) {
  const double theta = axis_angle.norm();
  double scale;  // sin(theta/2) / theta
  if (theta < kSmallAngle) {
    scale = 0.5;
  } else {
    scale = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q;
  q.w() = std::cos(0.5 * theta);
  q.vec() = scale * axis_angle;
  return Rotation::from_quaternion(q);
}

Vector3 rot_log(const Rotation& r) {
  Eigen::Quaterniond q = r.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // pick the short arc
  const double s = q.vec().norm();            // |sin(theta/2)|
  const double c = q.w();                     // cos(theta/2), >= 0
  double scale;                               // theta / sin(theta/2)
  if (s < kSmallAngle) {
    scale = 2.0 / c;
  } else {
    scale = 2.0 * std::atan2(s, c) / s;
  }
  return scale * q.vec();
}

Matrix3 so3_left_jacobian(const Vector3& axis_angle) {
  const double theta = axis_angle.norm();
  const Matrix3 w = skew(axis_angle);
  double a;  // (1 - cos t) / t^2
  double b;  // (t - sin t) / t^3
  if (theta < kSmallAngle) {
    a = 0.5;
    b = 1.0 / 6.0;
  } else {
    const double t2 = theta * theta;
    a = (1.0 - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Matrix3::Identity() + a * w + b * w * w;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& axis_angle) {
  const double theta = axis_angle.norm();
  const Matrix3 w = skew(axis_angle);
  double d;  // (1/t^2) (1 - (t/2) cot(t/2))
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  }
  return Matrix3::Identity() - 0.5 * w + d * w * w;
}

Pose pose_exp(const Twist& xi) {
  const Vector3 w = xi.head<3>();
  const Vector3 v = xi.tail<3>();
  return Pose(rot_exp(w), so3_left_jacobian(w) * v);
}

Twist pose_log(const Pose& p) {
  const Vector3 w = rot_log(p.rotation);
  return make_twist(w, so3_left_jacobian_inverse(w) * p.translation);
}

PoseMetrics pose_metrics(const Pose& t) {
  return PoseMetrics{rot_log(t.rotation).norm(), t.translation.norm()};
}

Matrix6 adjoint(const Pose& p) {
  const Matrix3 r = p.rotation.matrix();
  Matrix6 adj = Matrix6::Zero();
  adj.topLeftCorner<3, 3>() = r;
  adj.bottomRightCorner<3, 3>() = r;
  adj.bottomLeftCorner<3, 3>() = skew(p.translation) * r;
  return adj;
}

namespace {

// Coupling block of the SE(3) left Jacobian (Barfoot, "State Estimation for
// Robotics", eq. 7.86), in (rotation, translation) tangent ordering.
Matrix3 se3_jacobian_q(const Vector3& omega, const Vector3& v) {
  const double theta = omega.norm();
  const Matrix3 wh = skew(omega);
  const Matrix3 vh = skew(v);
  double c1;  // (t - sin t) / t^3
  double c2;  // (1 - t^2/2 - cos t) / t^4
  double c3;  // (t - sin t - t^3/6) / t^5
  if (theta < kSmallAngle) {
    c1 = 1.0 / 6.0;
    c2 = 1.0 / 24.0;
    c3 = -1.0 / 120.0;
  } else {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    c1 = (theta - st) / (t2 * theta);
    c2 = (1.0 - 0.5 * t2 - ct) / t4;
    c3 = (theta - st - t2 * theta / 6.0) / (t4 * theta);
  }
  return 0.5 * vh + c1 * (wh * vh + vh * wh + wh * vh * wh) -
         c2 * (wh * wh * vh + vh * wh * wh - 3.0 * wh * vh * wh) -
         0.5 * (c2 - 3.0 * c3) * (wh * vh * wh * wh + wh * wh * vh * wh);
}

Matrix6 se3_left_jacobian_inverse(const Twist& xi) {
  const Vector3 w = xi.head<3>();
  const Vector3 v = xi.tail<3>();
  const Matrix3 jinv = so3_left_jacobian_inverse(w);
  const Matrix3 q = se3_jacobian_q(w, v);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.bottomLeftCorner<3, 3>() = -jinv * q * jinv;
  return out;
}

}  // namespace

Matrix6 se3_right_jacobian_inverse(const Twist& xi) {
  return se3_left_jacobian_inverse(-xi);
}

}  // namespace tvpgo
