#ifndef LIRO_GEOMETRY_HPP
#define LIRO_GEOMETRY_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "liro/error.hpp"

/// Rotation helpers on SO(3). Quaternions follow the Hamilton convention, so
/// q1 * q2 applies q2 first, expressed in the frame of q1, and the relative
/// rotation between two body frames is q_i^-1 * q_j.
namespace liro::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using UnitQuaternion = Eigen::Quaterniond;
using RotationMatrix = Eigen::Matrix3d;
using RotationVector = Eigen::Vector3d;

/// Below this angle the Rodrigues terms are replaced by their series.
inline constexpr double kSmallAngle = 1e-8;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

inline RotationMatrix exp_so3(const RotationVector& v) {
  const double theta2 = v.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(v);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

/// Throws ErrorKind::kValidation when R is not a rotation within 1e-6.
inline void check_rotation(const RotationMatrix& r, double tol = 1e-6) {
  if (!r.allFinite() || (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
      std::abs(r.determinant() - 1.0) > tol) {
    throw Error(ErrorKind::kValidation, "matrix is not a proper rotation");
  }
}

/// Principal rotation vector with angle in [0, pi]. Near pi the axis comes
/// from the largest diagonal entry of the symmetric part.
inline RotationVector log_so3(const RotationMatrix& r) {
  check_rotation(r);
  const Vec3 w = vee(r);
  const double s = w.norm();
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::atan2(s, c);
  if (theta < kSmallAngle) {
    return w * (1.0 + theta * theta / 6.0);
  }
  if (c > -0.99) {
    return w * (theta / s);
  }
  const Mat3 b = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
  Eigen::Index i = 0;
  b.diagonal().maxCoeff(&i);
  Vec3 axis = b.col(i) / std::sqrt(b(i, i) * (1.0 - c));
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return theta * axis;
}

/// Quaternion of exp_so3(v).
inline UnitQuaternion quat_exp(const RotationVector& v) {
  const double theta = v.norm();
  if (theta < kSmallAngle) {
    UnitQuaternion q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Vec3 u = v * (std::sin(half) / theta);
  return UnitQuaternion(std::cos(half), u.x(), u.y(), u.z());
}

inline RotationVector quat_log(const UnitQuaternion& q) {
  UnitQuaternion p = q.normalized();
  if (p.w() < 0.0) p.coeffs() = -p.coeffs();
  const Vec3 u = p.vec();
  const double s = u.norm();
  if (s < kSmallAngle) return 2.0 * u;
  return u * (2.0 * std::atan2(s, p.w()) / s);
}

/// Right Jacobian: Exp(v + d) ~ Exp(v) Exp(Jr(v) d).
inline Mat3 right_jacobian(const RotationVector& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 k = skew(v);
  if (theta2 < 1e-10) return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * k +
         (theta - std::sin(theta)) / (theta2 * theta) * k * k;
}

inline Mat3 right_jacobian_inv(const RotationVector& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 k = skew(v);
  if (theta2 < 1e-10) return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  const double theta = std::sqrt(theta2);
  const double coeff = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

inline Mat3 left_jacobian_inv(const RotationVector& v) { return right_jacobian_inv(-v); }

inline RotationMatrix quat_to_rot(const UnitQuaternion& q) { return q.normalized().toRotationMatrix(); }

inline UnitQuaternion rot_to_quat(const RotationMatrix& r) {
  UnitQuaternion q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

inline UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b) { return a * b; }

inline UnitQuaternion quat_conj(const UnitQuaternion& q) { return q.conjugate(); }

inline Vec3 vec_part(const UnitQuaternion& q) { return q.vec(); }

/// Left-multiplication matrix: (a * b).coeffs in [w, x, y, z] order equals
/// quat_left(a) * [b.w, b.x, b.y, b.z].
inline Eigen::Matrix4d quat_left(const UnitQuaternion& a) {
  Eigen::Matrix4d m;
  m(0, 0) = a.w();
  m.block<1, 3>(0, 1) = -a.vec().transpose();
  m.block<3, 1>(1, 0) = a.vec();
  m.block<3, 3>(1, 1) = a.w() * Mat3::Identity() + skew(a.vec());
  return m;
}

/// Right-multiplication matrix: (a * b) = quat_right(b) * a, [w, x, y, z] order.
inline Eigen::Matrix4d quat_right(const UnitQuaternion& b) {
  Eigen::Matrix4d m;
  m(0, 0) = b.w();
  m.block<1, 3>(0, 1) = -b.vec().transpose();
  m.block<3, 1>(1, 0) = b.vec();
  m.block<3, 3>(1, 1) = b.w() * Mat3::Identity() - skew(b.vec());
  return m;
}

}  // namespace liro::geometry

#endif  // LIRO_GEOMETRY_HPP
