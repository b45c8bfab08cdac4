#ifndef LIRO_STATE_HPP
#define LIRO_STATE_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "liro/geometry.hpp"

namespace liro {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Dimension of the error state of one window knot.
inline constexpr int kStateDim = 15;

/// Offsets of each block inside the 15-dimensional error state.
enum StateBlock : int {
  kRot = 0,
  kPos = 3,
  kVel = 6,
  kBiasGyro = 9,
  kBiasAccel = 12,
};

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

/// One knot of the sliding window: world-frame pose and velocity, IMU biases
/// and the timestamp of the pointcloud that created it.
struct StateNode {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  double t = 0.0;

  Mat3 rotation() const { return q.toRotationMatrix(); }
};

/// x <- x [+] delta. Rotation is perturbed on the right, q <- q * Exp(dtheta).
inline StateNode boxplus(const StateNode& x, const StateVector& delta) {
  StateNode out = x;
  out.q = (x.q * geometry::quat_exp(delta.segment<3>(kRot))).normalized();
  out.p += delta.segment<3>(kPos);
  out.v += delta.segment<3>(kVel);
  out.bg += delta.segment<3>(kBiasGyro);
  out.ba += delta.segment<3>(kBiasAccel);
  return out;
}

/// Inverse of boxplus: returns delta with boxplus(base, delta) == x.
inline StateVector boxminus(const StateNode& x, const StateNode& base) {
  StateVector d;
  d.segment<3>(kRot) = geometry::quat_log(base.q.conjugate() * x.q);
  d.segment<3>(kPos) = x.p - base.p;
  d.segment<3>(kVel) = x.v - base.v;
  d.segment<3>(kBiasGyro) = x.bg - base.bg;
  d.segment<3>(kBiasAccel) = x.ba - base.ba;
  return d;
}

}  // namespace liro

#endif  // LIRO_STATE_HPP
