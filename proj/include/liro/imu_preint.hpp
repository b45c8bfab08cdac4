#ifndef LIRO_IMU_PREINT_HPP
#define LIRO_IMU_PREINT_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "liro/error.hpp"
#include "liro/geometry.hpp"
#include "liro/state.hpp"

namespace liro {

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   ///< angular velocity, rad/s, body frame
  Vec3 accel = Vec3::Zero();  ///< specific force, m/s^2, body frame
};

/// Continuous-time noise densities of the IMU.
struct ImuNoise {
  double gyro_density = 1e-3;        ///< rad/s/sqrt(Hz)
  double accel_density = 1e-2;       ///< m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-5;      ///< rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1e-4;     ///< m/s^3/sqrt(Hz)
};

enum class IntegrationMethod { kZoh, kRk4 };

/// Gravitational acceleration in the world frame.
inline const Vec3 kDefaultGravity{0.0, 0.0, -9.81};

/// Relative motion integrals between two knots plus first-order bias
/// sensitivities and error covariance.
///
/// alpha, beta and gamma are expressed in the body frame at the first knot and
/// depend only on the samples and the nominal biases. Gravity never enters
/// them; it appears in the observation model instead.
struct ImuPreintegration {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Eigen::Quaterniond gamma = Eigen::Quaterniond::Identity();
  double dt = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;

  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();

  Mat3 alpha_bg = Mat3::Zero();  ///< d alpha / d bg
  Mat3 alpha_ba = Mat3::Zero();  ///< d alpha / d ba
  Mat3 beta_bg = Mat3::Zero();   ///< d beta / d bg
  Mat3 beta_ba = Mat3::Zero();   ///< d beta / d ba
  Mat3 gamma_bg = Mat3::Zero();  ///< d Log(gamma) / d bg, right perturbation

  /// Covariance over (dtheta, dalpha, dbeta).
  Eigen::Matrix<double, 9, 9> covariance = Eigen::Matrix<double, 9, 9>::Zero();
  ImuNoise noise;

  /// Full 15x15 covariance matching the residual layout
  /// (r_gamma, r_alpha, r_beta, r_bg, r_ba).
  StateMatrix residual_covariance() const {
    StateMatrix p = StateMatrix::Zero();
    p.topLeftCorner<9, 9>() = covariance;
    p.block<3, 3>(9, 9) = Mat3::Identity() * noise.gyro_bias_walk * noise.gyro_bias_walk * dt;
    p.block<3, 3>(12, 12) = Mat3::Identity() * noise.accel_bias_walk * noise.accel_bias_walk * dt;
    return p;
  }

  /// Upper-triangular L with L^T L = P^-1; whitened residual is L r.
  StateMatrix sqrt_information() const {
    const StateMatrix info = residual_covariance().inverse();
    const StateMatrix sym = 0.5 * (info + info.transpose());
    Eigen::LLT<StateMatrix> llt(sym);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::kDegenerate, "preintegration covariance is not positive definite");
    }
    return llt.matrixU();
  }

  Vec3 corrected_alpha(const Vec3& bg, const Vec3& ba) const {
    return alpha + alpha_bg * (bg - bias_gyro) + alpha_ba * (ba - bias_accel);
  }
  Vec3 corrected_beta(const Vec3& bg, const Vec3& ba) const {
    return beta + beta_bg * (bg - bias_gyro) + beta_ba * (ba - bias_accel);
  }
  Eigen::Quaterniond corrected_gamma(const Vec3& bg) const {
    return (gamma * geometry::quat_exp(gamma_bg * (bg - bias_gyro))).normalized();
  }
};

namespace detail {

/// Integration state carried through the sample buffer.
struct PreintState {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Mat3 a_bg = Mat3::Zero(), a_ba = Mat3::Zero();
  Mat3 b_bg = Mat3::Zero(), b_ba = Mat3::Zero();
  Mat3 c_bg = Mat3::Zero();
  Eigen::Matrix<double, 9, 9> cov = Eigen::Matrix<double, 9, 9>::Zero();
};

/// Time derivative of PreintState, with the quaternion derivative stored as
/// a 4-vector.
struct PreintRate {
  Eigen::Vector4d q;
  Vec3 alpha, beta;
  Mat3 a_bg, a_ba, b_bg, b_ba, c_bg;
  Eigen::Matrix<double, 9, 9> cov;
};

inline PreintRate preint_rate(const PreintState& s, const Vec3& w, const Vec3& a,
                              const ImuNoise& noise) {
  using geometry::skew;
  PreintRate d;
  const Eigen::Quaterniond omega(0.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
  d.q = (s.q * omega).coeffs();
  const Mat3 r = s.q.toRotationMatrix();
  const Mat3 ra_x = r * skew(a);
  d.alpha = s.beta;
  d.beta = r * a;
  d.c_bg = -skew(w) * s.c_bg - Mat3::Identity();
  d.a_bg = s.b_bg;
  d.a_ba = s.b_ba;
  d.b_bg = -ra_x * s.c_bg;
  d.b_ba = -r;

  Eigen::Matrix<double, 9, 9> f = Eigen::Matrix<double, 9, 9>::Zero();
  f.block<3, 3>(0, 0) = -skew(w);
  f.block<3, 3>(3, 6) = Mat3::Identity();
  f.block<3, 3>(6, 0) = -ra_x;
  Eigen::Matrix<double, 9, 9> q = Eigen::Matrix<double, 9, 9>::Zero();
  const double sg2 = noise.gyro_density * noise.gyro_density;
  const double sa2 = noise.accel_density * noise.accel_density;
  q.block<3, 3>(0, 0) = sg2 * Mat3::Identity();
  q.block<3, 3>(6, 6) = sa2 * Mat3::Identity();
  d.cov = f * s.cov + s.cov * f.transpose() + q;
  return d;
}

inline PreintState advance(const PreintState& s, const PreintRate& d, double h) {
  PreintState o;
  o.q.coeffs() = s.q.coeffs() + h * d.q;
  o.alpha = s.alpha + h * d.alpha;
  o.beta = s.beta + h * d.beta;
  o.a_bg = s.a_bg + h * d.a_bg;
  o.a_ba = s.a_ba + h * d.a_ba;
  o.b_bg = s.b_bg + h * d.b_bg;
  o.b_ba = s.b_ba + h * d.b_ba;
  o.c_bg = s.c_bg + h * d.c_bg;
  o.cov = s.cov + h * d.cov;
  return o;
}

/// Gyro and accel at the midpoint of samples i and i+1, from the Lagrange
/// polynomial through up to four neighboring samples of the buffer (cubic in
/// the interior, lower order for very short buffers). The stencil is shifted
/// rather than extended at the buffer ends.
inline std::pair<Vec3, Vec3> midpoint_sample(std::span<const ImuSample> samples, std::size_t i) {
  const std::size_t n = samples.size();
  const std::size_t order = std::min<std::size_t>(4, n);
  std::size_t first = i > 0 ? i - 1 : 0;
  first = std::min(first, n - order);
  const double tm = 0.5 * (samples[i].t + samples[i + 1].t);
  Vec3 w = Vec3::Zero(), a = Vec3::Zero();
  for (std::size_t k = first; k < first + order; ++k) {
    double l = 1.0;
    for (std::size_t m = first; m < first + order; ++m) {
      if (m != k) l *= (tm - samples[m].t) / (samples[k].t - samples[m].t);
    }
    w += l * samples[k].gyro;
    a += l * samples[k].accel;
  }
  return {w, a};
}

/// Classical RK4 over one sample interval; (wm, am) is the bias-corrected
/// midpoint input.
inline void step_rk4(PreintState& s, const Vec3& w0, const Vec3& a0, const Vec3& wm,
                     const Vec3& am, const Vec3& w1, const Vec3& a1, double h,
                     const ImuNoise& noise) {
  const PreintRate k1 = preint_rate(s, w0, a0, noise);
  const PreintRate k2 = preint_rate(advance(s, k1, 0.5 * h), wm, am, noise);
  const PreintRate k3 = preint_rate(advance(s, k2, 0.5 * h), wm, am, noise);
  const PreintRate k4 = preint_rate(advance(s, k3, h), w1, a1, noise);
  const double h6 = h / 6.0;
  s.q.coeffs() += h6 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
  s.q.normalize();
  s.alpha += h6 * (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha);
  s.beta += h6 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta);
  s.a_bg += h6 * (k1.a_bg + 2.0 * k2.a_bg + 2.0 * k3.a_bg + k4.a_bg);
  s.a_ba += h6 * (k1.a_ba + 2.0 * k2.a_ba + 2.0 * k3.a_ba + k4.a_ba);
  s.b_bg += h6 * (k1.b_bg + 2.0 * k2.b_bg + 2.0 * k3.b_bg + k4.b_bg);
  s.b_ba += h6 * (k1.b_ba + 2.0 * k2.b_ba + 2.0 * k3.b_ba + k4.b_ba);
  s.c_bg += h6 * (k1.c_bg + 2.0 * k2.c_bg + 2.0 * k3.c_bg + k4.c_bg);
  s.cov += h6 * (k1.cov + 2.0 * k2.cov + 2.0 * k3.cov + k4.cov);
}

/// Zero-order hold on the left sample. Jacobians and covariance are the exact
/// linearization of this discrete recursion.
inline void step_zoh(PreintState& s, const Vec3& w, const Vec3& a, double h,
                     const ImuNoise& noise) {
  using geometry::skew;
  const Mat3 r = s.q.toRotationMatrix();
  const Vec3 phi = w * h;
  const Mat3 dr = geometry::exp_so3(phi);
  const Mat3 jr = geometry::right_jacobian(phi);
  const Mat3 ra_x = r * skew(a);
  const Vec3 acc = r * a;
  const double h2 = h * h;

  // Bias sensitivities use the values before this step.
  s.a_bg += s.b_bg * h - 0.5 * h2 * ra_x * s.c_bg;
  s.a_ba += s.b_ba * h - 0.5 * h2 * r;
  s.b_bg += -h * ra_x * s.c_bg;
  s.b_ba += -h * r;
  s.c_bg = dr.transpose() * s.c_bg - jr * h;

  Eigen::Matrix<double, 9, 9> f = Eigen::Matrix<double, 9, 9>::Identity();
  f.block<3, 3>(0, 0) = dr.transpose();
  f.block<3, 3>(3, 0) = -0.5 * h2 * ra_x;
  f.block<3, 3>(3, 6) = h * Mat3::Identity();
  f.block<3, 3>(6, 0) = -h * ra_x;
  Eigen::Matrix<double, 9, 6> g = Eigen::Matrix<double, 9, 6>::Zero();
  g.block<3, 3>(0, 0) = -jr * h;
  g.block<3, 3>(3, 3) = -0.5 * h2 * r;
  g.block<3, 3>(6, 3) = -h * r;
  Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
  q.block<3, 3>(0, 0) = Mat3::Identity() * noise.gyro_density * noise.gyro_density / h;
  q.block<3, 3>(3, 3) = Mat3::Identity() * noise.accel_density * noise.accel_density / h;
  s.cov = f * s.cov * f.transpose() + g * q * g.transpose();

  s.alpha += s.beta * h + 0.5 * h2 * acc;
  s.beta += h * acc;
  s.q = (s.q * geometry::rot_to_quat(dr)).normalized();
}

}  // namespace detail

/// Preintegrates an ordered sample buffer from its first to its last
/// timestamp. Use slice_imu() to build a buffer with interpolated endpoints.
inline ImuPreintegration preintegrate(std::span<const ImuSample> samples, const Vec3& bias_gyro,
                                      const Vec3& bias_accel, const ImuNoise& noise = {},
                                      IntegrationMethod method = IntegrationMethod::kZoh) {
  if (samples.size() < 2) {
    throw Error(ErrorKind::kValidation, "preintegration needs at least two samples");
  }
  if (!bias_gyro.allFinite() || !bias_accel.allFinite()) {
    throw Error(ErrorKind::kValidation, "nominal biases must be finite");
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw Error(ErrorKind::kValidation, "IMU timestamps must be strictly increasing");
    }
  }

  detail::PreintState s;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double h = samples[i + 1].t - samples[i].t;
    const Vec3 w0 = samples[i].gyro - bias_gyro;
    const Vec3 a0 = samples[i].accel - bias_accel;
    if (method == IntegrationMethod::kZoh) {
      detail::step_zoh(s, w0, a0, h, noise);
    } else {
      const Vec3 w1 = samples[i + 1].gyro - bias_gyro;
      const Vec3 a1 = samples[i + 1].accel - bias_accel;
      const auto [wm, am] = detail::midpoint_sample(samples, i);
      detail::step_rk4(s, w0, a0, wm - bias_gyro, am - bias_accel, w1, a1, h, noise);
    }
  }

  ImuPreintegration out;
  out.alpha = s.alpha;
  out.beta = s.beta;
  out.gamma = s.q.normalized();
  out.t_begin = samples.front().t;
  out.t_end = samples.back().t;
  out.dt = out.t_end - out.t_begin;
  out.bias_gyro = bias_gyro;
  out.bias_accel = bias_accel;
  out.alpha_bg = s.a_bg;
  out.alpha_ba = s.a_ba;
  out.beta_bg = s.b_bg;
  out.beta_ba = s.b_ba;
  out.gamma_bg = s.c_bg;
  out.covariance = 0.5 * (s.cov + s.cov.transpose());
  out.noise = noise;
  return out;
}

inline ImuSample interpolate_sample(const ImuSample& a, const ImuSample& b, double t) {
  const double u = (t - a.t) / (b.t - a.t);
  return {t, a.gyro + u * (b.gyro - a.gyro), a.accel + u * (b.accel - a.accel)};
}

/// Samples covering [t0, t1] with linearly interpolated samples at both ends.
/// The buffer must be sorted and straddle the interval.
inline std::vector<ImuSample> slice_imu(std::span<const ImuSample> buffer, double t0, double t1) {
  if (!(t1 > t0)) throw Error(ErrorKind::kValidation, "slice_imu needs t1 > t0");
  if (buffer.size() < 2 || buffer.front().t > t0 || buffer.back().t < t1) {
    throw Error(ErrorKind::kValidation, "IMU buffer does not cover the interval");
  }
  auto first_after = [&](double t) {
    return std::upper_bound(buffer.begin(), buffer.end(), t,
                            [](double v, const ImuSample& s) { return v < s.t; });
  };
  std::vector<ImuSample> out;
  auto it = first_after(t0);
  if (it == buffer.begin()) ++it;
  const ImuSample& before = *(it - 1);
  out.push_back(before.t == t0 ? before : interpolate_sample(before, *it, t0));
  for (; it != buffer.end() && it->t < t1; ++it) out.push_back(*it);
  if (it == buffer.end()) {
    out.push_back(buffer.back());
  } else if (it->t == t1) {
    out.push_back(*it);
  } else {
    out.push_back(interpolate_sample(*(it - 1), *it, t1));
  }
  return out;
}

/// Propagates a state through one preintegration interval using the
/// observation model solved for the later state.
inline StateNode predict_state(const StateNode& prev, const ImuPreintegration& preint,
                               const Vec3& gravity = kDefaultGravity) {
  const double dt = preint.dt;
  const Mat3 r = prev.rotation();
  StateNode next = prev;
  next.t = prev.t + dt;
  next.p = prev.p + prev.v * dt + 0.5 * gravity * dt * dt + r * preint.corrected_alpha(prev.bg, prev.ba);
  next.v = prev.v + gravity * dt + r * preint.corrected_beta(prev.bg, prev.ba);
  next.q = (prev.q * preint.corrected_gamma(prev.bg)).normalized();
  return next;
}

using ImuResidual = StateVector;

struct ImuJacobians {
  StateMatrix wrt_first;
  StateMatrix wrt_second;
};

/// Residual (r_gamma, r_alpha, r_beta, r_bg, r_ba), unweighted.
///
/// The rotation block keeps the first-order bias correction quaternion
/// [1, -C (bg - bg_nominal) / 2] unnormalized.
inline ImuResidual imu_residual(const StateNode& xi, const StateNode& xj,
                                const ImuPreintegration& preint,
                                const Vec3& gravity = kDefaultGravity,
                                ImuJacobians* jac = nullptr) {
  using geometry::skew;
  const double dt = preint.dt;
  const Mat3 ri_t = xi.rotation().transpose();
  const Vec3 dbg = xi.bg - preint.bias_gyro;
  const Vec3 dba = xi.ba - preint.bias_accel;

  const Vec3 half = -0.5 * preint.gamma_bg * dbg;
  const Eigen::Quaterniond corr(1.0, half.x(), half.y(), half.z());
  const Eigen::Quaterniond rel = xi.q.conjugate() * xj.q;
  const Eigen::Quaterniond c = preint.gamma.conjugate() * rel;
  const Eigen::Quaterniond e = corr * c;

  const Vec3 dp = xj.p - xi.p - xi.v * dt - 0.5 * gravity * dt * dt;
  const Vec3 dv = xj.v - xi.v - gravity * dt;
  const Vec3 pos_i = ri_t * dp;
  const Vec3 vel_i = ri_t * dv;

  ImuResidual r;
  r.segment<3>(0) = 2.0 * e.vec();
  r.segment<3>(3) = pos_i - (preint.alpha + preint.alpha_bg * dbg + preint.alpha_ba * dba);
  r.segment<3>(6) = vel_i - (preint.beta + preint.beta_bg * dbg + preint.beta_ba * dba);
  r.segment<3>(9) = xj.bg - xi.bg;
  r.segment<3>(12) = xj.ba - xi.ba;

  if (jac) {
    StateMatrix& ji = jac->wrt_first;
    StateMatrix& jj = jac->wrt_second;
    ji.setZero();
    jj.setZero();

    // q_i <- q_i * [1, d/2] puts [1, -d/2] between gamma^-1 and q_i^-1.
    const Eigen::Quaterniond a = corr * preint.gamma.conjugate();
    const Eigen::Quaterniond b = xi.q.conjugate() * xj.q;
    const Eigen::Matrix4d lr = geometry::quat_left(a) * geometry::quat_right(b);
    ji.block<3, 3>(0, kRot) = -lr.block<3, 3>(1, 1);
    ji.block<3, 3>(0, kBiasGyro) = -geometry::quat_right(c).block<3, 3>(1, 1) * preint.gamma_bg;
    jj.block<3, 3>(0, kRot) = e.w() * Mat3::Identity() + skew(e.vec());

    ji.block<3, 3>(3, kRot) = skew(pos_i);
    ji.block<3, 3>(3, kPos) = -ri_t;
    ji.block<3, 3>(3, kVel) = -ri_t * dt;
    ji.block<3, 3>(3, kBiasGyro) = -preint.alpha_bg;
    ji.block<3, 3>(3, kBiasAccel) = -preint.alpha_ba;
    jj.block<3, 3>(3, kPos) = ri_t;

    ji.block<3, 3>(6, kRot) = skew(vel_i);
    ji.block<3, 3>(6, kVel) = -ri_t;
    ji.block<3, 3>(6, kBiasGyro) = -preint.beta_bg;
    ji.block<3, 3>(6, kBiasAccel) = -preint.beta_ba;
    jj.block<3, 3>(6, kVel) = ri_t;

    ji.block<3, 3>(9, kBiasGyro) = -Mat3::Identity();
    jj.block<3, 3>(9, kBiasGyro) = Mat3::Identity();
    ji.block<3, 3>(12, kBiasAccel) = -Mat3::Identity();
    jj.block<3, 3>(12, kBiasAccel) = Mat3::Identity();
  }
  return r;
}

}  // namespace liro

#endif  // LIRO_IMU_PREINT_HPP
