#ifndef LIRO_EVALUATION_HPP
#define LIRO_EVALUATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "liro/error.hpp"
#include "liro/geometry.hpp"
#include "liro/state.hpp"

namespace liro::eval {

enum class Alignment { kNone, kSe3 };

inline const char* to_string(Alignment a) { return a == Alignment::kSe3 ? "se3" : "none"; }

inline Alignment parse_alignment(const std::string& s) {
  if (s == "none") return Alignment::kNone;
  if (s == "se3") return Alignment::kSe3;
  throw Error(ErrorKind::kValidation, "alignment must be 'none' or 'se3', got '" + s + "'");
}

/// Timestamped pose; velocity and biases are not evaluated.
struct PoseSample {
  double t = 0.0;
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 p = Vec3::Zero();
};

inline std::vector<PoseSample> poses_of(const std::vector<StateNode>& states) {
  std::vector<PoseSample> out;
  out.reserve(states.size());
  for (const StateNode& x : states) out.push_back({x.t, x.q, x.p});
  return out;
}

/// Estimate/reference index pairs whose timestamps agree within `tolerance`.
/// Both inputs must be sorted by time.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const std::vector<PoseSample>& est,
                                                                  const std::vector<PoseSample>& ref,
                                                                  double tolerance) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].t;
    while (j + 1 < ref.size() && std::abs(ref[j + 1].t - t) <= std::abs(ref[j].t - t)) ++j;
    if (j < ref.size() && std::abs(ref[j].t - t) <= tolerance) out.emplace_back(i, j);
  }
  return out;
}

/// Rigid transform applied to the estimate: p' = R p + t, q' = R q.
struct Transform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Least-squares rotation and translation mapping `from` onto `to` (Umeyama
/// without scale). Fails on fewer than three points or collinear input.
inline Transform fit_se3(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.size() != to.size()) throw Error(ErrorKind::kValidation, "alignment point counts differ");
  if (from.size() < 3) throw Error(ErrorKind::kDegenerate, "alignment needs at least three points");
  const double n = static_cast<double>(from.size());
  Vec3 mf = Vec3::Zero(), mt = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mf += from[i];
    mt += to[i];
  }
  mf /= n;
  mt /= n;
  Mat3 cov = Mat3::Zero(), spread = Mat3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    cov += (to[i] - mt) * (from[i] - mf).transpose();
    spread += (from[i] - mf) * (from[i] - mf).transpose();
  }
  cov /= n;
  spread /= n;
  const Eigen::SelfAdjointEigenSolver<Mat3> es(spread);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (ev(2) <= 0.0 || ev(1) <= 1e-10 * ev(2)) {
    throw Error(ErrorKind::kDegenerate, "alignment points are collinear");
  }
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  Transform out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.translation = mt - out.rotation * mf;
  return out;
}

struct EvalConfig {
  Alignment alignment = Alignment::kSe3;
  double time_tolerance = 0.01;  ///< s
};

struct ErrorSample {
  double t = 0.0;
  double position_error = 0.0;  ///< m
  double rotation_error = 0.0;  ///< deg
};

struct EvalResult {
  Alignment alignment = Alignment::kNone;
  std::size_t matched = 0;
  double rmse_position = 0.0;  ///< m
  double rmse_rotation = 0.0;  ///< deg
  double max_position = 0.0;
  Transform transform;
  std::vector<ErrorSample> samples;
};

/// Absolute trajectory error of `est` against `ref` after optional alignment.
inline EvalResult evaluate(const std::vector<PoseSample>& est, const std::vector<PoseSample>& ref,
                           const EvalConfig& cfg = {}) {
  const auto pairs = associate(est, ref, cfg.time_tolerance);
  if (pairs.empty()) throw Error(ErrorKind::kValidation, "no estimate matched a reference timestamp");
  EvalResult out;
  out.alignment = cfg.alignment;
  out.matched = pairs.size();
  if (cfg.alignment == Alignment::kSe3) {
    std::vector<Vec3> from, to;
    for (auto [i, j] : pairs) {
      from.push_back(est[i].p);
      to.push_back(ref[j].p);
    }
    out.transform = fit_se3(from, to);
  }
  const Mat3& r = out.transform.rotation;
  double sp = 0.0, sr = 0.0;
  for (auto [i, j] : pairs) {
    const Vec3 p = r * est[i].p + out.transform.translation;
    const Mat3 rot = r * est[i].q.normalized().toRotationMatrix();
    const Mat3 rel = ref[j].q.normalized().toRotationMatrix().transpose() * rot;
    const double ep = (p - ref[j].p).norm();
    const double er = geometry::log_so3(rel).norm() * 180.0 / std::numbers::pi;
    out.samples.push_back({est[i].t, ep, er});
    out.max_position = std::max(out.max_position, ep);
    sp += ep * ep;
    sr += er * er;
  }
  out.rmse_position = std::sqrt(sp / pairs.size());
  out.rmse_rotation = std::sqrt(sr / pairs.size());
  return out;
}

}  // namespace liro::eval

#endif  // LIRO_EVALUATION_HPP
