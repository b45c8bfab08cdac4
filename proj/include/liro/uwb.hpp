#ifndef LIRO_UWB_HPP
#define LIRO_UWB_HPP

#include <Eigen/Core>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "liro/error.hpp"
#include "liro/geometry.hpp"
#include "liro/state.hpp"

namespace liro::uwb {

/// Anchors on a common height z*. Anchor 0 is the origin of the world frame
/// and anchor 1 defines +x.
struct AnchorSet {
  std::vector<Vec3> positions;
  double height = 0.0;

  std::size_t size() const { return positions.size(); }
};

/// Solves the anchor layout from averaged inter-anchor ranges. With
/// d02 and d12 absent only two anchors are placed. The sign picks the side of
/// the x axis for anchor 2, which ranges alone cannot resolve.
inline AnchorSet calibrate_anchors(double d01, std::optional<double> d02, std::optional<double> d12,
                                   double height, double third_anchor_side = -1.0) {
  if (!(d01 > 0.0) || !std::isfinite(d01)) {
    throw Error(ErrorKind::kCalibration, "anchor 0-1 distance must be positive");
  }
  AnchorSet set;
  set.height = height;
  set.positions.emplace_back(0.0, 0.0, height);
  set.positions.emplace_back(d01, 0.0, height);
  if (!d02 || !d12) return set;

  const double a = d01, b = *d02, c = *d12;
  if (!(b > 0.0) || !(c > 0.0) || a + b <= c || a + c <= b || b + c <= a) {
    throw Error(ErrorKind::kCalibration, "inter-anchor ranges violate the triangle inequality");
  }
  const double x2 = (a * a + b * b - c * c) / (2.0 * a);
  const double y2_sq = b * b - x2 * x2;
  if (y2_sq <= 0.0) {
    throw Error(ErrorKind::kCalibration, "anchor 2 is collinear with anchors 0 and 1");
  }
  const double side = third_anchor_side < 0.0 ? -1.0 : 1.0;
  set.positions.emplace_back(x2, side * std::sqrt(y2_sq), height);
  return set;
}

/// One robot-to-anchor range, tied to the interval (t_k, t_k + interval].
struct UwbMeasurement {
  double range = 0.0;
  Vec3 anchor = Vec3::Zero();       ///< anchor position, world frame
  Vec3 node_offset = Vec3::Zero();  ///< ranging node position, body frame
  double offset = 0.0;              ///< time since the start of the interval
  double interval = 0.0;            ///< interval length
  int anchor_id = 0;
  int node_id = 0;
  double t = 0.0;
};

/// Raw log record before bundling.
struct RangeRecord {
  double t = 0.0;
  int anchor_id = 0;
  int node_id = 0;
  double range = 0.0;
};

struct InterpCoeffs {
  double s = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// Constant-rate interpolation weights for a range taken dt after t_k in an
/// interval of length interval.
inline InterpCoeffs interp_coeffs(double dt, double interval) {
  if (!(interval > 0.0)) throw Error(ErrorKind::kValidation, "interval length must be positive");
  if (dt < 0.0 || dt > interval) {
    throw Error(ErrorKind::kValidation, "range offset outside its interval");
  }
  const double rest = interval - dt;
  InterpCoeffs c;
  c.s = dt / interval;
  c.b = rest * rest / (2.0 * interval);
  // (interval^2 - dt^2) / (2 interval), factored so that a + b == interval - dt.
  c.a = rest - c.b;
  return c;
}

/// World-frame vector from the anchor to the ranging node at t_k + offset.
inline Vec3 displacement(const StateNode& xi, const StateNode& xj, const UwbMeasurement& m) {
  const InterpCoeffs c = interp_coeffs(m.offset, m.interval);
  const Mat3 ri = xi.rotation();
  const Vec3 phi = geometry::log_so3(ri.transpose() * xj.rotation());
  return xj.p + ri * geometry::exp_so3(c.s * phi) * m.node_offset - c.a * xj.v - c.b * xi.v -
         m.anchor;
}

/// Gradient of the range residual. Blocks for p_k and the biases are zero.
struct UwbJacobians {
  Eigen::Matrix<double, 1, kStateDim> wrt_first;
  Eigen::Matrix<double, 1, kStateDim> wrt_second;
};

/// r = |d| - measured range.
inline double uwb_residual(const StateNode& xi, const StateNode& xj, const UwbMeasurement& m,
                           UwbJacobians* jac = nullptr) {
  using geometry::skew;
  const InterpCoeffs c = interp_coeffs(m.offset, m.interval);
  const Mat3 ri = xi.rotation();
  const Vec3 phi = geometry::log_so3(ri.transpose() * xj.rotation());
  const Vec3 sphi = c.s * phi;
  const Mat3 rs = geometry::exp_so3(sphi);
  const Vec3 d = xj.p + ri * rs * m.node_offset - c.a * xj.v - c.b * xi.v - m.anchor;
  const double norm = d.norm();
  if (norm < 1e-6) {
    throw Error(ErrorKind::kDegenerate, "ranging node coincides with the anchor");
  }
  if (jac) {
    const Eigen::RowVector3d u = d.transpose() / norm;
    const Mat3 y_x = skew(m.node_offset);
    const Mat3 jr_s = geometry::right_jacobian(sphi);
    jac->wrt_first.setZero();
    jac->wrt_second.setZero();
    const Mat3 d_rot_i =
        -ri * skew(rs * m.node_offset) + ri * rs * y_x * (c.s * jr_s * geometry::left_jacobian_inv(phi));
    const Mat3 d_rot_j = -ri * rs * y_x * (c.s * jr_s * geometry::right_jacobian_inv(phi));
    jac->wrt_first.segment<3>(kRot) = u * d_rot_i;
    jac->wrt_first.segment<3>(kVel) = -c.b * u;
    jac->wrt_second.segment<3>(kRot) = u * d_rot_j;
    jac->wrt_second.segment<3>(kPos) = u;
    jac->wrt_second.segment<3>(kVel) = -c.a * u;
  }
  return norm - m.range;
}

/// Gating thresholds applied when a bundle is formed.
struct GateConfig {
  double innovation = 1.0;  ///< max |measured - predicted| in meters
  double max_rate = 10.0;   ///< max range rate between samples of one pair, m/s
};

enum class RejectReason { kGate, kRate, kUnknownId };

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kGate: return "gate";
    case RejectReason::kRate: return "rate";
    case RejectReason::kUnknownId: return "unknown-id";
  }
  return "unknown";
}

struct Rejection {
  RangeRecord record;
  RejectReason reason;
};

struct RangeBundle {
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<UwbMeasurement> measurements;
  std::vector<Rejection> rejected;
};

/// Resolves anchor and node ids to positions.
struct RangingLayout {
  std::map<int, Vec3> anchors;
  std::map<int, Vec3> nodes;
};

/// Groups the records in (t_begin, t_end] into a bundle and drops suspected
/// outliers. Owns the per-pair history used by the rate check, so one
/// instance must see intervals in order.
class RangeBundler {
 public:
  explicit RangeBundler(RangingLayout layout, GateConfig gates = {})
      : layout_(std::move(layout)), gates_(gates) {}

  /// The predicted states span the interval and supply the expected range
  /// for the innovation gate.
  RangeBundle bundle(const std::vector<RangeRecord>& records, double t_begin, double t_end,
                     const StateNode& predicted_begin, const StateNode& predicted_end) {
    RangeBundle out;
    out.t_begin = t_begin;
    out.t_end = t_end;
    const double interval = t_end - t_begin;
    for (const RangeRecord& rec : records) {
      if (!(rec.t > t_begin && rec.t <= t_end)) continue;
      auto anchor = layout_.anchors.find(rec.anchor_id);
      auto node = layout_.nodes.find(rec.node_id);
      if (anchor == layout_.anchors.end() || node == layout_.nodes.end()) {
        out.rejected.push_back({rec, RejectReason::kUnknownId});
        continue;
      }
      UwbMeasurement m;
      m.range = rec.range;
      m.anchor = anchor->second;
      m.node_offset = node->second;
      m.offset = std::min(std::max(rec.t - t_begin, 0.0), interval);
      m.interval = interval;
      m.anchor_id = rec.anchor_id;
      m.node_id = rec.node_id;
      m.t = rec.t;

      const double predicted = displacement(predicted_begin, predicted_end, m).norm();
      if (std::abs(rec.range - predicted) > gates_.innovation) {
        out.rejected.push_back({rec, RejectReason::kGate});
        continue;
      }
      const auto key = std::make_pair(rec.anchor_id, rec.node_id);
      auto last = history_.find(key);
      if (last != history_.end() && rec.t > last->second.first) {
        const double rate = std::abs(rec.range - last->second.second) / (rec.t - last->second.first);
        if (rate > gates_.max_rate) {
          out.rejected.push_back({rec, RejectReason::kRate});
          continue;
        }
      }
      history_[key] = {rec.t, rec.range};
      out.measurements.push_back(m);
    }
    return out;
  }

  const GateConfig& gates() const { return gates_; }

 private:
  RangingLayout layout_;
  GateConfig gates_;
  std::map<std::pair<int, int>, std::pair<double, double>> history_;
};

/// Free-function form over a fresh bundler, for one-off use.
inline RangeBundle bundle_ranges(const std::vector<RangeRecord>& records, double t_begin,
                                 double t_end, const StateNode& predicted_begin,
                                 const StateNode& predicted_end, const RangingLayout& layout,
                                 GateConfig gates = {}) {
  RangeBundler bundler(layout, gates);
  return bundler.bundle(records, t_begin, t_end, predicted_begin, predicted_end);
}

}  // namespace liro::uwb

#endif  // LIRO_UWB_HPP
