#ifndef LIRO_ESTIMATOR_HPP
#define LIRO_ESTIMATOR_HPP

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include "liro/error.hpp"
#include "liro/imu_preint.hpp"
#include "liro/lidar.hpp"
#include "liro/simulator.hpp"
#include "liro/uwb.hpp"
#include "liro/window_solver.hpp"

namespace liro {

/// Standard deviations of the prior placed on the first window node.
struct InitialPrior {
  double roll_pitch = 0.02;   ///< rad
  double yaw = 0.2;           ///< rad; tightened to yaw_gauge without anchors
  double position = 0.5;      ///< m; tightened to position_gauge without anchors
  double yaw_gauge = 1e-3;
  double position_gauge = 1e-3;
  double velocity = 0.02;     ///< m/s, the run starts at rest
  double gyro_bias = 5e-3;
  double accel_bias = 0.1;
};

struct EstimatorConfig {
  std::size_t window = 10;  ///< M
  int anchors = 3;          ///< 0 (LIO), 2 or 3
  IntegrationMethod integration = IntegrationMethod::kZoh;
  ImuNoise imu_noise;
  WindowWeights weights;
  uwb::GateConfig gates;
  lidar::MapConfig map;
  lidar::CoefficientConfig coefficients;
  /// Per-cloud feature budget for the Lidar factors; the map uses all points.
  int max_plane_features = 16;
  int max_edge_features = 2;
  int association_rounds = 2;
  SolverConfig solver;
  double init_duration = 0.5;  ///< static span used for leveling and the range fix
  InitialPrior prior;
};

struct StepTiming {
  double t = 0.0;
  double milliseconds = 0.0;
  bool full_window = false;
  std::size_t lidar_factors = 0;
  std::size_t uwb_factors = 0;
  /// Robust factors whose final whitened residual lies beyond the Huber knee.
  std::size_t huber_active = 0;
};

struct EstimatorResult {
  /// One state per node, written when it leaves the window (or at the end).
  std::vector<StateNode> trajectory;
  std::vector<SolverReport> reports;
  std::vector<StepTiming> timings;
  std::size_t ranges_used = 0;
  std::map<uwb::RejectReason, std::size_t> rejections;
  uwb::AnchorSet anchors;
};

// --- initialization helpers -------------------------------------------------------

/// Averages the inter-anchor records and places the first `count` anchors.
inline uwb::AnchorSet calibrate_from_records(const std::vector<sim::AnchorRangeRecord>& records, int count,
                                             double height, double third_anchor_side) {
  if (count < 2) return {};
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (const auto& r : records) {
    const auto key = std::minmax(r.from, r.to);
    acc[{key.first, key.second}].first += r.range;
    acc[{key.first, key.second}].second += 1;
  }
  auto mean = [&](int i, int j) -> std::optional<double> {
    auto it = acc.find({i, j});
    if (it == acc.end() || it->second.second == 0) return std::nullopt;
    return it->second.first / it->second.second;
  };
  const auto d01 = mean(0, 1);
  if (!d01) throw Error(ErrorKind::kCalibration, "no ranging between anchors 0 and 1");
  if (count == 2) return uwb::calibrate_anchors(*d01, std::nullopt, std::nullopt, height, third_anchor_side);
  const auto d02 = mean(0, 2), d12 = mean(1, 2);
  if (!d02 || !d12) throw Error(ErrorKind::kCalibration, "no ranging to anchor 2");
  return uwb::calibrate_anchors(*d01, d02, d12, height, third_anchor_side);
}

inline double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

inline Mat3 rot_z(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

/// Roll and pitch (zero yaw) that align the mean specific force with +z, and
/// the mean gyro reading, over a static span.
struct Leveling {
  Mat3 attitude = Mat3::Identity();
  Vec3 gyro_bias = Vec3::Zero();
};

inline Leveling level_from_imu(const std::vector<ImuSample>& imu, double t0, double t1) {
  Vec3 accel = Vec3::Zero(), gyro = Vec3::Zero();
  int n = 0;
  for (const auto& s : imu) {
    if (s.t < t0 || s.t > t1) continue;
    accel += s.accel;
    gyro += s.gyro;
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::kValidation, "no IMU samples in the leveling span");
  accel /= n;
  gyro /= n;
  const Mat3 r = Eigen::Quaterniond::FromTwoVectors(accel, Vec3::UnitZ()).toRotationMatrix();
  return {rot_z(-yaw_of(r)) * r, gyro};
}

/// Position and yaw of a leveled body from ranges taken while static. Range
/// geometry leaves mirror images (about the anchor plane, and for two anchors
/// about their baseline); the body is assumed to start below the anchors and,
/// with two anchors, on the side where the third anchor would be.
inline std::pair<Vec3, double> initial_pose_from_ranges(const std::vector<uwb::RangeRecord>& records,
                                                        const uwb::AnchorSet& anchors,
                                                        const std::vector<Vec3>& nodes, const Mat3& level,
                                                        double third_anchor_side) {
  struct Obs {
    Vec3 anchor, node;
    double range;
  };
  std::vector<Obs> obs;
  for (const auto& r : records) {
    if (r.anchor_id < 0 || r.anchor_id >= static_cast<int>(anchors.size())) continue;
    if (r.node_id < 0 || r.node_id >= static_cast<int>(nodes.size())) continue;
    obs.push_back({anchors.positions[r.anchor_id], level * nodes[r.node_id], r.range});
  }
  if (obs.size() < 4) throw Error(ErrorKind::kValidation, "too few ranges to initialize");

  auto cost = [&](const Vec3& p, double yaw) {
    const Mat3 rz = rot_z(yaw);
    double c = 0.0;
    for (const auto& o : obs) {
      const double e = (p + rz * o.node - o.anchor).norm() - o.range;
      c += e * e;
    }
    return c;
  };
  auto refine = [&](Vec3 p, double yaw) {
    for (int it = 0; it < 30; ++it) {
      Eigen::Matrix4d h = Eigen::Matrix4d::Identity() * 1e-9;
      Eigen::Vector4d g = Eigen::Vector4d::Zero();
      const Mat3 rz = rot_z(yaw);
      const Mat3 drz = geometry::skew(Vec3::UnitZ()) * rz;
      for (const auto& o : obs) {
        const Vec3 d = p + rz * o.node - o.anchor;
        const double n = d.norm();
        if (n < 1e-9) continue;
        const Vec3 u = d / n;
        Eigen::Vector4d j;
        j << u, u.dot(drz * o.node);
        h += j * j.transpose();
        g += j * (n - o.range);
      }
      const Eigen::Vector4d step = -h.ldlt().solve(g);
      p += step.head<3>();
      yaw += step(3);
      if (step.norm() < 1e-10) break;
    }
    return std::make_pair(p, std::remainder(yaw, 2.0 * std::numbers::pi));
  };

  Vec3 lo = anchors.positions.front(), hi = lo;
  for (const Vec3& a : anchors.positions) {
    lo = lo.cwiseMin(a);
    hi = hi.cwiseMax(a);
  }
  lo -= Vec3(20, 20, 0);
  hi += Vec3(20, 20, 0);
  struct Candidate {
    Vec3 p;
    double yaw, cost;
  };
  std::vector<Candidate> found;
  for (double x = lo.x(); x <= hi.x(); x += 5.0) {
    for (double y = lo.y(); y <= hi.y(); y += 5.0) {
      for (double z : {anchors.height - 2.0, anchors.height + 2.0}) {
        for (int k = 0; k < 4; ++k) {
          const double yaw = k * std::numbers::pi / 2.0;
          if (cost(Vec3(x, y, z), yaw) > 25.0 * obs.size()) continue;
          auto [p, yw] = refine(Vec3(x, y, z), yaw);
          found.push_back({p, yw, cost(p, yw)});
        }
      }
    }
  }
  if (found.empty()) throw Error(ErrorKind::kValidation, "range initialization found no candidate");
  double best = found.front().cost;
  for (const auto& c : found) best = std::min(best, c.cost);
  const double accept = best + std::max(1e-6, 0.05 * best) + 1e-3 * obs.size();
  const bool two = anchors.size() < 3;
  auto preference = [&](const Candidate& c) {
    int score = 0;
    if (c.p.z() <= anchors.height) score += 2;
    if (two && c.p.y() * third_anchor_side >= 0.0) score += 1;
    return score;
  };
  const Candidate* pick = nullptr;
  for (const auto& c : found) {
    if (c.cost > accept) continue;
    if (!pick || preference(c) > preference(*pick) ||
        (preference(c) == preference(*pick) && c.cost < pick->cost)) {
      pick = &c;
    }
  }
  return {pick->p, pick->yaw};
}

// --- the pipeline ---------------------------------------------------------------------

/// Evenly spaced subset of at most n points, keeping input order.
inline std::vector<Vec3> stride_subset(const std::vector<Vec3>& in, int n) {
  if (n <= 0) return {};
  if (static_cast<int>(in.size()) <= n) return in;
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(in[(static_cast<std::size_t>(i) * in.size()) / n]);
  return out;
}

/// Rebuilds the local map from the first nodes' clouds at the current
/// estimates and re-associates every later node's features against it.
inline void associate(SlidingWindow& w, const EstimatorConfig& cfg) {
  const std::size_t n = w.nodes.size();
  for (auto& c : w.coefficients) c.clear();
  if (n < 2) return;
  std::vector<lidar::FeatureCloud> clouds(w.clouds.begin(), w.clouds.begin() + (n - 1));
  std::vector<lidar::Pose> poses;
  for (std::size_t i = 0; i + 1 < n; ++i) poses.push_back(lidar::Pose::of(w.nodes[i]));
  const lidar::LocalMap map = lidar::build_local_map(clouds, poses, cfg.map);
  const lidar::Pose head_inv = lidar::Pose::of(w.nodes.front()).inverse();
  for (std::size_t m = 1; m < n; ++m) {
    lidar::FeatureCloud subset;
    subset.t = w.clouds[m].t;
    subset.planes = stride_subset(w.clouds[m].planes, cfg.max_plane_features);
    subset.edges = stride_subset(w.clouds[m].edges, cfg.max_edge_features);
    w.coefficients[m] = lidar::compute_coefficients(subset, map, head_inv * lidar::Pose::of(w.nodes[m]), cfg.coefficients);
  }
}

class Estimator {
 public:
  Estimator(EstimatorConfig cfg, const sim::Dataset& data) : cfg_(std::move(cfg)), data_(data) {
    if (cfg_.anchors != 0 && cfg_.anchors != 2 && cfg_.anchors != 3) {
      throw Error(ErrorKind::kValidation, "anchor count must be 0, 2 or 3");
    }
    if (cfg_.window < 1) throw Error(ErrorKind::kValidation, "window size must be at least 1");
    if (data_.clouds.size() < 2) throw Error(ErrorKind::kValidation, "dataset has fewer than two clouds");
    if (cfg_.anchors > 0 && data_.anchor_ranging.empty()) {
      throw Error(ErrorKind::kCalibration, "dataset has no anchor ranging records");
    }
    if (cfg_.anchors > 0) {
      anchors_ = calibrate_from_records(data_.anchor_ranging, cfg_.anchors, data_.world.anchor_height(),
                                        data_.world.third_anchor_side);
      for (int i = 0; i < cfg_.anchors; ++i) layout_.anchors[i] = anchors_.positions[i];
      for (std::size_t i = 0; i < data_.world.nodes.size(); ++i) layout_.nodes[int(i)] = data_.world.nodes[i];
      for (const auto& r : data_.ranges) {
        if (r.anchor_id < cfg_.anchors) ranges_.push_back(r);
      }
    }
    window_.size_m = cfg_.window;
  }

  EstimatorResult run() {
    EstimatorResult result;
    result.anchors = anchors_;
    uwb::RangeBundler bundler(layout_, cfg_.gates);
    window_.push(initial_state(), data_.clouds.front());
    FactorList factors;
    for (std::size_t k = 1; k < data_.clouds.size(); ++k) {
      const auto start = std::chrono::steady_clock::now();
      const double t0 = window_.nodes.back().t, t1 = data_.clouds[k].t;
      const StateNode& last = window_.nodes.back();
      auto preint = std::make_shared<ImuPreintegration>(
          preintegrate(slice_imu(data_.imu, t0, t1), last.bg, last.ba, cfg_.imu_noise, cfg_.integration));
      StateNode predicted = predict_state(last, *preint, cfg_.weights.gravity);
      predicted.t = t1;
      uwb::RangeBundle bundle;
      if (cfg_.anchors > 0) {
        bundle = bundler.bundle(ranges_, t0, t1, last, predicted);
        result.ranges_used += bundle.measurements.size();
        for (const auto& r : bundle.rejected) result.rejections[r.reason] += 1;
      }
      const bool full = window_.full();
      if (full) result.trajectory.push_back(window_.nodes.front());
      slide(window_, factors, predicted, std::move(preint), std::move(bundle), data_.clouds[k]);
      factors = optimize_window(result);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      result.timings.push_back(census(factors, {t1, ms, window_.full()}));
    }
    for (const StateNode& x : window_.nodes) result.trajectory.push_back(x);
    return result;
  }

  const uwb::AnchorSet& anchors() const { return anchors_; }
  const SlidingWindow& window() const { return window_; }

 private:
  StateNode initial_state() {
    const double t0 = data_.clouds.front().t;
    const Leveling lv = level_from_imu(data_.imu, t0, t0 + cfg_.init_duration);
    StateNode x;
    x.t = t0;
    x.bg = lv.gyro_bias;
    Mat3 r = lv.attitude;
    const InitialPrior& pr = cfg_.prior;
    double sigma_yaw = pr.yaw_gauge, sigma_p = pr.position_gauge;
    if (cfg_.anchors > 0) {
      std::vector<uwb::RangeRecord> early;
      for (const auto& rec : ranges_) {
        if (rec.t >= t0 && rec.t <= t0 + cfg_.init_duration) early.push_back(rec);
      }
      const auto [p, yaw] =
          initial_pose_from_ranges(early, anchors_, data_.world.nodes, lv.attitude, data_.world.third_anchor_side);
      x.p = p;
      r = rot_z(yaw) * lv.attitude;
      sigma_yaw = pr.yaw;
      sigma_p = pr.position;
    }
    x.q = Eigen::Quaterniond(r).normalized();

    StateVector sigma;
    sigma << pr.roll_pitch, pr.roll_pitch, sigma_yaw, Vec3::Constant(sigma_p), Vec3::Constant(pr.velocity),
        Vec3::Constant(pr.gyro_bias), Vec3::Constant(pr.accel_bias);
    // The rotation prior acts on the body-frame tangent; yaw is about world z,
    // so express the diagonal world-frame weight in body axes.
    StateMatrix info = StateMatrix(sigma.cwiseInverse().asDiagonal());
    info.block<3, 3>(kRot, kRot) = sigma.head<3>().cwiseInverse().asDiagonal() * r;
    window_.prior = LinearFactor::unary(0, x, info);
    return x;
  }

  /// Counts the factors of the final solve, outside the timed step.
  StepTiming census(const FactorList& factors, StepTiming step) const {
    std::map<NodeId, const StateNode*> by_id;
    for (std::size_t i = 0; i < window_.nodes.size(); ++i) by_id[window_.ids[i]] = &window_.nodes[i];
    Eigen::VectorXd r;
    for (const auto& f : factors) {
      if (f->family() == FactorFamily::kLidar) ++step.lidar_factors;
      if (f->family() == FactorFamily::kUwb) ++step.uwb_factors;
      if (f->huber() <= 0.0) continue;
      std::vector<const StateNode*> states;
      for (NodeId id : f->nodes()) states.push_back(by_id.at(id));
      f->evaluate(states, r, nullptr);
      if (r.norm() > f->huber()) ++step.huber_active;
    }
    return step;
  }

  FactorList optimize_window(EstimatorResult& result) {
    FactorList factors;
    const int rounds = std::max(1, cfg_.association_rounds);
    for (int round = 0; round < rounds; ++round) {
      associate(window_, cfg_);
      factors = assemble_cost(window_, static_cast<std::size_t>(cfg_.anchors), cfg_.weights);
      std::vector<StateNode> states = window_.state_vector();
      result.reports.push_back(optimize(states, window_.id_vector(), factors, cfg_.solver));
      window_.set_states(states);
    }
    return factors;
  }

  EstimatorConfig cfg_;
  const sim::Dataset& data_;
  uwb::AnchorSet anchors_;
  uwb::RangingLayout layout_;
  std::vector<uwb::RangeRecord> ranges_;
  SlidingWindow window_;
};

inline EstimatorResult run_estimator(const EstimatorConfig& cfg, const sim::Dataset& data) {
  return Estimator(cfg, data).run();
}

}  // namespace liro

#endif  // LIRO_ESTIMATOR_HPP
