#ifndef LIRO_SIMULATOR_HPP
#define LIRO_SIMULATOR_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "liro/error.hpp"
#include "liro/imu_preint.hpp"
#include "liro/lidar.hpp"
#include "liro/state.hpp"
#include "liro/uwb.hpp"

namespace liro::sim {

/// Rectangle corner + s e1 + t e2, s, t in [0, 1]; it faces along e1 x e2.
struct Rect {
  Vec3 corner = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();

  Vec3 normal() const { return e1.cross(e2).normalized(); }
  double area() const { return e1.cross(e2).norm(); }
  /// Distance from x to the infinite plane through the rectangle.
  double distance(const Vec3& x) const { return std::abs(normal().dot(x - corner)); }
};

struct Segment {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();

  double length() const { return (b - a).norm(); }
  double distance(const Vec3& x) const {
    const Vec3 d = (b - a).normalized();
    const Vec3 r = x - a;
    return (r - d * d.dot(r)).norm();
  }
};

struct WorldModel {
  std::vector<Rect> planes;
  std::vector<Segment> edges;
  Vec3 gravity = kDefaultGravity;
  /// Ground-truth anchor positions, all at one height.
  std::vector<Vec3> anchors;
  /// Ranging node offsets in the body frame, indexed by node id.
  std::vector<Vec3> nodes;
  /// Side of the x axis (sign of y) holding anchor 2.
  double third_anchor_side = -1.0;

  double anchor_height() const { return anchors.empty() ? 0.0 : anchors.front().z(); }
};

/// Four nodes on the corners of a 0.75 m x 0.55 m rectangle around the body
/// center.
inline std::vector<Vec3> default_node_offsets() {
  return {{0.375, 0.275, 0.0}, {0.375, -0.275, 0.0}, {-0.375, -0.275, 0.0}, {-0.375, 0.275, 0.0}};
}

/// A closed box hall, 100 m x 28 m x 6 m. Away from its end walls only the
/// floor and the two long walls are within Lidar range, which leaves travel
/// along x unobserved by scan matching.
inline WorldModel default_world() {
  WorldModel w;
  const double x0 = -25.0, x1 = 75.0, y0 = -20.0, y1 = 8.0, h = 6.0;
  const Vec3 lx(x1 - x0, 0, 0), ly(0, y1 - y0, 0), lz(0, 0, h);
  w.planes = {
      {{x0, y0, 0}, lx, ly},  // floor, facing up
      {{x0, y1, 0}, lx, lz},  // north wall, facing -y
      {{x0, y0, 0}, lz, lx},  // south wall, facing +y
      {{x0, y0, 0}, ly, lz},  // west wall, facing +x
      {{x1, y0, 0}, lz, ly},  // east wall, facing -x
  };
  for (double x : {x0, x1}) {
    for (double y : {y0, y1}) w.edges.push_back({{x, y, 0}, {x, y, h}});
  }
  w.edges.push_back({{x0, y1, h}, {x1, y1, h}});
  w.edges.push_back({{x0, y0, h}, {x1, y0, h}});
  w.edges.push_back({{x0, y0, 0}, {x0, y1, 0}});
  w.edges.push_back({{x1, y0, 0}, {x1, y1, 0}});
  w.anchors = {{0.0, 0.0, 2.0}, {50.0, 0.0, 2.0}, {45.0, -12.0, 2.0}};
  w.nodes = default_node_offsets();
  return w;
}

struct Sinusoid {
  double amplitude = 0.0;
  double frequency = 0.0;  ///< Hz
  double phase = 0.0;      ///< rad
};

/// One scalar channel: offset + rate t + sum of sinusoids, blended in from
/// its t = 0 value by the motion envelope.
struct Channel {
  double offset = 0.0;
  double rate = 0.0;
  std::vector<Sinusoid> terms;
};

struct TrajectorySpec {
  Channel x, y, z;
  Channel yaw, pitch, roll;  ///< ZYX Euler angles
  double static_time = 1.0;  ///< held at rest before motion starts
  double ramp_time = 3.0;    ///< smooth blend into full motion; 0 disables the envelope
  double duration = 60.0;
  double imu_rate = 200.0;
  double uwb_rate = 25.0;    ///< per node
  bool uwb_stagger = true;   ///< round-robin slots; otherwise all nodes range at each tick
  double cloud_rate = 10.0;
  double v_max = 5.0;
};

/// Back-and-forth pass along the hall with gentle weaving, climbing and yaw.
inline TrajectorySpec default_trajectory() {
  TrajectorySpec s;
  s.x = {25.0, 0.0, {{23.0, 1.0 / 60.0, -std::numbers::pi / 2.0}}};
  s.y = {-5.0, 0.0, {{4.0, 1.0 / 20.0, 0.0}}};
  s.z = {0.5, 0.0, {{0.3, 1.0 / 15.0, 0.0}}};
  s.yaw = {0.3, 0.0, {{0.6, 1.0 / 40.0, 0.0}}};
  s.pitch = {0.0, 0.0, {{0.03, 1.0 / 13.0, 0.0}}};
  s.roll = {0.0, 0.0, {{0.03, 1.0 / 15.0, 0.5}}};
  return s;
}

struct NoiseSpec {
  double gyro_density = 1e-3;      ///< rad/s/sqrt(Hz)
  double accel_density = 1e-2;     ///< m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-5;    ///< rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1e-4;   ///< m/s^3/sqrt(Hz)
  Vec3 gyro_bias = Vec3(2e-3, -1e-3, 1.5e-3);
  Vec3 accel_bias = Vec3(2e-2, -1.5e-2, 1e-2);
  double sigma_uwb = 0.05;
  double sigma_lidar = 0.02;
  double outlier_rate = 0.0;
  double outlier_min = 1.0;
  double outlier_max = 3.0;
  int anchor_ranging_samples = 50;

  /// Everything off: exact measurements.
  static NoiseSpec none() {
    NoiseSpec n;
    n.gyro_density = n.accel_density = n.gyro_bias_walk = n.accel_bias_walk = 0.0;
    n.gyro_bias.setZero();
    n.accel_bias.setZero();
    n.sigma_uwb = n.sigma_lidar = n.outlier_rate = 0.0;
    return n;
  }
};

struct LidarSpec {
  double range = 30.0;
  /// Point density on surfaces within near_range, per m^2 (planes) or per m
  /// (edges); it falls off as near_range / r beyond.
  double plane_density = 0.5;
  double edge_density = 2.0;
  double near_range = 5.0;
  /// Features are only taken this far inside a surface's border, the way
  /// curvature-based extraction skips points near creases and corners.
  double boundary_margin = 1.0;
};

struct SimulationSpec {
  TrajectorySpec trajectory = default_trajectory();
  NoiseSpec noise;
  LidarSpec lidar;
  WorldModel world = default_world();
  std::uint64_t seed = 1;
};

struct Kinematics {
  double t = 0.0;
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();      ///< world-frame acceleration
  Vec3 omega = Vec3::Zero();  ///< body-frame angular rate
};

namespace detail {

struct Jet {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

/// 0 before the motion starts, then 35s^4 - 84s^5 + 70s^6 - 20s^7 (C^3).
inline Jet envelope(double t, double start, double ramp) {
  if (ramp <= 0.0) return {1.0, 0.0, 0.0};
  const double s = (t - start) / ramp;
  if (s <= 0.0) return {0.0, 0.0, 0.0};
  if (s >= 1.0) return {1.0, 0.0, 0.0};
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
  return {s4 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s3),
          s3 * (140.0 - 420.0 * s + 420.0 * s2 - 140.0 * s3) / ramp,
          s2 * (420.0 - 1680.0 * s + 2100.0 * s2 - 840.0 * s3) / (ramp * ramp)};
}

inline Jet raw_channel(const Channel& c, double t) {
  Jet j{c.rate * t, c.rate, 0.0};
  for (const Sinusoid& s : c.terms) {
    const double w = 2.0 * std::numbers::pi * s.frequency;
    const double arg = w * t + s.phase;
    j.v += s.amplitude * std::sin(arg);
    j.d1 += s.amplitude * w * std::cos(arg);
    j.d2 -= s.amplitude * w * w * std::sin(arg);
  }
  return j;
}

inline Jet channel(const Channel& c, double t, const Jet& e) {
  const Jet f = raw_channel(c, t);
  const double f0 = raw_channel(c, 0.0).v;
  const double g = f.v - f0;
  return {c.offset + f0 + e.v * g, e.d1 * g + e.v * f.d1, e.d2 * g + 2.0 * e.d1 * f.d1 + e.v * f.d2};
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace detail

/// Closed-form trajectory: position and ZYX attitude with analytic rates.
class Trajectory {
 public:
  explicit Trajectory(TrajectorySpec spec) : spec_(std::move(spec)) {}

  Kinematics at(double t) const {
    using detail::channel;
    const detail::Jet e = detail::envelope(t, spec_.static_time, spec_.ramp_time);
    const detail::Jet x = channel(spec_.x, t, e), y = channel(spec_.y, t, e), z = channel(spec_.z, t, e);
    const detail::Jet psi = channel(spec_.yaw, t, e), th = channel(spec_.pitch, t, e),
                      phi = channel(spec_.roll, t, e);
    Kinematics k;
    k.t = t;
    k.p = {x.v, y.v, z.v};
    k.v = {x.d1, y.d1, z.d1};
    k.a = {x.d2, y.d2, z.d2};
    k.q = Eigen::AngleAxisd(psi.v, Vec3::UnitZ()) * Eigen::AngleAxisd(th.v, Vec3::UnitY()) *
          Eigen::AngleAxisd(phi.v, Vec3::UnitX());
    const double sf = std::sin(phi.v), cf = std::cos(phi.v), st = std::sin(th.v), ct = std::cos(th.v);
    k.omega = {phi.d1 - psi.d1 * st, th.d1 * cf + psi.d1 * sf * ct, -th.d1 * sf + psi.d1 * cf * ct};
    return k;
  }

  const TrajectorySpec& spec() const { return spec_; }

 private:
  TrajectorySpec spec_;
};

struct AnchorRangeRecord {
  int from = 0;
  int to = 0;
  double range = 0.0;
};

struct Dataset {
  std::vector<ImuSample> imu;
  std::vector<uwb::RangeRecord> ranges;
  /// True where an NLOS outlier was injected. Not written to disk.
  std::vector<bool> range_outlier;
  std::vector<lidar::FeatureCloud> clouds;
  std::vector<AnchorRangeRecord> anchor_ranging;
  /// Ground truth at every IMU sample, including the true biases.
  std::vector<StateNode> groundtruth;
  WorldModel world;
  NoiseSpec noise;
};

/// N noisy ranges per anchor pair, as anchors ranging to each other before
/// the run.
inline std::vector<AnchorRangeRecord> emit_anchor_ranging(const WorldModel& world, const NoiseSpec& noise,
                                                          std::uint64_t seed) {
  if (world.anchors.size() < 2) throw Error(ErrorKind::kValidation, "anchor ranging needs two anchors");
  std::mt19937_64 rng(detail::stream_seed(seed, 4));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<AnchorRangeRecord> out;
  for (int i = 0; i < static_cast<int>(world.anchors.size()); ++i) {
    for (int j = i + 1; j < static_cast<int>(world.anchors.size()); ++j) {
      const double d = (world.anchors[i] - world.anchors[j]).norm();
      for (int s = 0; s < noise.anchor_ranging_samples; ++s) {
        out.push_back({i, j, d + noise.sigma_uwb * n(rng)});
      }
    }
  }
  return out;
}

/// Points on the visible surfaces around a sensor at `k`, in the body frame.
inline lidar::FeatureCloud scan(const WorldModel& world, const Kinematics& k, const LidarSpec& lidar,
                                double sigma, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const Mat3 rt = k.q.toRotationMatrix().transpose();
  lidar::FeatureCloud cloud;
  cloud.t = k.t;
  auto keep = [&](const Vec3& x, Vec3& body) {
    const Vec3 ray = x - k.p;
    const double r = ray.norm();
    if (r > lidar.range || r < 1e-3) return false;
    if (u(rng) > std::min(1.0, lidar.near_range / r)) return false;
    body = rt * (x + (sigma * n(rng)) * ray / r - k.p);
    return true;
  };
  for (const Rect& plane : world.planes) {
    const Vec3 normal = plane.normal();
    if (normal.dot(k.p - plane.corner) <= 0.0) continue;
    const double m1 = lidar.boundary_margin / plane.e1.norm(), m2 = lidar.boundary_margin / plane.e2.norm();
    if (m1 >= 0.5 || m2 >= 0.5) continue;
    const int candidates = static_cast<int>(std::ceil(lidar.plane_density * plane.area()));
    for (int i = 0; i < candidates; ++i) {
      const double s1 = m1 + (1.0 - 2.0 * m1) * u(rng), s2 = m2 + (1.0 - 2.0 * m2) * u(rng);
      const Vec3 x = plane.corner + s1 * plane.e1 + s2 * plane.e2;
      Vec3 body;
      if (keep(x, body)) cloud.planes.push_back(body);
    }
  }
  for (const Segment& edge : world.edges) {
    const double m = lidar.boundary_margin / edge.length();
    if (m >= 0.5) continue;
    const int candidates = static_cast<int>(std::ceil(lidar.edge_density * edge.length()));
    for (int i = 0; i < candidates; ++i) {
      const Vec3 x = edge.a + (m + (1.0 - 2.0 * m) * u(rng)) * (edge.b - edge.a);
      Vec3 body;
      if (keep(x, body)) cloud.edges.push_back(body);
    }
  }
  return cloud;
}

/// Renders every sensor stream of one run. Each stream draws from its own
/// seeded generator, so streams are reproducible independently.
inline Dataset generate(const SimulationSpec& spec) {
  const TrajectorySpec& ts = spec.trajectory;
  const NoiseSpec& ns = spec.noise;
  const WorldModel& world = spec.world;
  if (!(ts.duration > 0.0) || !(ts.imu_rate > 0.0) || !(ts.cloud_rate > 0.0) || !(ts.uwb_rate > 0.0)) {
    throw Error(ErrorKind::kValidation, "durations and rates must be positive");
  }
  if (ns.sigma_uwb < 0.0 || ns.sigma_lidar < 0.0 || ns.gyro_density < 0.0 || ns.accel_density < 0.0 ||
      ns.gyro_bias_walk < 0.0 || ns.accel_bias_walk < 0.0 || ns.outlier_rate < 0.0 || ns.outlier_rate > 1.0) {
    throw Error(ErrorKind::kValidation, "noise levels must be non-negative");
  }
  if (world.nodes.empty()) throw Error(ErrorKind::kValidation, "no ranging nodes configured");
  const Trajectory traj(ts);

  Dataset out;
  out.world = world;
  out.noise = ns;

  // IMU and ground truth on one clock.
  {
    std::mt19937_64 rng(detail::stream_seed(spec.seed, 1));
    std::normal_distribution<double> n(0.0, 1.0);
    auto gauss = [&] { return Vec3(n(rng), n(rng), n(rng)); };
    const double dt = 1.0 / ts.imu_rate;
    const auto count = static_cast<std::int64_t>(std::llround(ts.duration * ts.imu_rate));
    Vec3 bg = ns.gyro_bias, ba = ns.accel_bias;
    for (std::int64_t i = 0; i <= count; ++i) {
      const double t = static_cast<double>(i) / ts.imu_rate;
      const Kinematics k = traj.at(t);
      if (k.v.norm() > ts.v_max) {
        throw Error(ErrorKind::kValidation, "trajectory exceeds v_max at t=" + std::to_string(t));
      }
      ImuSample s;
      s.t = t;
      s.gyro = k.omega + bg + ns.gyro_density * std::sqrt(ts.imu_rate) * gauss();
      s.accel = k.q.conjugate() * (k.a - world.gravity) + ba + ns.accel_density * std::sqrt(ts.imu_rate) * gauss();
      out.imu.push_back(s);
      StateNode g;
      g.t = t;
      g.q = k.q;
      g.p = k.p;
      g.v = k.v;
      g.bg = bg;
      g.ba = ba;
      out.groundtruth.push_back(g);
      bg += ns.gyro_bias_walk * std::sqrt(dt) * gauss();
      ba += ns.accel_bias_walk * std::sqrt(dt) * gauss();
    }
  }

  // Ranges: in staggered mode one (node, anchor) pair per slot, round-robin;
  // otherwise every node ranges once per tick.
  if (!world.anchors.empty()) {
    std::mt19937_64 rng(detail::stream_seed(spec.seed, 2));
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int nodes = static_cast<int>(world.nodes.size());
    const int anchors = static_cast<int>(world.anchors.size());
    auto emit = [&](double t, int node, int anchor) {
      const Kinematics k = traj.at(t);
      double range = (k.p + k.q * world.nodes[node] - world.anchors[anchor]).norm() + ns.sigma_uwb * n(rng);
      const bool outlier = u(rng) < ns.outlier_rate;
      const double extra = ns.outlier_min + (ns.outlier_max - ns.outlier_min) * u(rng);
      if (outlier) range += extra;
      out.ranges.push_back({t, anchor, node, range});
      out.range_outlier.push_back(outlier);
    };
    if (ts.uwb_stagger) {
      const double slot_rate = ts.uwb_rate * nodes;
      const auto slots = static_cast<std::int64_t>(std::floor(ts.duration * slot_rate + 1e-9));
      for (std::int64_t j = 1; j <= slots; ++j) {
        const int node = static_cast<int>(j % nodes);
        const int anchor = static_cast<int>((j / nodes) % anchors);
        emit(static_cast<double>(j) / slot_rate, node, anchor);
      }
    } else {
      const auto ticks = static_cast<std::int64_t>(std::floor(ts.duration * ts.uwb_rate + 1e-9));
      for (std::int64_t j = 1; j <= ticks; ++j) {
        for (int node = 0; node < nodes; ++node) {
          emit(static_cast<double>(j) / ts.uwb_rate, node, static_cast<int>((j + node) % anchors));
        }
      }
    }
  }

  // Feature clouds at the cloud rate, timestamps on the cloud clock.
  {
    std::mt19937_64 rng(detail::stream_seed(spec.seed, 3));
    const auto count = static_cast<std::int64_t>(std::floor(ts.duration * ts.cloud_rate + 1e-9));
    for (std::int64_t i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / ts.cloud_rate;
      out.clouds.push_back(scan(world, traj.at(t), spec.lidar, ns.sigma_lidar, rng));
    }
  }

  if (world.anchors.size() >= 2) out.anchor_ranging = emit_anchor_ranging(world, ns, spec.seed);
  return out;
}

/// Ground-truth state at time t from a sampled trajectory; exact on samples.
inline StateNode truth_at(const std::vector<StateNode>& gt, double t, double tolerance = 1e-6) {
  auto it = std::lower_bound(gt.begin(), gt.end(), t, [](const StateNode& s, double v) { return s.t < v; });
  if (it != gt.end() && std::abs(it->t - t) <= tolerance) return *it;
  if (it != gt.begin() && std::abs((it - 1)->t - t) <= tolerance) return *(it - 1);
  throw Error(ErrorKind::kValidation, "no ground-truth sample at t=" + std::to_string(t));
}

}  // namespace liro::sim

#endif  // LIRO_SIMULATOR_HPP
