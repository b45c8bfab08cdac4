#ifndef LIRO_LIDAR_HPP
#define LIRO_LIDAR_HPP

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "liro/error.hpp"
#include "liro/geometry.hpp"
#include "liro/kdtree.hpp"
#include "liro/state.hpp"

namespace liro::lidar {

/// Rigid transform taking body coordinates to a parent frame.
struct Pose {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 p = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return q * x + p; }
  Pose inverse() const {
    Pose out;
    out.q = q.conjugate();
    out.p = -(out.q * p);
    return out;
  }
  Pose operator*(const Pose& o) const {
    Pose out;
    out.q = (q * o.q).normalized();
    out.p = q * o.p + p;
    return out;
  }
  static Pose of(const StateNode& x) { return {x.q, x.p}; }
};

/// Pre-labeled features of one scan in the body frame at scan time.
struct FeatureCloud {
  double t = 0.0;
  std::vector<Vec3> planes;
  std::vector<Vec3> edges;
};

struct MapConfig {
  double voxel_leaf = 0.2;
};

/// Plane and edge maps in the body frame of the window head.
struct LocalMap {
  KdTree planes;
  KdTree edges;
};

/// Keeps, per voxel, the point closest to the voxel centroid. Surviving points
/// are original samples, so they stay on the surface they were taken from.
inline std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& points, double leaf) {
  if (leaf <= 0.0 || points.empty()) return points;
  struct Keyed {
    std::array<long long, 3> key;
    std::uint32_t index;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(points.size());
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    keyed.push_back({{static_cast<long long>(std::floor(p.x() / leaf)),
                      static_cast<long long>(std::floor(p.y() / leaf)),
                      static_cast<long long>(std::floor(p.z() / leaf))},
                     i});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return a.key < b.key || (a.key == b.key && a.index < b.index);
  });
  std::vector<Vec3> out;
  for (std::size_t begin = 0; begin < keyed.size();) {
    std::size_t end = begin;
    Vec3 centroid = Vec3::Zero();
    while (end < keyed.size() && keyed[end].key == keyed[begin].key) {
      centroid += points[keyed[end].index];
      ++end;
    }
    centroid /= static_cast<double>(end - begin);
    std::uint32_t pick = keyed[begin].index;
    double best = (points[pick] - centroid).squaredNorm();
    for (std::size_t i = begin + 1; i < end; ++i) {
      const double d = (points[keyed[i].index] - centroid).squaredNorm();
      if (d < best) {
        best = d;
        pick = keyed[i].index;
      }
    }
    out.push_back(points[pick]);
    begin = end;
  }
  return out;
}

/// Merges clouds into the body frame of the first one. transforms[i] is the
/// world pose of the body when clouds[i] was taken.
inline LocalMap build_local_map(std::span<const FeatureCloud> clouds, std::span<const Pose> transforms,
                                const MapConfig& config = {}) {
  if (clouds.size() != transforms.size()) {
    throw Error(ErrorKind::kValidation, "cloud and transform lists differ in length");
  }
  if (clouds.empty()) return {};
  const Pose head_inv = transforms.front().inverse();
  std::vector<Vec3> planes, edges;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Pose rel = head_inv * transforms[i];
    for (const Vec3& x : clouds[i].planes) planes.push_back(rel.apply(x));
    for (const Vec3& x : clouds[i].edges) edges.push_back(rel.apply(x));
  }
  LocalMap map;
  map.planes = KdTree(voxel_downsample(planes, config.voxel_leaf));
  map.edges = KdTree(voxel_downsample(edges, config.voxel_leaf));
  return map;
}

/// Feature point f with weighted normal n and offset c. The residual
/// n . f_w + c measures the weighted distance of f to its plane in the window
/// head frame.
struct LidarCoefficient {
  Vec3 f = Vec3::Zero();
  Vec3 n = Vec3::Zero();
  double c = 0.0;
};

struct CoefficientConfig {
  int neighbors = 5;
  double search_radius = 1.0;
  double max_condition = 1e6;
  /// Neighbors farther than this from the fitted plane reject the fit.
  double plane_tolerance = 0.1;
  /// Largest scatter eigenvalue must exceed this multiple of the middle one.
  double edge_eigen_ratio = 3.0;
};

namespace detail {

inline bool plane_coefficient(const Vec3& f, const Vec3& fw, const KdTree& map,
                              const CoefficientConfig& cfg, LidarCoefficient& out) {
  const auto nn = map.knn(fw, cfg.neighbors, cfg.search_radius);
  if (static_cast<int>(nn.size()) < cfg.neighbors) return false;
  Eigen::MatrixXd a(nn.size(), 3);
  for (std::size_t i = 0; i < nn.size(); ++i) a.row(i) = map.points()[nn[i].first].transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 0.0 || sv(0) / sv(2) > cfg.max_condition) return false;
  const Vec3 n = svd.solve(-Eigen::VectorXd::Ones(nn.size()));
  const double norm = n.norm();
  if (!(norm > 0.0) || !n.allFinite()) return false;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (std::abs(n.dot(a.row(i).transpose()) + 1.0) / norm > cfg.plane_tolerance) return false;
  }
  const double fw_norm = fw.norm();
  if (fw_norm <= 0.0) return false;
  const double g = (1.0 / norm) * (1.0 - 0.9 * std::abs(n.dot(fw) + 1.0) / (norm * fw_norm));
  if (g <= 0.0) return false;
  out = {f, g * n, g};
  return true;
}

inline bool edge_coefficients(const Vec3& f, const Vec3& fw, const KdTree& map,
                              const CoefficientConfig& cfg, LidarCoefficient& out1,
                              LidarCoefficient& out2) {
  const auto nn = map.knn(fw, cfg.neighbors, cfg.search_radius);
  if (static_cast<int>(nn.size()) < cfg.neighbors) return false;
  Vec3 centroid = Vec3::Zero();
  for (const auto& [idx, d2] : nn) centroid += map.points()[idx];
  centroid /= static_cast<double>(nn.size());
  Mat3 scatter = Mat3::Zero();
  for (const auto& [idx, d2] : nn) {
    const Vec3 d = map.points()[idx] - centroid;
    scatter += d * d.transpose();
  }
  scatter /= static_cast<double>(nn.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  if (!(lambda(2) > cfg.edge_eigen_ratio * lambda(1))) return false;
  const Vec3 vmax = eig.eigenvectors().col(2);

  const Vec3 x0 = fw;
  const Vec3 x1 = centroid + 0.1 * vmax;
  const Vec3 x2 = centroid - 0.1 * vmax;
  const Vec3 x01 = x0 - x1;
  const Vec3 x02 = x0 - x2;
  const Vec3 x12 = x1 - x2;
  const Vec3 x10 = -x01;

  Vec3 n1 = x12.cross(x10.cross(x02));
  if (n1.norm() < 1e-12 * std::max(1.0, x12.squaredNorm() * x01.norm())) {
    // f lies on the line: any direction orthogonal to it spans the same pair.
    n1 = vmax.unitOrthogonal();
  } else {
    n1.normalize();
  }
  const Vec3 n2 = x12.cross(n1);
  const Vec3 f_perp = fw - n1 * n1.dot(x01);
  const double c1 = -n1.dot(f_perp);
  const double c2 = -n2.dot(f_perp);
  const double g = 0.5 * (1.0 - 0.9 * x01.cross(x02).norm() / x12.norm());
  if (g <= 0.0) return false;
  out1 = {f, g * n1, g * c1};
  out2 = {f, g * n2, g * c2};
  return true;
}

}  // namespace detail

/// Associates every feature of `cloud` with the local map and returns the
/// plane coefficients followed by edge coefficient pairs, in input order.
/// `relative` maps the cloud's body frame into the map frame.
inline std::vector<LidarCoefficient> compute_coefficients(const FeatureCloud& cloud,
                                                          const LocalMap& map, const Pose& relative,
                                                          const CoefficientConfig& config = {}) {
  std::vector<LidarCoefficient> out;
  out.reserve(cloud.planes.size() + 2 * cloud.edges.size());
  if (!map.planes.empty()) {
    for (const Vec3& f : cloud.planes) {
      LidarCoefficient c;
      if (detail::plane_coefficient(f, relative.apply(f), map.planes, config, c)) out.push_back(c);
    }
  }
  if (!map.edges.empty()) {
    for (const Vec3& f : cloud.edges) {
      LidarCoefficient c1, c2;
      if (detail::edge_coefficients(f, relative.apply(f), map.edges, config, c1, c2)) {
        out.push_back(c1);
        out.push_back(c2);
      }
    }
  }
  return out;
}

struct LidarJacobians {
  Eigen::Matrix<double, 1, kStateDim> wrt_head;
  Eigen::Matrix<double, 1, kStateDim> wrt_scan;
};

/// r = n^T R_w^T (R_m f + p_m - p_w) + c, unweighted.
inline double lidar_residual(const StateNode& head, const StateNode& scan, const LidarCoefficient& l,
                             LidarJacobians* jac = nullptr) {
  using geometry::skew;
  const Mat3 rw_t = head.rotation().transpose();
  const Mat3 rm = scan.rotation();
  const Vec3 world = rm * l.f + scan.p - head.p;
  const Vec3 local = rw_t * world;
  if (jac) {
    const Eigen::RowVector3d nt = l.n.transpose();
    const Eigen::RowVector3d nrw = nt * rw_t;
    jac->wrt_head.setZero();
    jac->wrt_scan.setZero();
    jac->wrt_head.segment<3>(kRot) = nt * skew(local);
    jac->wrt_head.segment<3>(kPos) = -nrw;
    jac->wrt_scan.segment<3>(kRot) = -nrw * rm * skew(l.f);
    jac->wrt_scan.segment<3>(kPos) = nrw;
  }
  return l.n.dot(local) + l.c;
}

}  // namespace liro::lidar

#endif  // LIRO_LIDAR_HPP
