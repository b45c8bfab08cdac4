#ifndef LIRO_KDTREE_HPP
#define LIRO_KDTREE_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace liro {

/// Static 3-d tree over a point list, built once, queried many times.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    index_.resize(points_.size());
    std::iota(index_.begin(), index_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
  }

  const std::vector<Eigen::Vector3d>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Up to k nearest points within max_dist, ordered by distance. Returns
  /// (index, squared distance) pairs.
  std::vector<std::pair<std::uint32_t, double>> knn(const Eigen::Vector3d& query, std::size_t k,
                                                    double max_dist) const {
    std::vector<std::pair<std::uint32_t, double>> best;
    if (nodes_.empty() || k == 0) return best;
    best.reserve(k + 1);
    double bound = max_dist * max_dist;
    search(0, query, k, bound, best);
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = points_[index_[begin]], hi = lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[index_[i]]);
      hi = hi.cwiseMax(points_[index_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = points_[index_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::int32_t id, const Eigen::Vector3d& q, std::size_t k, double& bound,
              std::vector<std::pair<std::uint32_t, double>>& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = index_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 > bound) continue;
        // Ties break on index so results do not depend on traversal order.
        auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(idx, d2),
                                    [](const auto& a, const auto& b) {
                                      return a.second < b.second ||
                                             (a.second == b.second && a.first < b.first);
                                    });
        best.insert(pos, {idx, d2});
        if (best.size() > k) best.pop_back();
        if (best.size() == k) bound = best.back().second;
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::int32_t near = diff < 0.0 ? n.left : n.right;
    const std::int32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, k, bound, best);
    if (diff * diff <= bound) search(far, q, k, bound, best);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> index_;
  std::vector<Node> nodes_;
};

}  // namespace liro

#endif  // LIRO_KDTREE_HPP
