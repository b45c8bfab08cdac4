#ifndef LIRO_WINDOW_SOLVER_HPP
#define LIRO_WINDOW_SOLVER_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "liro/error.hpp"
#include "liro/geometry.hpp"
#include "liro/imu_preint.hpp"
#include "liro/lidar.hpp"
#include "liro/state.hpp"
#include "liro/uwb.hpp"

namespace liro {

using NodeId = std::uint64_t;

enum class FactorFamily : int { kImu = 0, kUwb = 1, kLidar = 2, kPrior = 3 };
inline constexpr int kFamilyCount = 4;

inline const char* to_string(FactorFamily f) {
  switch (f) {
    case FactorFamily::kImu: return "imu";
    case FactorFamily::kUwb: return "uwb";
    case FactorFamily::kLidar: return "lidar";
    case FactorFamily::kPrior: return "prior";
  }
  return "unknown";
}

/// A whitened residual block over one or more window nodes.
class Factor {
 public:
  Factor(FactorFamily family, std::vector<NodeId> nodes, double huber = 0.0)
      : family_(family), nodes_(std::move(nodes)), huber_(huber) {}
  virtual ~Factor() = default;

  FactorFamily family() const { return family_; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  /// Huber threshold on the whitened residual norm; 0 means plain squares.
  double huber() const { return huber_; }

  virtual int dimension() const = 0;

  /// Whitened residual. Each requested Jacobian is dimension() x kStateDim,
  /// one per node in nodes() order, w.r.t. the boxplus tangent.
  virtual void evaluate(std::span<const StateNode* const> states, Eigen::VectorXd& residual,
                        std::vector<Eigen::MatrixXd>* jacobians) const = 0;

 private:
  FactorFamily family_;
  std::vector<NodeId> nodes_;
  double huber_;
};

using FactorPtr = std::shared_ptr<const Factor>;
using FactorList = std::vector<FactorPtr>;

class ImuFactor final : public Factor {
 public:
  ImuFactor(NodeId i, NodeId j, std::shared_ptr<const ImuPreintegration> preint, Vec3 gravity)
      : Factor(FactorFamily::kImu, {i, j}),
        preint_(std::move(preint)),
        gravity_(gravity),
        sqrt_info_(preint_->sqrt_information()) {}

  int dimension() const override { return kStateDim; }

  void evaluate(std::span<const StateNode* const> s, Eigen::VectorXd& r,
                std::vector<Eigen::MatrixXd>* jac) const override {
    if (jac) {
      ImuJacobians j;
      r = sqrt_info_ * imu_residual(*s[0], *s[1], *preint_, gravity_, &j);
      jac->resize(2);
      (*jac)[0] = sqrt_info_ * j.wrt_first;
      (*jac)[1] = sqrt_info_ * j.wrt_second;
    } else {
      r = sqrt_info_ * imu_residual(*s[0], *s[1], *preint_, gravity_);
    }
  }

  const ImuPreintegration& preintegration() const { return *preint_; }

 private:
  std::shared_ptr<const ImuPreintegration> preint_;
  Vec3 gravity_;
  StateMatrix sqrt_info_;
};

class UwbFactor final : public Factor {
 public:
  UwbFactor(NodeId i, NodeId j, uwb::UwbMeasurement m, double sigma, double huber)
      : Factor(FactorFamily::kUwb, {i, j}, huber), m_(m), inv_sigma_(1.0 / sigma) {}

  int dimension() const override { return 1; }

  void evaluate(std::span<const StateNode* const> s, Eigen::VectorXd& r,
                std::vector<Eigen::MatrixXd>* jac) const override {
    r.resize(1);
    if (jac) {
      uwb::UwbJacobians j;
      r(0) = inv_sigma_ * uwb::uwb_residual(*s[0], *s[1], m_, &j);
      jac->resize(2);
      (*jac)[0] = inv_sigma_ * j.wrt_first;
      (*jac)[1] = inv_sigma_ * j.wrt_second;
    } else {
      r(0) = inv_sigma_ * uwb::uwb_residual(*s[0], *s[1], m_);
    }
  }

 private:
  uwb::UwbMeasurement m_;
  double inv_sigma_;
};

class LidarFactor final : public Factor {
 public:
  LidarFactor(NodeId head, NodeId scan, lidar::LidarCoefficient c, double sigma, double huber)
      : Factor(FactorFamily::kLidar, {head, scan}, huber), c_(c), inv_sigma_(1.0 / sigma) {}

  int dimension() const override { return 1; }

  void evaluate(std::span<const StateNode* const> s, Eigen::VectorXd& r,
                std::vector<Eigen::MatrixXd>* jac) const override {
    r.resize(1);
    if (jac) {
      lidar::LidarJacobians j;
      r(0) = inv_sigma_ * lidar::lidar_residual(*s[0], *s[1], c_, &j);
      jac->resize(2);
      (*jac)[0] = inv_sigma_ * j.wrt_head;
      (*jac)[1] = inv_sigma_ * j.wrt_scan;
    } else {
      r(0) = inv_sigma_ * lidar::lidar_residual(*s[0], *s[1], c_);
    }
  }

 private:
  lidar::LidarCoefficient c_;
  double inv_sigma_;
};

/// Gaussian factor linear in the tangent offsets from fixed linearization
/// points: r = r0 + J [x_1 - lin_1; ...; x_n - lin_n]. Marginalization
/// produces these; they also serve as unary priors and as linear test factors.
class LinearFactor final : public Factor {
 public:
  LinearFactor(std::vector<NodeId> nodes, std::vector<StateNode> linearization,
               Eigen::MatrixXd jacobian, Eigen::VectorXd residual,
               FactorFamily family = FactorFamily::kPrior)
      : Factor(family, std::move(nodes)),
        lin_(std::move(linearization)),
        jacobian_(std::move(jacobian)),
        r0_(std::move(residual)) {
    if (lin_.size() != this->nodes().size() ||
        jacobian_.cols() != static_cast<Eigen::Index>(kStateDim * lin_.size()) ||
        jacobian_.rows() != r0_.size()) {
      throw Error(ErrorKind::kValidation, "linear factor dimensions disagree");
    }
  }

  /// Unary prior with sqrt-information `sqrt_info` centered on `mean`.
  static std::shared_ptr<LinearFactor> unary(NodeId id, const StateNode& mean, const StateMatrix& sqrt_info) {
    return std::make_shared<LinearFactor>(std::vector<NodeId>{id}, std::vector<StateNode>{mean},
                                          Eigen::MatrixXd(sqrt_info), Eigen::VectorXd::Zero(kStateDim));
  }

  int dimension() const override { return static_cast<int>(r0_.size()); }

  void evaluate(std::span<const StateNode* const> s, Eigen::VectorXd& r,
                std::vector<Eigen::MatrixXd>* jac) const override {
    Eigen::VectorXd dx(kStateDim * lin_.size());
    for (std::size_t k = 0; k < lin_.size(); ++k) {
      dx.segment<kStateDim>(kStateDim * k) = boxminus(*s[k], lin_[k]);
    }
    r = r0_ + jacobian_ * dx;
    if (jac) {
      jac->resize(lin_.size());
      for (std::size_t k = 0; k < lin_.size(); ++k) {
        Eigen::MatrixXd block = jacobian_.middleCols(kStateDim * k, kStateDim);
        const Mat3 jr_inv = geometry::right_jacobian_inv(dx.segment<3>(kStateDim * k + kRot));
        block.middleCols<3>(kRot) = block.middleCols<3>(kRot) * jr_inv;
        (*jac)[k] = std::move(block);
      }
    }
  }

  const std::vector<StateNode>& linearization() const { return lin_; }
  const Eigen::MatrixXd& jacobian() const { return jacobian_; }
  const Eigen::VectorXd& residual0() const { return r0_; }

 private:
  std::vector<StateNode> lin_;
  Eigen::MatrixXd jacobian_;
  Eigen::VectorXd r0_;
};

struct SolverConfig {
  int max_iterations = 50;
  double function_tolerance = 1e-6;  ///< relative cost decrease
  double gradient_tolerance = 1e-8;  ///< max-norm of J^T r
  double initial_lambda = 1e-4;
};

using FamilyCosts = std::array<double, kFamilyCount>;

struct SolverReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  FamilyCosts initial_breakdown{};
  FamilyCosts final_breakdown{};
  bool converged = false;
  std::string termination;
  double wall_time_ms = 0.0;  ///< excluded from determinism comparisons
};

/// Thrown when the cost becomes non-finite; carries the partial report.
class DivergedError : public Error {
 public:
  explicit DivergedError(SolverReport report)
      : Error(ErrorKind::kDiverged, "non-finite cost after " + std::to_string(report.iterations) +
                                        " iterations"),
        report_(std::move(report)) {}
  const SolverReport& report() const { return report_; }

 private:
  SolverReport report_;
};

namespace detail {

/// Huber cost rho(s) on s = |r|^2 and the IRLS weight sqrt(rho'(s)).
inline double robust_cost(double s, double delta, double* sqrt_weight = nullptr) {
  if (delta <= 0.0 || s <= delta * delta) {
    if (sqrt_weight) *sqrt_weight = 1.0;
    return s;
  }
  const double norm = std::sqrt(s);
  if (sqrt_weight) *sqrt_weight = std::sqrt(delta / norm);
  return 2.0 * delta * norm - delta * delta;
}

class ProblemView {
 public:
  ProblemView(std::vector<StateNode>& states, const std::vector<NodeId>& ids, const FactorList& factors)
      : states_(states), factors_(factors) {
    for (std::size_t i = 0; i < ids.size(); ++i) index_[ids[i]] = static_cast<int>(i);
    slots_.reserve(factors.size());
    for (const auto& f : factors) {
      std::vector<int> s;
      for (NodeId id : f->nodes()) {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error(ErrorKind::kValidation, "factor references unknown node");
        s.push_back(it->second);
      }
      slots_.push_back(std::move(s));
    }
  }

  int dim() const { return kStateDim * static_cast<int>(states_.size()); }

  std::vector<const StateNode*> bind(std::size_t f, const std::vector<StateNode>& states) const {
    std::vector<const StateNode*> out;
    for (int s : slots_[f]) out.push_back(&states[s]);
    return out;
  }

  double cost(const std::vector<StateNode>& states, FamilyCosts* breakdown = nullptr) const {
    double total = 0.0;
    if (breakdown) breakdown->fill(0.0);
    Eigen::VectorXd r;
    for (std::size_t f = 0; f < factors_.size(); ++f) {
      const auto bound = bind(f, states);
      factors_[f]->evaluate(bound, r, nullptr);
      const double c = robust_cost(r.squaredNorm(), factors_[f]->huber());
      total += c;
      if (breakdown) (*breakdown)[static_cast<int>(factors_[f]->family())] += c;
    }
    return total;
  }

  /// Accumulates H = J^T J and g = J^T r over the robust-weighted stack.
  double linearize(Eigen::MatrixXd& h, Eigen::VectorXd& g) const {
    h.setZero(dim(), dim());
    g.setZero(dim());
    double total = 0.0;
    Eigen::VectorXd r;
    std::vector<Eigen::MatrixXd> jac;
    for (std::size_t f = 0; f < factors_.size(); ++f) {
      const auto bound = bind(f, states_);
      factors_[f]->evaluate(bound, r, &jac);
      double w = 1.0;
      total += robust_cost(r.squaredNorm(), factors_[f]->huber(), &w);
      if (w != 1.0) {
        r *= w;
        for (auto& j : jac) j *= w;
      }
      const auto& slots = slots_[f];
      for (std::size_t a = 0; a < slots.size(); ++a) {
        const int ia = kStateDim * slots[a];
        g.segment<kStateDim>(ia).noalias() += jac[a].transpose() * r;
        for (std::size_t b = a; b < slots.size(); ++b) {
          const int ib = kStateDim * slots[b];
          if (ia == ib) {
            h.block<kStateDim, kStateDim>(ia, ia).noalias() += jac[a].transpose() * jac[a];
          } else {
            const StateMatrix blk = jac[a].transpose() * jac[b];
            h.block<kStateDim, kStateDim>(ia, ib) += blk;
            h.block<kStateDim, kStateDim>(ib, ia) += blk.transpose();
          }
        }
      }
    }
    return total;
  }

  std::vector<StateNode> retract(const Eigen::VectorXd& delta) const {
    std::vector<StateNode> out(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      out[i] = boxplus(states_[i], delta.segment<kStateDim>(kStateDim * i));
    }
    return out;
  }

  std::vector<StateNode>& states() { return states_; }

 private:
  std::vector<StateNode>& states_;
  const FactorList& factors_;
  std::unordered_map<NodeId, int> index_;
  std::vector<std::vector<int>> slots_;
};

}  // namespace detail

/// Levenberg-Marquardt on the stacked whitened residuals with boxplus updates.
/// Huber-robustified factors are handled by iteratively reweighting.
inline SolverReport optimize(std::vector<StateNode>& states, const std::vector<NodeId>& ids,
                             const FactorList& factors, const SolverConfig& config = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (states.size() != ids.size()) throw Error(ErrorKind::kValidation, "state and id lists differ");
  detail::ProblemView problem(states, ids, factors);
  SolverReport report;
  report.initial_cost = problem.cost(states, &report.initial_breakdown);
  report.final_cost = report.initial_cost;
  report.final_breakdown = report.initial_breakdown;
  auto finish = [&](const char* why, bool converged) {
    report.termination = why;
    report.converged = converged;
    report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
  };
  if (!std::isfinite(report.initial_cost)) throw DivergedError(finish("non-finite cost", false));
  if (factors.empty()) return finish("no factors", true);

  double lambda = config.initial_lambda;
  double nu = 2.0;
  double cost = report.initial_cost;
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  problem.linearize(h, g);

  while (report.iterations < config.max_iterations) {
    if (g.lpNorm<Eigen::Infinity>() < config.gradient_tolerance) return finish("gradient tolerance", true);
    ++report.iterations;

    Eigen::MatrixXd damped = h;
    damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-6).cwiseMin(1e32);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    const Eigen::VectorXd delta = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
      lambda *= nu;
      nu *= 2.0;
      continue;
    }
    std::vector<StateNode> candidate = problem.retract(delta);
    const double new_cost = problem.cost(candidate);
    if (!std::isfinite(new_cost)) {
      report.final_cost = new_cost;
      throw DivergedError(finish("non-finite cost", false));
    }
    const double predicted = -(2.0 * g.dot(delta) + delta.dot(h * delta));
    const double actual = cost - new_cost;
    if (actual > 0.0 && predicted > 0.0) {
      const double rho = actual / predicted;
      problem.states() = std::move(candidate);
      const double rel = actual / std::max(cost, std::numeric_limits<double>::min());
      cost = new_cost;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      report.final_cost = problem.cost(problem.states(), &report.final_breakdown);
      if (rel < config.function_tolerance) return finish("function tolerance", true);
      problem.linearize(h, g);
    } else {
      if (actual == 0.0 && delta.lpNorm<Eigen::Infinity>() < 1e-15) {
        return finish("zero step", true);
      }
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e16) return finish("damping limit", true);
    }
  }
  return finish("iteration limit", false);
}

/// Schur-complements `departing` out of every factor touching it and returns
/// the resulting dense Gaussian over the other nodes those factors touch, or
/// nullptr when nothing else is connected.
inline std::shared_ptr<LinearFactor> marginalize(const std::vector<StateNode>& states,
                                                 const std::vector<NodeId>& ids,
                                                 const FactorList& factors, NodeId departing) {
  FactorList touching;
  std::vector<NodeId> keep_ids;
  for (const auto& f : factors) {
    const auto& n = f->nodes();
    if (std::find(n.begin(), n.end(), departing) == n.end()) continue;
    touching.push_back(f);
    for (NodeId id : n) {
      if (id != departing && std::find(keep_ids.begin(), keep_ids.end(), id) == keep_ids.end()) {
        keep_ids.push_back(id);
      }
    }
  }
  if (keep_ids.empty()) return nullptr;
  std::sort(keep_ids.begin(), keep_ids.end());

  std::vector<NodeId> local_ids{departing};
  local_ids.insert(local_ids.end(), keep_ids.begin(), keep_ids.end());
  std::vector<StateNode> local_states;
  for (NodeId id : local_ids) {
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw Error(ErrorKind::kValidation, "marginalization references unknown node");
    local_states.push_back(states[static_cast<std::size_t>(it - ids.begin())]);
  }

  detail::ProblemView view(local_states, local_ids, touching);
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  view.linearize(h, g);

  const int m = kStateDim;
  const int n = view.dim() - m;
  const Eigen::MatrixXd hmm = 0.5 * (h.topLeftCorner(m, m) + h.topLeftCorner(m, m).transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(hmm);
  const Eigen::VectorXd lm = eig_m.eigenvalues();
  const double tol_m = 1e-12 * std::max(1.0, lm.cwiseAbs().maxCoeff());
  const Eigen::VectorXd inv_lm = lm.unaryExpr([tol_m](double v) { return v > tol_m ? 1.0 / v : 0.0; });
  const Eigen::MatrixXd hmm_inv = eig_m.eigenvectors() * inv_lm.asDiagonal() * eig_m.eigenvectors().transpose();

  const Eigen::MatrixXd hrm = h.bottomLeftCorner(n, m);
  Eigen::MatrixXd hs = h.bottomRightCorner(n, n) - hrm * hmm_inv * hrm.transpose();
  hs = 0.5 * (hs + hs.transpose());
  const Eigen::VectorXd gs = g.tail(n) - hrm * hmm_inv * g.head(m);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hs);
  const Eigen::VectorXd lam = eig.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());
  std::vector<int> kept;
  for (int i = 0; i < lam.size(); ++i) {
    if (lam(i) > tol) kept.push_back(i);
  }
  Eigen::MatrixXd j(kept.size(), n);
  Eigen::VectorXd r0(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const double s = std::sqrt(lam(kept[k]));
    const Eigen::VectorXd v = eig.eigenvectors().col(kept[k]);
    j.row(k) = s * v.transpose();
    r0(k) = v.dot(gs) / s;
  }
  std::vector<StateNode> lin(local_states.begin() + 1, local_states.end());
  return std::make_shared<LinearFactor>(keep_ids, std::move(lin), std::move(j), std::move(r0));
}

struct WindowWeights {
  double sigma_uwb = 0.05;
  double sigma_lidar = 0.02;
  /// Huber threshold in meters; whitened by each factor's sigma.
  double huber_meters = 0.5;
  Vec3 gravity = kDefaultGravity;
};

/// The M+1 most recent knots, the measurements between them and the prior
/// summarizing everything that left the window.
struct SlidingWindow {
  std::size_t size_m = 10;  ///< M: the window holds M+1 nodes when full
  std::deque<StateNode> nodes;
  std::deque<NodeId> ids;
  NodeId next_id = 0;
  /// preints[i] and bundles[i] cover (nodes[i].t, nodes[i+1].t].
  std::deque<std::shared_ptr<const ImuPreintegration>> preints;
  std::deque<uwb::RangeBundle> bundles;
  /// Feature cloud captured at each node and its current coefficients
  /// against the local map (empty for the head).
  std::deque<lidar::FeatureCloud> clouds;
  std::deque<std::vector<lidar::LidarCoefficient>> coefficients;
  std::shared_ptr<const LinearFactor> prior;

  bool full() const { return nodes.size() == size_m + 1; }

  NodeId push(const StateNode& x, lidar::FeatureCloud cloud = {}) {
    const NodeId id = next_id++;
    nodes.push_back(x);
    ids.push_back(id);
    clouds.push_back(std::move(cloud));
    coefficients.emplace_back();
    return id;
  }

  std::vector<StateNode> state_vector() const { return {nodes.begin(), nodes.end()}; }
  std::vector<NodeId> id_vector() const { return {ids.begin(), ids.end()}; }
  void set_states(const std::vector<StateNode>& s) { std::copy(s.begin(), s.end(), nodes.begin()); }
};

/// Builds the joint cost: IMU factors on every interval, UWB factors on every
/// bundled range (none without anchors), Lidar factors tying the head to each
/// later node, and the prior.
inline FactorList assemble_cost(const SlidingWindow& window, std::size_t anchor_count,
                                const WindowWeights& weights = {}) {
  FactorList out;
  const std::size_t n = window.nodes.size();
  if (n >= 2 && (window.preints.size() < n - 1)) {
    throw Error(ErrorKind::kValidation, "window interval is missing its preintegration");
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!window.preints[i]) throw Error(ErrorKind::kValidation, "window interval is missing its preintegration");
    out.push_back(std::make_shared<ImuFactor>(window.ids[i], window.ids[i + 1], window.preints[i], weights.gravity));
  }
  if (anchor_count > 0) {
    const double huber = weights.huber_meters / weights.sigma_uwb;
    for (std::size_t i = 0; i + 1 < n && i < window.bundles.size(); ++i) {
      for (const auto& m : window.bundles[i].measurements) {
        out.push_back(std::make_shared<UwbFactor>(window.ids[i], window.ids[i + 1], m, weights.sigma_uwb, huber));
      }
    }
  }
  const double lidar_huber = weights.huber_meters / weights.sigma_lidar;
  for (std::size_t m = 1; m < n && m < window.coefficients.size(); ++m) {
    for (const auto& c : window.coefficients[m]) {
      out.push_back(std::make_shared<LidarFactor>(window.ids[0], window.ids[m], c, weights.sigma_lidar, lidar_huber));
    }
  }
  if (window.prior) out.push_back(window.prior);
  return out;
}

/// Marginalizes the head through `factors` (normally the ones just optimized)
/// and drops it with its interval data.
inline void marginalize_head(SlidingWindow& window, const FactorList& factors) {
  if (window.nodes.empty()) return;
  const NodeId head = window.ids.front();
  window.prior = marginalize(window.state_vector(), window.id_vector(), factors, head);
  window.nodes.pop_front();
  window.ids.pop_front();
  window.clouds.pop_front();
  window.coefficients.pop_front();
  if (!window.preints.empty()) window.preints.pop_front();
  if (!window.bundles.empty()) window.bundles.pop_front();
  for (auto& c : window.coefficients) c.clear();
}

/// Appends the knot for a new cloud with its interval measurements.
inline NodeId append_node(SlidingWindow& window, const StateNode& predicted,
                          std::shared_ptr<const ImuPreintegration> preint, uwb::RangeBundle bundle,
                          lidar::FeatureCloud cloud) {
  window.preints.push_back(std::move(preint));
  window.bundles.push_back(std::move(bundle));
  return window.push(predicted, std::move(cloud));
}

/// Full-window step at a new cloud: marginalize the head when the window is
/// full, then append the predicted knot.
inline NodeId slide(SlidingWindow& window, const FactorList& last_factors, const StateNode& predicted,
                    std::shared_ptr<const ImuPreintegration> preint, uwb::RangeBundle bundle,
                    lidar::FeatureCloud cloud) {
  if (window.full()) marginalize_head(window, last_factors);
  return append_node(window, predicted, std::move(preint), std::move(bundle), std::move(cloud));
}

}  // namespace liro

#endif  // LIRO_WINDOW_SOLVER_HPP
