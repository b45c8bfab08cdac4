#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>
#include <map>
#include <random>

#include "liro/window_solver.hpp"
#include "linear_toy.hpp"
#include "test_support.hpp"

namespace liro {
namespace {

using testing::random_state;
using testing::random_vec;
using testing::make_toy;
using testing::tight;
using testing::ToyProblem;

std::shared_ptr<const ImuPreintegration> static_preint(double t0, double t1) {
  std::vector<ImuSample> s;
  for (int i = 0; i <= 10; ++i) {
    const double t = t0 + (t1 - t0) * i / 10.0;
    s.push_back({t, Vec3::Zero(), -kDefaultGravity});
  }
  return std::make_shared<ImuPreintegration>(preintegrate(s, Vec3::Zero(), Vec3::Zero()));
}

/// A window of `m`+1 static nodes with hand-placed measurements.
SlidingWindow counting_window(std::size_t m, int uwb_per_interval, int lidar_per_cloud) {
  SlidingWindow w;
  w.size_m = m;
  for (std::size_t k = 0; k <= m; ++k) {
    StateNode x;
    x.t = 0.1 * k;
    w.push(x);
    if (k == 0) continue;
    w.preints.push_back(static_preint(0.1 * (k - 1), 0.1 * k));
    uwb::RangeBundle b;
    for (int i = 0; i < uwb_per_interval; ++i) {
      uwb::UwbMeasurement meas;
      meas.anchor = Vec3(10.0, 0.0, 2.0);
      meas.range = 10.0;
      meas.offset = 0.05;
      meas.interval = 0.1;
      b.measurements.push_back(meas);
    }
    w.bundles.push_back(b);
    for (int i = 0; i < lidar_per_cloud; ++i) {
      w.coefficients[k].push_back({Vec3(1.0, 0.1 * i, 0.0), Vec3(0.0, 0.0, 1.0), 0.0});
    }
  }
  w.prior = LinearFactor::unary(w.ids.front(), w.nodes.front(), StateMatrix::Identity());
  return w;
}

std::map<FactorFamily, int> count(const FactorList& f) {
  std::map<FactorFamily, int> c;
  for (const auto& x : f) ++c[x->family()];
  return c;
}

TEST(AssembleCost, CountsFollowWindowIndexRanges) {
  const SlidingWindow w = counting_window(3, 2, 10);
  auto c = count(assemble_cost(w, 3));
  EXPECT_EQ(c[FactorFamily::kImu], 3);
  EXPECT_EQ(c[FactorFamily::kUwb], 6);
  EXPECT_EQ(c[FactorFamily::kLidar], 30);
  EXPECT_EQ(c[FactorFamily::kPrior], 1);
}

TEST(AssembleCost, NoAnchorsMeansNoRangeFactors) {
  const SlidingWindow w = counting_window(3, 2, 10);
  auto c = count(assemble_cost(w, 0));
  EXPECT_EQ(c[FactorFamily::kUwb], 0);
  EXPECT_EQ(c[FactorFamily::kImu], 3);
}

TEST(AssembleCost, LidarFactorsTieTheHead) {
  const SlidingWindow w = counting_window(3, 0, 2);
  for (const auto& f : assemble_cost(w, 0)) {
    if (f->family() == FactorFamily::kLidar) EXPECT_EQ(f->nodes().front(), w.ids.front());
  }
}

TEST(AssembleCost, MissingPreintegrationIsAnError) {
  SlidingWindow w = counting_window(3, 2, 10);
  w.preints.pop_back();
  EXPECT_THROW(assemble_cost(w, 3), Error);
  w = counting_window(3, 2, 10);
  w.preints[1] = nullptr;
  EXPECT_THROW(assemble_cost(w, 3), Error);
}

TEST(Slide, KeepsSizeAndAdvancesHead) {
  SlidingWindow w = counting_window(3, 2, 10);
  FactorList f = assemble_cost(w, 3);
  std::vector<StateNode> s = w.state_vector();
  optimize(s, w.id_vector(), f);
  w.set_states(s);
  const double t_head = w.nodes.front().t;
  StateNode next = w.nodes.back();
  next.t += 0.1;
  slide(w, f, next, static_preint(0.3, 0.4), {}, {});
  EXPECT_EQ(w.nodes.size(), 4u);
  EXPECT_EQ(w.preints.size(), 3u);
  EXPECT_NEAR(w.nodes.front().t, t_head + 0.1, 1e-12);
  ASSERT_TRUE(w.prior);
  for (NodeId id : w.prior->nodes()) {
    EXPECT_NE(std::find(w.ids.begin(), w.ids.end(), id), w.ids.end());
  }
}

TEST(RobustCost, HuberIsContinuousAndLinearInTheTail) {
  const double d = 2.0;
  EXPECT_DOUBLE_EQ(detail::robust_cost(4.0, d), 4.0);
  EXPECT_NEAR(detail::robust_cost(4.0 + 1e-12, d), 4.0, 1e-10);
  // rho(s) = 2 d sqrt(s) - d^2 for sqrt(s) > d.
  EXPECT_DOUBLE_EQ(detail::robust_cost(100.0, d), 2.0 * d * 10.0 - d * d);
  double w = 0.0;
  detail::robust_cost(100.0, d, &w);
  EXPECT_DOUBLE_EQ(w * w, d / 10.0);
  EXPECT_DOUBLE_EQ(detail::robust_cost(100.0, 0.0), 100.0);
}

TEST(Marginalization, SlidingMatchesBatchOnLinearToy) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const testing::SlidingOutcome r = testing::slide_linear_toy(seed);
    ASSERT_EQ(r.retained, 3u);
    EXPECT_LT(r.max_error, 1e-8) << "seed " << seed;
    EXPECT_LT(r.max_rotation, 1e-12) << "seed " << seed;
  }
}

TEST(Marginalization, IsolatedNodeYieldsNoPrior) {
  std::vector<StateNode> s(1);
  FactorList f{LinearFactor::unary(7, StateNode{}, StateMatrix::Identity())};
  EXPECT_EQ(marginalize(s, {7}, f, 7), nullptr);
}

TEST(Marginalization, PriorInformationIsSymmetricPsd) {
  const ToyProblem toy = make_toy(9);
  std::vector<StateNode> s(toy.nodes);
  std::vector<NodeId> ids;
  for (int k = 0; k < toy.nodes; ++k) ids.push_back(k);
  auto prior = marginalize(s, ids, toy.factors, 0);
  ASSERT_TRUE(prior);
  EXPECT_EQ(prior->nodes(), std::vector<NodeId>{1});
  const Eigen::MatrixXd h = prior->jacobian().transpose() * prior->jacobian();
  EXPECT_LT((h - h.transpose()).norm(), 1e-12);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().minCoeff(), -1e-9);
}

// --- solver behavior ---------------------------------------------------------

TEST(Optimize, AlreadyAtOptimumDoesNotMove) {
  std::mt19937_64 rng(4);
  const StateNode x = random_state(rng);
  FactorList f{LinearFactor::unary(0, x, StateMatrix::Identity())};
  std::vector<StateNode> s{x};
  const SolverReport r = optimize(s, {0}, f);
  EXPECT_LE(r.iterations, 2);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(boxminus(s[0], x).norm(), 1e-8);
}

TEST(Optimize, UnaryPriorPullsBackAndKeepsUnitQuaternions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const StateNode x = random_state(rng);
    FactorList f{LinearFactor::unary(0, x, StateMatrix::Identity())};
    std::vector<StateNode> s{random_state(rng)};
    const SolverReport r = optimize(s, {0}, f);
    EXPECT_LE(r.final_cost, r.initial_cost);
    EXPECT_LT(boxminus(s[0], x).norm(), 1e-6);
    EXPECT_NEAR(s[0].q.norm(), 1.0, 1e-10);
  }
}

TEST(Optimize, PriorCostRisesWhenTheGaugeMoves) {
  const StateNode x;
  auto prior = LinearFactor::unary(0, x, StateMatrix::Identity() * 100.0);
  StateNode moved = x;
  moved.p.x() += 0.1;
  Eigen::VectorXd r;
  const StateNode* bound[] = {&moved};
  prior->evaluate(bound, r, nullptr);
  EXPECT_GT(r.squaredNorm(), 0.0);
}

TEST(Optimize, NonFiniteCostThrowsWithReport) {
  StateNode x;
  x.p.x() = std::numeric_limits<double>::quiet_NaN();
  FactorList f{LinearFactor::unary(0, StateNode{}, StateMatrix::Identity())};
  std::vector<StateNode> s{x};
  try {
    optimize(s, {0}, f);
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDiverged);
    EXPECT_FALSE(e.report().converged);
  }
}

TEST(Optimize, UnknownNodeIsRejected) {
  FactorList f{LinearFactor::unary(3, StateNode{}, StateMatrix::Identity())};
  std::vector<StateNode> s(1);
  EXPECT_THROW(optimize(s, {0}, f), Error);
}

/// Range-only problem on a rigid body: nonlinear, exercises Huber weighting.
FactorList range_problem(const std::vector<StateNode>& truth, const std::vector<Vec3>& anchors,
                         double outlier, double huber = 10.0) {
  FactorList f;
  const std::vector<Vec3> offsets{{0.375, 0.275, 0.0}, {-0.375, 0.275, 0.0}, {0.375, -0.275, 0.0}};
  int count = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (const Vec3& y : offsets) {
      uwb::UwbMeasurement m;
      m.anchor = anchors[a];
      m.node_offset = y;
      m.offset = 0.1;
      m.interval = 0.1;
      m.range = (truth[1].p + truth[1].rotation() * y - m.anchor).norm();
      if (count++ == 4) m.range += outlier;
      f.push_back(std::make_shared<UwbFactor>(0, 1, m, 0.05, huber));
    }
  }
  StateMatrix info = StateMatrix::Identity() * 10.0;
  f.push_back(LinearFactor::unary(0, truth[0], info));
  StateMatrix weak = StateMatrix::Identity() * 10.0;
  weak.block<6, 6>(kRot, kRot).setZero();  // pose of node 1 comes from ranges
  f.push_back(LinearFactor::unary(1, truth[1], weak));
  return f;
}

TEST(Optimize, RecoversPerturbedPoseFromRanges) {
  std::vector<StateNode> truth(2);
  truth[1].p = Vec3(3.0, -4.0, 1.0);
  truth[1].q = geometry::quat_exp(Vec3(0.0, 0.0, 0.7));
  const std::vector<Vec3> anchors{{0, 0, 2}, {50, 0, 2}, {45, -12, 2}, {10, -20, 6}};
  const FactorList f = range_problem(truth, anchors, 0.0);
  std::vector<StateNode> s = truth;
  s[1].p += Vec3(0.5, 0.0, 0.0);
  s[1].q = s[1].q * geometry::quat_exp(Vec3(0.0, 0.0, 0.1));
  const SolverReport r = optimize(s, {0, 1}, f);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((s[1].p - truth[1].p).norm(), 1e-6);
  EXPECT_LT(r.final_cost, 1e-10);
  EXPECT_GT(r.initial_breakdown[static_cast<int>(FactorFamily::kUwb)], 0.0);
}

TEST(Optimize, HuberLimitsOutlierPull) {
  std::vector<StateNode> truth(2);
  truth[1].p = Vec3(3.0, -4.0, 1.0);
  const std::vector<Vec3> anchors{{0, 0, 2}, {50, 0, 2}, {45, -12, 2}, {10, -20, 6}};
  std::vector<StateNode> robust = truth, plain = truth;
  optimize(robust, {0, 1}, range_problem(truth, anchors, 3.0));
  optimize(plain, {0, 1}, range_problem(truth, anchors, 3.0, 0.0));
  const double e_robust = (robust[1].p - truth[1].p).norm();
  const double e_plain = (plain[1].p - truth[1].p).norm();
  EXPECT_LT(e_robust, 0.5 * e_plain);
}

TEST(Optimize, BitIdenticalReports) {
  std::vector<StateNode> truth(2);
  truth[1].p = Vec3(3.0, -4.0, 1.0);
  const FactorList f = range_problem(truth, {{0, 0, 2}, {50, 0, 2}, {45, -12, 2}}, 2.0);
  auto run = [&] {
    std::vector<StateNode> s = truth;
    s[1].p.y() += 0.3;
    SolverReport r = optimize(s, {0, 1}, f);
    return std::make_pair(r, s[1].p);
  };
  const auto [a, pa] = run();
  const auto [b, pb] = run();
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.initial_cost, b.initial_cost);
  EXPECT_EQ(a.final_cost, b.final_cost);
  EXPECT_EQ(a.final_breakdown, b.final_breakdown);
  EXPECT_EQ(a.termination, b.termination);
  EXPECT_EQ(pa, pb);
}

TEST(Optimize, CostNeverIncreases) {
  std::mt19937_64 rng(11);
  std::vector<StateNode> truth(2);
  for (int trial = 0; trial < 10; ++trial) {
    truth[1].p = random_vec(rng, 10.0);
    const FactorList f = range_problem(truth, {{0, 0, 2}, {50, 0, 2}, {45, -12, 2}, {10, -20, 6}}, 1.5);
    std::vector<StateNode> s = truth;
    s[1].p += random_vec(rng, 1.0);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 5; ++it) {
      SolverConfig one;
      one.max_iterations = 1;
      const SolverReport r = optimize(s, {0, 1}, f, one);
      EXPECT_LE(r.final_cost, r.initial_cost);
      EXPECT_LE(r.final_cost, last);
      last = r.final_cost;
    }
  }
}

}  // namespace
}  // namespace liro
