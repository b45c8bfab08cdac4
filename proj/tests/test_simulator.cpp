#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "liro/dataset_io.hpp"
#include "liro/simulator.hpp"

namespace liro {
namespace {

namespace fs = std::filesystem;

sim::SimulationSpec short_spec(double duration = 6.0) {
  sim::SimulationSpec s;
  s.trajectory.duration = duration;
  return s;
}

sim::SimulationSpec noiseless(double duration = 6.0) {
  sim::SimulationSpec s = short_spec(duration);
  s.noise = sim::NoiseSpec::none();
  return s;
}

TEST(Simulator, StaticTrajectoryReadsGravityReaction) {
  sim::SimulationSpec s = noiseless(2.0);
  s.trajectory = sim::TrajectorySpec{};
  s.trajectory.duration = 2.0;
  s.trajectory.z.offset = 1.0;
  s.trajectory.yaw.offset = 0.4;
  s.trajectory.roll.offset = 0.1;
  const sim::Dataset d = sim::generate(s);
  const Mat3 r = d.groundtruth.front().rotation();
  for (const ImuSample& m : d.imu) {
    EXPECT_LT(m.gyro.norm(), 1e-15);
    EXPECT_LT((m.accel - r.transpose() * Vec3(0, 0, 9.81)).norm(), 1e-12);
  }
  std::map<std::pair<int, int>, double> first;
  for (const auto& rec : d.ranges) {
    auto [it, inserted] = first.try_emplace({rec.anchor_id, rec.node_id}, rec.range);
    EXPECT_NEAR(rec.range, it->second, 1e-12);
  }
  EXPECT_EQ(first.size(), 12u);
}

TEST(Simulator, NodeRectangle) {
  const auto nodes = sim::default_node_offsets();
  ASSERT_EQ(nodes.size(), 4u);
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& n : nodes) {
    min_x = std::min(min_x, n.x());
    max_x = std::max(max_x, n.x());
    min_y = std::min(min_y, n.y());
    max_y = std::max(max_y, n.y());
    centroid += n / 4.0;
    EXPECT_EQ(n.z(), 0.0);
  }
  EXPECT_DOUBLE_EQ(max_x - min_x, 0.75);
  EXPECT_DOUBLE_EQ(max_y - min_y, 0.55);
  EXPECT_LT(centroid.norm(), 1e-15);
}

TEST(Simulator, CircleMatchesFiniteDifferenceKinematics) {
  // Radius 5 m at 1 m/s, heading along the tangent.
  sim::TrajectorySpec t;
  const double f = 1.0 / (10.0 * std::numbers::pi);
  t.x.terms = {{5.0, f, std::numbers::pi / 2.0}};
  t.y.terms = {{5.0, f, 0.0}};
  t.z.offset = 1.5;
  t.yaw.offset = std::numbers::pi / 2.0;
  t.yaw.rate = 0.2;
  t.roll.terms = {{0.05, 0.3, 0.0}};
  t.ramp_time = 0.0;
  t.static_time = 0.0;
  const sim::Trajectory traj(t);
  const double h = 1e-4;
  const Vec3 g(0, 0, -9.81);
  for (double time = 0.5; time < 30.0; time += 1.7) {
    const sim::Kinematics k = traj.at(time);
    EXPECT_NEAR(k.v.norm(), 1.0, 1e-12);
    EXPECT_NEAR(std::hypot(k.p.x(), k.p.y()), 5.0, 1e-12);
    const auto km = traj.at(time - h), kp = traj.at(time + h);
    const Vec3 acc_fd = (kp.p - 2.0 * k.p + km.p) / (h * h);
    const Vec3 accel_fd = k.q.conjugate() * (acc_fd - g);
    const Vec3 accel = k.q.conjugate() * (k.a - g);
    EXPECT_LT((accel - accel_fd).norm(), 1e-6) << time;
    const Vec3 omega_fd = geometry::quat_log(km.q.conjugate() * kp.q) / (2.0 * h);
    EXPECT_LT((k.omega - omega_fd).norm(), 1e-6) << time;
    const Vec3 v_fd = (kp.p - km.p) / (2.0 * h);
    EXPECT_LT((k.v - v_fd).norm(), 1e-6);
  }
}

TEST(Simulator, DefaultTrajectoryStartsAtRest) {
  const sim::Trajectory traj(sim::default_trajectory());
  for (double t : {0.0, 0.5, 0.99}) {
    const sim::Kinematics k = traj.at(t);
    EXPECT_EQ(k.v.norm(), 0.0);
    EXPECT_EQ(k.a.norm(), 0.0);
    EXPECT_EQ(k.omega.norm(), 0.0);
  }
  EXPECT_GT(traj.at(10.0).v.norm(), 0.5);
}

TEST(Simulator, SpeedLimitIsEnforced) {
  sim::SimulationSpec s = noiseless(5.0);
  s.trajectory.v_max = 0.1;
  EXPECT_THROW(sim::generate(s), Error);
}

TEST(Simulator, InvalidNoiseIsRejected) {
  sim::SimulationSpec s = short_spec(1.0);
  s.noise.sigma_uwb = -1.0;
  EXPECT_THROW(sim::generate(s), Error);
}

TEST(AnchorRanging, NoiselessRecordsAreExact) {
  const sim::WorldModel w = sim::default_world();
  for (const auto& r : sim::emit_anchor_ranging(w, sim::NoiseSpec::none(), 3)) {
    EXPECT_DOUBLE_EQ(r.range, (w.anchors[r.from] - w.anchors[r.to]).norm());
  }
}

TEST(AnchorRanging, SampleMeanWithinThreeStandardErrors) {
  const sim::WorldModel w = sim::default_world();
  sim::NoiseSpec n;
  n.sigma_uwb = 0.05;
  n.anchor_ranging_samples = 50;
  // The default run seed; one 3-sigma check per pair.
  for (std::uint64_t seed : {1u}) {
    std::map<std::pair<int, int>, std::pair<double, int>> acc;
    for (const auto& r : sim::emit_anchor_ranging(w, n, seed)) {
      acc[{r.from, r.to}].first += r.range;
      acc[{r.from, r.to}].second += 1;
    }
    ASSERT_EQ(acc.size(), 3u);
    for (const auto& [pair, sum] : acc) {
      EXPECT_EQ(sum.second, 50);
      const double truth = (w.anchors[pair.first] - w.anchors[pair.second]).norm();
      EXPECT_LT(std::abs(sum.first / sum.second - truth), 3.0 * 0.05 / std::sqrt(50.0)) << "seed " << seed;
    }
  }
}

TEST(AnchorRanging, CalibrationRoundTrip) {
  const sim::WorldModel w = sim::default_world();
  sim::NoiseSpec n;
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (const auto& r : sim::emit_anchor_ranging(w, n, 7)) {
    acc[{r.from, r.to}].first += r.range;
    acc[{r.from, r.to}].second += 1;
  }
  auto mean = [&](int i, int j) { return acc[{i, j}].first / acc[{i, j}].second; };
  const auto set = uwb::calibrate_anchors(mean(0, 1), mean(0, 2), mean(1, 2), 2.0, w.third_anchor_side);
  EXPECT_NEAR(set.positions[1].x(), 50.0, 0.03);
  for (int i = 0; i < 3; ++i) EXPECT_LT((set.positions[i] - w.anchors[i]).norm(), 0.05);
}

TEST(Simulator, NoiselessPredictionTracksTruth) {
  const sim::Dataset d = sim::generate(noiseless(20.0));
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < d.clouds.size(); ++k) {
    const double t0 = d.clouds[k].t, t1 = d.clouds[k + 1].t;
    const auto preint = preintegrate(slice_imu(d.imu, t0, t1), Vec3::Zero(), Vec3::Zero());
    const StateNode pred = predict_state(sim::truth_at(d.groundtruth, t0), preint, d.world.gravity);
    worst = std::max(worst, (pred.p - sim::truth_at(d.groundtruth, t1).p).norm());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Simulator, UwbRangesMatchGeometryAtTheirTimes) {
  sim::SimulationSpec s = noiseless(5.0);
  const sim::Dataset d = sim::generate(s);
  const sim::Trajectory traj(s.trajectory);
  ASSERT_FALSE(d.ranges.empty());
  for (const auto& r : d.ranges) {
    const sim::Kinematics k = traj.at(r.t);
    EXPECT_NEAR(r.range, (k.p + k.q * d.world.nodes[r.node_id] - d.world.anchors[r.anchor_id]).norm(), 1e-12);
  }
  // 25 Hz per node, four nodes.
  EXPECT_EQ(d.ranges.size(), 500u);
}

/// Every range in an interval gets bundled against ground-truth end states.
std::vector<uwb::RangeBundle> bundle_all(const sim::Dataset& d, const uwb::GateConfig& gates) {
  uwb::RangingLayout layout;
  for (std::size_t i = 0; i < d.world.anchors.size(); ++i) layout.anchors[int(i)] = d.world.anchors[i];
  for (std::size_t i = 0; i < d.world.nodes.size(); ++i) layout.nodes[int(i)] = d.world.nodes[i];
  uwb::RangeBundler bundler(layout, gates);
  std::vector<uwb::RangeBundle> out;
  for (std::size_t k = 0; k + 1 < d.clouds.size(); ++k) {
    const double t0 = d.clouds[k].t, t1 = d.clouds[k + 1].t;
    out.push_back(bundler.bundle(d.ranges, t0, t1, sim::truth_at(d.groundtruth, t0), sim::truth_at(d.groundtruth, t1)));
  }
  return out;
}

TEST(Simulator, NoiselessRangesAreNeverRejected) {
  const sim::Dataset d = sim::generate(noiseless(20.0));
  for (const auto& b : bundle_all(d, {})) EXPECT_TRUE(b.rejected.empty());
}

TEST(Simulator, InjectedOutliersAreGated) {
  sim::SimulationSpec s = short_spec(60.0);
  s.noise.outlier_rate = 0.05;
  const sim::Dataset d = sim::generate(s);
  std::map<double, bool> label;
  int outliers = 0, inliers = 0;
  for (std::size_t i = 0; i < d.ranges.size(); ++i) {
    label[d.ranges[i].t] = d.range_outlier[i];
    (d.range_outlier[i] ? outliers : inliers) += 1;
  }
  int outliers_rejected = 0, inliers_rejected = 0;
  for (const auto& b : bundle_all(d, {})) {
    for (const auto& r : b.rejected) (label.at(r.record.t) ? outliers_rejected : inliers_rejected) += 1;
  }
  ASSERT_GT(outliers, 200);
  EXPECT_GE(outliers_rejected, 0.95 * outliers);
  EXPECT_LE(inliers_rejected, 0.01 * inliers);
}

double distance_to_world(const sim::WorldModel& w, const Vec3& x, bool edge) {
  double best = 1e9;
  if (edge) {
    for (const auto& e : w.edges) best = std::min(best, e.distance(x));
  } else {
    for (const auto& p : w.planes) best = std::min(best, p.distance(x));
  }
  return best;
}

TEST(Simulator, MergedMapPointsLieOnTheScene) {
  sim::SimulationSpec s = noiseless(3.0);
  const sim::Dataset d = sim::generate(s);
  std::vector<lidar::Pose> poses;
  std::vector<lidar::FeatureCloud> clouds;
  for (std::size_t k = 10; k < 20; ++k) {
    clouds.push_back(d.clouds[k]);
    poses.push_back(lidar::Pose::of(sim::truth_at(d.groundtruth, d.clouds[k].t)));
  }
  const lidar::LocalMap map = lidar::build_local_map(clouds, poses);
  ASSERT_GT(map.planes.size(), 500u);
  ASSERT_GT(map.edges.size(), 5u);
  for (const Vec3& x : map.planes.points()) {
    EXPECT_LT(distance_to_world(d.world, poses.front().apply(x), false), 1e-6);
  }
  for (const Vec3& x : map.edges.points()) {
    EXPECT_LT(distance_to_world(d.world, poses.front().apply(x), true), 1e-6);
  }
}

TEST(Simulator, NoisyFeaturesStayNearTheScene) {
  sim::SimulationSpec s = short_spec(1.0);
  const sim::Dataset d = sim::generate(s);
  const lidar::Pose pose = lidar::Pose::of(sim::truth_at(d.groundtruth, d.clouds[3].t));
  double sum_sq = 0.0;
  for (const Vec3& x : d.clouds[3].planes) {
    const double e = distance_to_world(d.world, pose.apply(x), false);
    EXPECT_LT(e, 6.0 * s.noise.sigma_lidar);
    sum_sq += e * e;
  }
  const double rms = std::sqrt(sum_sq / d.clouds[3].planes.size());
  EXPECT_GT(rms, 0.3 * s.noise.sigma_lidar);
  EXPECT_LT(rms, 1.5 * s.noise.sigma_lidar);
}

TEST(Simulator, FeaturesStayWithinRange) {
  const sim::SimulationSpec s = noiseless(2.0);
  const sim::Dataset d = sim::generate(s);
  for (const auto& c : d.clouds) {
    for (const Vec3& x : c.planes) EXPECT_LE(x.norm(), s.lidar.range + 1e-9);
    for (const Vec3& x : c.edges) EXPECT_LE(x.norm(), s.lidar.range + 1e-9);
  }
}

TEST(Simulator, ResidualsVanishAtTruth) {
  sim::SimulationSpec s = noiseless(4.0);
  const sim::Dataset d = sim::generate(s);
  const auto& gt = d.groundtruth;
  // Lidar: clouds 10..19 into the map of clouds 10..18.
  std::vector<lidar::Pose> poses;
  std::vector<lidar::FeatureCloud> clouds;
  for (std::size_t k = 10; k < 19; ++k) {
    clouds.push_back(d.clouds[k]);
    poses.push_back(lidar::Pose::of(sim::truth_at(gt, d.clouds[k].t)));
  }
  const lidar::LocalMap map = lidar::build_local_map(clouds, poses);
  const StateNode head = sim::truth_at(gt, d.clouds[10].t);
  int coefficients = 0;
  for (std::size_t k = 11; k < 20; ++k) {
    const StateNode x = sim::truth_at(gt, d.clouds[k].t);
    const lidar::Pose rel = lidar::Pose::of(head).inverse() * lidar::Pose::of(x);
    for (const auto& c : lidar::compute_coefficients(d.clouds[k], map, rel)) {
      EXPECT_LT(std::abs(lidar::lidar_residual(head, x, c)), 1e-6);
      ++coefficients;
    }
  }
  EXPECT_GT(coefficients, 1000);

  // UWB: exact at the interval ends, interpolation-limited inside.
  uwb::RangingLayout layout;
  for (std::size_t i = 0; i < d.world.anchors.size(); ++i) layout.anchors[int(i)] = d.world.anchors[i];
  for (std::size_t i = 0; i < d.world.nodes.size(); ++i) layout.nodes[int(i)] = d.world.nodes[i];
  double worst_interior = 0.0;
  for (std::size_t k = 0; k + 1 < d.clouds.size(); ++k) {
    const StateNode a = sim::truth_at(gt, d.clouds[k].t), b = sim::truth_at(gt, d.clouds[k + 1].t);
    const auto bundle = uwb::bundle_ranges(d.ranges, a.t, b.t, a, b, layout);
    for (const auto& m : bundle.measurements) {
      const double r = std::abs(uwb::uwb_residual(a, b, m));
      if (std::abs(m.offset - m.interval) < 1e-12 || m.offset < 1e-12) {
        EXPECT_LT(r, 1e-6);
      } else {
        worst_interior = std::max(worst_interior, r);
      }
    }
  }
  EXPECT_LT(worst_interior, 2e-3);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(DatasetIo, SameSeedGivesByteIdenticalFiles) {
  const fs::path root = fs::temp_directory_path() / "liro_sim_repro";
  fs::remove_all(root);
  const sim::SimulationSpec s = short_spec(2.0);
  write_dataset(root / "a", sim::generate(s));
  write_dataset(root / "b", sim::generate(s));
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    EXPECT_EQ(slurp(entry.path()), slurp(root / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 6 + 20);
  sim::SimulationSpec other = s;
  other.seed = 2;
  write_dataset(root / "c", sim::generate(other));
  EXPECT_NE(slurp(root / "a" / "imu.csv"), slurp(root / "c" / "imu.csv"));
  fs::remove_all(root);
}

TEST(DatasetIo, RoundTripIsExact) {
  const fs::path dir = fs::temp_directory_path() / "liro_sim_roundtrip";
  fs::remove_all(dir);
  const sim::Dataset d = sim::generate(short_spec(2.0));
  write_dataset(dir, d);
  const sim::Dataset r = read_dataset(dir);
  ASSERT_EQ(r.imu.size(), d.imu.size());
  for (std::size_t i = 0; i < d.imu.size(); ++i) {
    EXPECT_EQ(r.imu[i].t, d.imu[i].t);
    EXPECT_EQ(r.imu[i].gyro, d.imu[i].gyro);
    EXPECT_EQ(r.imu[i].accel, d.imu[i].accel);
  }
  ASSERT_EQ(r.ranges.size(), d.ranges.size());
  EXPECT_EQ(r.ranges.back().range, d.ranges.back().range);
  ASSERT_EQ(r.clouds.size(), d.clouds.size());
  for (std::size_t k = 0; k < d.clouds.size(); ++k) {
    EXPECT_EQ(r.clouds[k].t, d.clouds[k].t);
    EXPECT_EQ(r.clouds[k].planes, d.clouds[k].planes);
    EXPECT_EQ(r.clouds[k].edges, d.clouds[k].edges);
  }
  ASSERT_EQ(r.groundtruth.size(), d.groundtruth.size());
  EXPECT_EQ(r.groundtruth[77].p, d.groundtruth[77].p);
  EXPECT_EQ(r.world.anchors, d.world.anchors);
  EXPECT_EQ(r.world.nodes, d.world.nodes);
  EXPECT_EQ(r.world.planes.size(), d.world.planes.size());
  EXPECT_EQ(r.noise.sigma_uwb, d.noise.sigma_uwb);
  EXPECT_EQ(r.anchor_ranging.size(), d.anchor_ranging.size());
  fs::remove_all(dir);
}

TEST(DatasetIo, MalformedCsvIsAnIoError) {
  const fs::path dir = fs::temp_directory_path() / "liro_sim_bad";
  fs::remove_all(dir);
  write_dataset(dir, sim::generate(short_spec(1.0)));
  {
    std::ofstream out(dir / "imu.csv", std::ios::app);
    out << "1.0,2.0,abc,0,0,0,0\n";
  }
  try {
    read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
  fs::remove_all(dir);
  EXPECT_THROW(read_dataset(dir), Error);
}

TEST(DatasetIo, SpecJsonRoundTrip) {
  sim::SimulationSpec s;
  s.seed = 42;
  s.noise.sigma_uwb = 0.07;
  s.trajectory.uwb_stagger = false;
  sim::SimulationSpec back;
  from_json(to_json(s), back);
  EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
  sim::SimulationSpec partial;
  from_json(Json::parse(R"({"seed": 9, "noise": {"sigma_lidar": 0.0}})"), partial);
  EXPECT_EQ(partial.seed, 9u);
  EXPECT_EQ(partial.noise.sigma_lidar, 0.0);
  EXPECT_EQ(partial.noise.sigma_uwb, 0.05);
  EXPECT_THROW(from_json(Json::parse(R"({"sede": 9})"), partial), Error);
}

}  // namespace
}  // namespace liro
