#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "liro/config_io.hpp"
#include "liro/dataset_io.hpp"

namespace liro {
namespace {

namespace fs = std::filesystem;

/// Runs the CLI through the shell and returns its exit status.
int liro(const std::string& args, const fs::path& log = {}) {
  std::string cmd = std::string(LIRO_CLI_PATH) + " " + args;
  cmd += log.empty() ? " > /dev/null 2>&1" : " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("liro_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(liro("simulate --out " + (root_ / "short").string() + " --duration 3"), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }
  static fs::path dir(const std::string& name) { return root_ / name; }
  static fs::path short_dataset() { return root_ / "short"; }

  static inline fs::path root_;
};

TEST_F(Cli, DefaultSimulationWritesSixHundredClouds) {
  ASSERT_EQ(liro("simulate --out " + dir("full").string()), 0);
  for (const char* f : {"imu.csv", "uwb.csv", "anchor_ranging.csv", "groundtruth.csv", "world.json", "noise.json"}) {
    EXPECT_TRUE(fs::is_regular_file(dir("full") / f)) << f;
  }
  std::size_t clouds = 0;
  for (const auto& e : fs::directory_iterator(dir("full") / "features")) clouds += e.path().extension() == ".csv";
  EXPECT_EQ(clouds, 600u);
}

TEST_F(Cli, SameSeedGivesIdenticalFiles) {
  ASSERT_EQ(liro("simulate --out " + dir("again").string() + " --duration 3"), 0);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(short_dataset())) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), short_dataset());
    EXPECT_EQ(slurp(e.path()), slurp(dir("again") / rel)) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 6u + 30u);
  ASSERT_EQ(liro("simulate --out " + dir("other").string() + " --duration 3 --seed 9"), 0);
  EXPECT_NE(slurp(short_dataset() / "imu.csv"), slurp(dir("other") / "imu.csv"));
}

TEST_F(Cli, LioModeAliasesZeroAnchors) {
  const std::string ds = " --dataset " + short_dataset().string();
  ASSERT_EQ(liro("run" + ds + " --mode lio --out " + dir("lio").string()), 0);
  ASSERT_EQ(liro("run" + ds + " --anchors 0 --out " + dir("a0").string()), 0);
  EXPECT_EQ(slurp(dir("lio") / "trajectory.csv"), slurp(dir("a0") / "trajectory.csv"));
  EXPECT_EQ(slurp(dir("lio") / "solver_log.csv"), slurp(dir("a0") / "solver_log.csv"));
  EXPECT_NE(liro("run" + ds + " --mode lio --anchors 3 --out " + dir("bad").string()), 0);
}

TEST_F(Cli, RunIsDeterministic) {
  const std::string ds = " --dataset " + short_dataset().string();
  ASSERT_EQ(liro("run" + ds + " --mode liro3 --window 5 --out " + dir("r1").string()), 0);
  ASSERT_EQ(liro("run" + ds + " --mode liro3 --window 5 --out " + dir("r2").string()), 0);
  const std::string a = slurp(dir("r1") / "trajectory.csv");
  EXPECT_EQ(a, slurp(dir("r2") / "trajectory.csv"));
  EXPECT_EQ(read_trajectory(dir("r1") / "trajectory.csv").size(), 30u);
  EXPECT_EQ(from_json_config(dir("r1") / "config.json").window, 5u);
}

TEST_F(Cli, EvalOfIdenticalInputsReportsZero) {
  const std::string gt = (short_dataset() / "groundtruth.csv").string();
  ASSERT_EQ(liro("eval --estimate " + gt + " --groundtruth " + gt + " --align none --out " + dir("ev").string()), 0);
  const std::string report = slurp(dir("ev") / "report.txt");
  EXPECT_NE(report.find("rmse_pos_m=0\n"), std::string::npos) << report;
  EXPECT_NE(report.find("rmse_rot_deg=0\n"), std::string::npos) << report;
  EXPECT_TRUE(fs::is_regular_file(dir("ev") / "errors.csv"));
  ASSERT_EQ(liro("plot --kind rotation-error --input " + (dir("ev") / "errors.csv").string() + " --out " +
                 (dir("ev") / "rot.svg").string()),
            0);
}

TEST_F(Cli, CirclePlotIsClosedWithDataExtent) {
  std::vector<StateNode> circle;
  for (int i = 0; i <= 72; ++i) {
    StateNode x;
    x.t = i;
    const double a = 2 * std::numbers::pi * (i % 72) / 72.0;
    x.p = Vec3(3 + 2 * std::cos(a), -1 + 2 * std::sin(a), 0);
    circle.push_back(x);
  }
  write_trajectory(dir("circle.csv"), circle);
  ASSERT_EQ(liro("plot --input " + dir("circle.csv").string() + " --out " + dir("circle.svg").string()), 0);
  const std::string svg = slurp(dir("circle.svg"));
  EXPECT_NE(svg.find("<desc>extent 1 5 -3 1</desc>"), std::string::npos);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, std::regex("points=\"([^\"]*)\"")));
  const std::string pts = m[1];
  const std::string first = pts.substr(0, pts.find(' '));
  const std::string last = pts.substr(pts.rfind(' ') + 1);
  EXPECT_EQ(first, last);
  ASSERT_EQ(liro("plot --input " + dir("circle.csv").string() + " --out " + dir("circle2.svg").string()), 0);
  EXPECT_EQ(svg, slurp(dir("circle2.svg")));
}

TEST_F(Cli, CompareTabulatesThreeModes) {
  ASSERT_EQ(liro("compare --dataset " + short_dataset().string() + " --window 5 --out " + dir("cmp").string()), 0);
  const std::string table = slurp(dir("cmp") / "comparison.md");
  EXPECT_EQ(table.substr(0, table.find('\n')), "| metric | LIO | LIRO2 | LIRO3 |");
  for (const char* f : {"lio.csv", "liro2.csv", "liro3.csv", "trajectories.svg", "comparison.csv"}) {
    EXPECT_TRUE(fs::is_regular_file(dir("cmp") / f)) << f;
  }
}

TEST_F(Cli, ErrorsGiveNonzeroExit) {
  std::ofstream(dir("bad_spec.json")) << "{\"noise\": {\"sigma_uwb\": -1}}";
  EXPECT_NE(liro("simulate --spec " + dir("bad_spec.json").string() + " --out " + dir("x").string()), 0);
  std::ofstream(dir("typo.json")) << "{\"nosie\": {}}";
  EXPECT_NE(liro("simulate --spec " + dir("typo.json").string() + " --out " + dir("x").string()), 0);
  std::ofstream(dir("broken.csv")) << "t,px\n1,2,3\n";
  const std::string gt = (short_dataset() / "groundtruth.csv").string();
  EXPECT_NE(liro("eval --estimate " + dir("broken.csv").string() + " --groundtruth " + gt), 0);
  EXPECT_NE(liro("run --dataset " + dir("missing").string() + " --out " + dir("x").string()), 0);
  EXPECT_NE(liro("frobnicate"), 0);
}

TEST_F(Cli, PrintedDefaultsParseBack) {
  ASSERT_EQ(liro("run --print-defaults", dir("defaults.json")), 0);
  const EstimatorConfig c = from_json_config(dir("defaults.json"));
  EXPECT_EQ(to_json(c), to_json(EstimatorConfig{}));
  ASSERT_EQ(liro("simulate --print-defaults", dir("spec.json")), 0);
  ASSERT_EQ(liro("simulate --spec " + dir("spec.json").string() + " --duration 3 --out " + dir("from_spec").string()), 0);
  EXPECT_EQ(slurp(short_dataset() / "imu.csv"), slurp(dir("from_spec") / "imu.csv"));
}

TEST(ConfigIo, RoundTripAndUnknownKeys) {
  EstimatorConfig c;
  c.window = 7;
  c.anchors = 2;
  c.integration = IntegrationMethod::kRk4;
  c.prior.yaw = 0.3;
  c.coefficients.neighbors = 8;
  EstimatorConfig back;
  from_json(to_json(c), back);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(from_json(Json{{"windw", 3}}, back), Error);
  EXPECT_THROW(from_json(Json{{"solver", {{"iters", 3}}}}, back), Error);
  EXPECT_THROW(from_json(Json{{"integration", "euler"}}, back), Error);
  EXPECT_THROW(from_json(Json{{"window", "ten"}}, back), Error);
}

}  // namespace
}  // namespace liro
