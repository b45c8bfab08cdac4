#ifndef LIRO_DATASET_IO_HPP
#define LIRO_DATASET_IO_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "liro/error.hpp"
#include "liro/simulator.hpp"

namespace liro {

using Json = nlohmann::ordered_json;

// --- number formatting ---------------------------------------------------------

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kIo, "malformed number '" + std::string(s) + "'");
  }
  return v;
}

// --- CSV ---------------------------------------------------------------------------

using CsvRow = std::vector<std::string>;

/// Rows of a comma-separated file. A first line that does not start with a
/// number is taken as a header and skipped; blank lines are ignored.
inline std::vector<CsvRow> read_csv(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (first) {
      first = false;
      const char c = line[line.find_first_not_of(" \t")];
      if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.')) continue;
    }
    CsvRow row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (row.size() != columns) {
      throw Error(ErrorKind::kIo, path.string() + ": expected " + std::to_string(columns) + " columns, got " +
                                      std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view header) : out_(path) {
    if (!out_) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    out_ << header << '\n';
  }
  template <typename... T>
  void row(const T&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const char* v) { return v; }
  static std::string cell(const std::string& v) { return v; }
  std::ofstream out_;
};

// --- trajectories ------------------------------------------------------------------

inline constexpr std::string_view kTrajectoryHeader = "t,px,py,pz,qx,qy,qz,qw,vx,vy,vz";

inline void write_trajectory(const std::filesystem::path& path, const std::vector<StateNode>& states) {
  CsvWriter w(path, kTrajectoryHeader);
  for (const StateNode& s : states) {
    w.row(s.t, s.p.x(), s.p.y(), s.p.z(), s.q.x(), s.q.y(), s.q.z(), s.q.w(), s.v.x(), s.v.y(), s.v.z());
  }
}

inline std::vector<StateNode> read_trajectory(const std::filesystem::path& path) {
  std::vector<StateNode> out;
  for (const CsvRow& r : read_csv(path, 11)) {
    StateNode s;
    s.t = parse_double(r[0]);
    s.p = {parse_double(r[1]), parse_double(r[2]), parse_double(r[3])};
    s.q = Eigen::Quaterniond(parse_double(r[7]), parse_double(r[4]), parse_double(r[5]), parse_double(r[6]));
    if (std::abs(s.q.norm() - 1.0) > 1e-6) throw Error(ErrorKind::kIo, path.string() + ": non-unit quaternion");
    s.q.normalize();
    s.v = {parse_double(r[8]), parse_double(r[9]), parse_double(r[10])};
    out.push_back(s);
  }
  return out;
}

// --- JSON --------------------------------------------------------------------------

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::kValidation, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

/// Reads an optional key, keeping the current value when absent.
template <typename T>
void read_opt(const Json& j, const char* key, T& value) {
  if (!j.contains(key)) return;
  if constexpr (std::is_same_v<T, Vec3>) {
    value = vec3_from(j.at(key));
  } else {
    value = j.at(key).get<T>();
  }
}

inline Json to_json(const sim::Channel& c) {
  Json terms = Json::array();
  for (const auto& s : c.terms) terms.push_back({{"amplitude", s.amplitude}, {"frequency", s.frequency}, {"phase", s.phase}});
  return {{"offset", c.offset}, {"rate", c.rate}, {"terms", terms}};
}

inline void from_json(const Json& j, sim::Channel& c) {
  read_opt(j, "offset", c.offset);
  read_opt(j, "rate", c.rate);
  if (j.contains("terms")) {
    c.terms.clear();
    for (const Json& t : j.at("terms")) {
      sim::Sinusoid s;
      read_opt(t, "amplitude", s.amplitude);
      read_opt(t, "frequency", s.frequency);
      read_opt(t, "phase", s.phase);
      c.terms.push_back(s);
    }
  }
}

inline Json to_json(const sim::TrajectorySpec& s) {
  return {{"x", to_json(s.x)},
          {"y", to_json(s.y)},
          {"z", to_json(s.z)},
          {"yaw", to_json(s.yaw)},
          {"pitch", to_json(s.pitch)},
          {"roll", to_json(s.roll)},
          {"static_time", s.static_time},
          {"ramp_time", s.ramp_time},
          {"duration", s.duration},
          {"imu_rate", s.imu_rate},
          {"uwb_rate", s.uwb_rate},
          {"uwb_stagger", s.uwb_stagger},
          {"cloud_rate", s.cloud_rate},
          {"v_max", s.v_max}};
}

inline void from_json(const Json& j, sim::TrajectorySpec& s) {
  for (auto [key, ch] : {std::pair{"x", &s.x}, {"y", &s.y}, {"z", &s.z}, {"yaw", &s.yaw}, {"pitch", &s.pitch},
                         {"roll", &s.roll}}) {
    if (j.contains(key)) from_json(j.at(key), *ch);
  }
  read_opt(j, "static_time", s.static_time);
  read_opt(j, "ramp_time", s.ramp_time);
  read_opt(j, "duration", s.duration);
  read_opt(j, "imu_rate", s.imu_rate);
  read_opt(j, "uwb_rate", s.uwb_rate);
  read_opt(j, "uwb_stagger", s.uwb_stagger);
  read_opt(j, "cloud_rate", s.cloud_rate);
  read_opt(j, "v_max", s.v_max);
}

inline Json to_json(const sim::NoiseSpec& n) {
  return {{"gyro_density", n.gyro_density},
          {"accel_density", n.accel_density},
          {"gyro_bias_walk", n.gyro_bias_walk},
          {"accel_bias_walk", n.accel_bias_walk},
          {"gyro_bias", to_json(n.gyro_bias)},
          {"accel_bias", to_json(n.accel_bias)},
          {"sigma_uwb", n.sigma_uwb},
          {"sigma_lidar", n.sigma_lidar},
          {"outlier_rate", n.outlier_rate},
          {"outlier_min", n.outlier_min},
          {"outlier_max", n.outlier_max},
          {"anchor_ranging_samples", n.anchor_ranging_samples}};
}

inline void from_json(const Json& j, sim::NoiseSpec& n) {
  read_opt(j, "gyro_density", n.gyro_density);
  read_opt(j, "accel_density", n.accel_density);
  read_opt(j, "gyro_bias_walk", n.gyro_bias_walk);
  read_opt(j, "accel_bias_walk", n.accel_bias_walk);
  read_opt(j, "gyro_bias", n.gyro_bias);
  read_opt(j, "accel_bias", n.accel_bias);
  read_opt(j, "sigma_uwb", n.sigma_uwb);
  read_opt(j, "sigma_lidar", n.sigma_lidar);
  read_opt(j, "outlier_rate", n.outlier_rate);
  read_opt(j, "outlier_min", n.outlier_min);
  read_opt(j, "outlier_max", n.outlier_max);
  read_opt(j, "anchor_ranging_samples", n.anchor_ranging_samples);
}

inline Json to_json(const sim::LidarSpec& l) {
  return {{"range", l.range}, {"plane_density", l.plane_density}, {"edge_density", l.edge_density},
          {"near_range", l.near_range}, {"boundary_margin", l.boundary_margin}};
}

inline void from_json(const Json& j, sim::LidarSpec& l) {
  read_opt(j, "range", l.range);
  read_opt(j, "plane_density", l.plane_density);
  read_opt(j, "edge_density", l.edge_density);
  read_opt(j, "near_range", l.near_range);
  read_opt(j, "boundary_margin", l.boundary_margin);
}

inline Json to_json(const sim::WorldModel& w) {
  Json planes = Json::array(), edges = Json::array(), anchors = Json::array(), nodes = Json::array();
  for (const auto& p : w.planes) {
    planes.push_back({{"corner", to_json(p.corner)}, {"e1", to_json(p.e1)}, {"e2", to_json(p.e2)}});
  }
  for (const auto& e : w.edges) edges.push_back({{"a", to_json(e.a)}, {"b", to_json(e.b)}});
  for (const auto& a : w.anchors) anchors.push_back(to_json(a));
  for (const auto& n : w.nodes) nodes.push_back(to_json(n));
  return {{"gravity", to_json(w.gravity)},
          {"anchor_height", w.anchor_height()},
          {"third_anchor_side", w.third_anchor_side},
          {"anchors", anchors},
          {"nodes", nodes},
          {"planes", planes},
          {"edges", edges}};
}

inline void from_json(const Json& j, sim::WorldModel& w) {
  read_opt(j, "gravity", w.gravity);
  read_opt(j, "third_anchor_side", w.third_anchor_side);
  if (j.contains("anchors")) {
    w.anchors.clear();
    for (const Json& a : j.at("anchors")) w.anchors.push_back(vec3_from(a));
  }
  if (j.contains("nodes")) {
    w.nodes.clear();
    for (const Json& n : j.at("nodes")) w.nodes.push_back(vec3_from(n));
  }
  if (j.contains("planes")) {
    w.planes.clear();
    for (const Json& p : j.at("planes")) {
      w.planes.push_back({vec3_from(p.at("corner")), vec3_from(p.at("e1")), vec3_from(p.at("e2"))});
    }
  }
  if (j.contains("edges")) {
    w.edges.clear();
    for (const Json& e : j.at("edges")) w.edges.push_back({vec3_from(e.at("a")), vec3_from(e.at("b"))});
  }
  for (const Vec3& a : w.anchors) {
    if (std::abs(a.z() - w.anchor_height()) > 1e-9) {
      throw Error(ErrorKind::kValidation, "anchors must share one height");
    }
  }
}

inline Json to_json(const sim::SimulationSpec& s) {
  return {{"seed", s.seed},
          {"trajectory", to_json(s.trajectory)},
          {"noise", to_json(s.noise)},
          {"lidar", to_json(s.lidar)},
          {"world", to_json(s.world)}};
}

inline void from_json(const Json& j, sim::SimulationSpec& s) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, "simulation spec must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "seed" && it.key() != "trajectory" && it.key() != "noise" && it.key() != "lidar" &&
        it.key() != "world") {
      throw Error(ErrorKind::kValidation, "unknown simulation spec key '" + it.key() + "'");
    }
  }
  read_opt(j, "seed", s.seed);
  if (j.contains("trajectory")) from_json(j.at("trajectory"), s.trajectory);
  if (j.contains("noise")) from_json(j.at("noise"), s.noise);
  if (j.contains("lidar")) from_json(j.at("lidar"), s.lidar);
  if (j.contains("world")) from_json(j.at("world"), s.world);
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// --- dataset directories -----------------------------------------------------------

inline std::string feature_file_name(double t) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%013.6f.csv", t);
  return buf;
}

inline void write_dataset(const std::filesystem::path& dir, const sim::Dataset& d) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  for (const auto& entry : fs::directory_iterator(dir / "features")) {
    if (entry.path().extension() == ".csv") fs::remove(entry.path());
  }
  {
    CsvWriter w(dir / "imu.csv", "t,wx,wy,wz,ax,ay,az");
    for (const auto& s : d.imu) w.row(s.t, s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
  }
  {
    CsvWriter w(dir / "uwb.csv", "t,anchor_id,node_id,range_m");
    for (const auto& r : d.ranges) w.row(r.t, r.anchor_id, r.node_id, r.range);
  }
  for (const auto& c : d.clouds) {
    CsvWriter w(dir / "features" / feature_file_name(c.t), "t,label,x,y,z");
    for (const Vec3& x : c.planes) w.row(c.t, "plane", x.x(), x.y(), x.z());
    for (const Vec3& x : c.edges) w.row(c.t, "edge", x.x(), x.y(), x.z());
  }
  {
    CsvWriter w(dir / "anchor_ranging.csv", "anchor_i,anchor_j,range_m");
    for (const auto& r : d.anchor_ranging) w.row(r.from, r.to, r.range);
  }
  write_trajectory(dir / "groundtruth.csv", d.groundtruth);
  write_json(dir / "world.json", to_json(d.world));
  write_json(dir / "noise.json", to_json(d.noise));
}

inline int parse_int(const std::string& s) {
  const double v = parse_double(s);
  if (v != std::floor(v)) throw Error(ErrorKind::kIo, "expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

/// Loads a dataset directory. Ground truth comes back without biases and
/// outlier labels are not stored on disk.
inline sim::Dataset read_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "no dataset directory " + dir.string());
  sim::Dataset d;
  for (const CsvRow& r : read_csv(dir / "imu.csv", 7)) {
    d.imu.push_back({parse_double(r[0]), {parse_double(r[1]), parse_double(r[2]), parse_double(r[3])},
                     {parse_double(r[4]), parse_double(r[5]), parse_double(r[6])}});
  }
  for (const CsvRow& r : read_csv(dir / "uwb.csv", 4)) {
    d.ranges.push_back({parse_double(r[0]), parse_int(r[1]), parse_int(r[2]), parse_double(r[3])});
    d.range_outlier.push_back(false);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir / "features")) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  for (const fs::path& f : files) {
    lidar::FeatureCloud c;
    bool has_t = false;
    for (const CsvRow& r : read_csv(f, 5)) {
      const double t = parse_double(r[0]);
      if (has_t && t != c.t) throw Error(ErrorKind::kIo, f.string() + ": mixed timestamps");
      c.t = t;
      has_t = true;
      const Vec3 x(parse_double(r[2]), parse_double(r[3]), parse_double(r[4]));
      if (r[1] == "plane") {
        c.planes.push_back(x);
      } else if (r[1] == "edge") {
        c.edges.push_back(x);
      } else {
        throw Error(ErrorKind::kIo, f.string() + ": unknown label '" + r[1] + "'");
      }
    }
    if (!has_t) {
      // An empty scan still marks a cloud time; recover it from the name.
      c.t = parse_double(f.stem().string());
    }
    d.clouds.push_back(std::move(c));
  }
  std::sort(d.clouds.begin(), d.clouds.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  for (const CsvRow& r : read_csv(dir / "anchor_ranging.csv", 3)) {
    d.anchor_ranging.push_back({parse_int(r[0]), parse_int(r[1]), parse_double(r[2])});
  }
  d.groundtruth = read_trajectory(dir / "groundtruth.csv");
  try {
    from_json(read_json(dir / "world.json"), d.world);
    from_json(read_json(dir / "noise.json"), d.noise);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed dataset metadata: ") + e.what());
  }
  return d;
}

}  // namespace liro

#endif  // LIRO_DATASET_IO_HPP
