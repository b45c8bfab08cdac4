#ifndef LIRO_CONFIG_IO_HPP
#define LIRO_CONFIG_IO_HPP

#include <set>
#include <string>

#include "liro/dataset_io.hpp"
#include "liro/estimator.hpp"
#include "liro/evaluation.hpp"

namespace liro {

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw Error(ErrorKind::kValidation, "unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline const char* to_string(IntegrationMethod m) { return m == IntegrationMethod::kRk4 ? "rk4" : "zoh"; }

inline IntegrationMethod parse_integration(const std::string& s) {
  if (s == "zoh") return IntegrationMethod::kZoh;
  if (s == "rk4") return IntegrationMethod::kRk4;
  throw Error(ErrorKind::kValidation, "integration must be 'zoh' or 'rk4', got '" + s + "'");
}

/// The full estimator configuration; every field is written so the output of
/// `--print-defaults` doubles as a template.
inline Json to_json(const EstimatorConfig& c) {
  const InitialPrior& p = c.prior;
  return {{"window", c.window},
          {"anchors", c.anchors},
          {"integration", to_string(c.integration)},
          {"imu_noise",
           {{"gyro_density", c.imu_noise.gyro_density},
            {"accel_density", c.imu_noise.accel_density},
            {"gyro_bias_walk", c.imu_noise.gyro_bias_walk},
            {"accel_bias_walk", c.imu_noise.accel_bias_walk}}},
          {"weights",
           {{"sigma_uwb", c.weights.sigma_uwb},
            {"sigma_lidar", c.weights.sigma_lidar},
            {"huber_meters", c.weights.huber_meters},
            {"gravity", to_json(c.weights.gravity)}}},
          {"gates", {{"innovation", c.gates.innovation}, {"max_rate", c.gates.max_rate}}},
          {"map", {{"voxel_leaf", c.map.voxel_leaf}}},
          {"coefficients",
           {{"neighbors", c.coefficients.neighbors},
            {"search_radius", c.coefficients.search_radius},
            {"max_condition", c.coefficients.max_condition},
            {"plane_tolerance", c.coefficients.plane_tolerance},
            {"edge_eigen_ratio", c.coefficients.edge_eigen_ratio}}},
          {"max_plane_features", c.max_plane_features},
          {"max_edge_features", c.max_edge_features},
          {"association_rounds", c.association_rounds},
          {"solver",
           {{"max_iterations", c.solver.max_iterations},
            {"function_tolerance", c.solver.function_tolerance},
            {"gradient_tolerance", c.solver.gradient_tolerance},
            {"initial_lambda", c.solver.initial_lambda}}},
          {"init_duration", c.init_duration},
          {"prior",
           {{"roll_pitch", p.roll_pitch},
            {"yaw", p.yaw},
            {"position", p.position},
            {"yaw_gauge", p.yaw_gauge},
            {"position_gauge", p.position_gauge},
            {"velocity", p.velocity},
            {"gyro_bias", p.gyro_bias},
            {"accel_bias", p.accel_bias}}}};
}

/// Overlays the keys present in `j` on `c`; unknown keys are errors so a typo
/// cannot silently fall back to a default.
inline void from_json(const Json& j, EstimatorConfig& c) {
  using detail::reject_unknown;
  reject_unknown(j,
                 {"window", "anchors", "integration", "imu_noise", "weights", "gates", "map", "coefficients",
                  "max_plane_features", "max_edge_features", "association_rounds", "solver", "init_duration",
                  "prior"},
                 "estimator config");
  try {
    read_opt(j, "window", c.window);
    read_opt(j, "anchors", c.anchors);
    if (j.contains("integration")) c.integration = parse_integration(j.at("integration").get<std::string>());
    if (j.contains("imu_noise")) {
      const Json& n = j.at("imu_noise");
      reject_unknown(n, {"gyro_density", "accel_density", "gyro_bias_walk", "accel_bias_walk"}, "imu_noise");
      read_opt(n, "gyro_density", c.imu_noise.gyro_density);
      read_opt(n, "accel_density", c.imu_noise.accel_density);
      read_opt(n, "gyro_bias_walk", c.imu_noise.gyro_bias_walk);
      read_opt(n, "accel_bias_walk", c.imu_noise.accel_bias_walk);
    }
    if (j.contains("weights")) {
      const Json& w = j.at("weights");
      reject_unknown(w, {"sigma_uwb", "sigma_lidar", "huber_meters", "gravity"}, "weights");
      read_opt(w, "sigma_uwb", c.weights.sigma_uwb);
      read_opt(w, "sigma_lidar", c.weights.sigma_lidar);
      read_opt(w, "huber_meters", c.weights.huber_meters);
      read_opt(w, "gravity", c.weights.gravity);
    }
    if (j.contains("gates")) {
      const Json& g = j.at("gates");
      reject_unknown(g, {"innovation", "max_rate"}, "gates");
      read_opt(g, "innovation", c.gates.innovation);
      read_opt(g, "max_rate", c.gates.max_rate);
    }
    if (j.contains("map")) {
      reject_unknown(j.at("map"), {"voxel_leaf"}, "map");
      read_opt(j.at("map"), "voxel_leaf", c.map.voxel_leaf);
    }
    if (j.contains("coefficients")) {
      const Json& k = j.at("coefficients");
      reject_unknown(k, {"neighbors", "search_radius", "max_condition", "plane_tolerance", "edge_eigen_ratio"},
                     "coefficients");
      read_opt(k, "neighbors", c.coefficients.neighbors);
      read_opt(k, "search_radius", c.coefficients.search_radius);
      read_opt(k, "max_condition", c.coefficients.max_condition);
      read_opt(k, "plane_tolerance", c.coefficients.plane_tolerance);
      read_opt(k, "edge_eigen_ratio", c.coefficients.edge_eigen_ratio);
    }
    read_opt(j, "max_plane_features", c.max_plane_features);
    read_opt(j, "max_edge_features", c.max_edge_features);
    read_opt(j, "association_rounds", c.association_rounds);
    if (j.contains("solver")) {
      const Json& s = j.at("solver");
      reject_unknown(s, {"max_iterations", "function_tolerance", "gradient_tolerance", "initial_lambda"}, "solver");
      read_opt(s, "max_iterations", c.solver.max_iterations);
      read_opt(s, "function_tolerance", c.solver.function_tolerance);
      read_opt(s, "gradient_tolerance", c.solver.gradient_tolerance);
      read_opt(s, "initial_lambda", c.solver.initial_lambda);
    }
    read_opt(j, "init_duration", c.init_duration);
    if (j.contains("prior")) {
      const Json& p = j.at("prior");
      reject_unknown(p,
                     {"roll_pitch", "yaw", "position", "yaw_gauge", "position_gauge", "velocity", "gyro_bias",
                      "accel_bias"},
                     "prior");
      read_opt(p, "roll_pitch", c.prior.roll_pitch);
      read_opt(p, "yaw", c.prior.yaw);
      read_opt(p, "position", c.prior.position);
      read_opt(p, "yaw_gauge", c.prior.yaw_gauge);
      read_opt(p, "position_gauge", c.prior.position_gauge);
      read_opt(p, "velocity", c.prior.velocity);
      read_opt(p, "gyro_bias", c.prior.gyro_bias);
      read_opt(p, "accel_bias", c.prior.accel_bias);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("estimator config: ") + e.what());
  }
}

inline EstimatorConfig from_json_config(const std::filesystem::path& path) {
  EstimatorConfig c;
  from_json(read_json(path), c);
  return c;
}

/// Flat `key=value` report.
inline void write_report(const std::filesystem::path& path, const eval::EvalResult& r) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const Mat3& rot = r.transform.rotation;
  const Vec3& t = r.transform.translation;
  out << "alignment=" << eval::to_string(r.alignment) << '\n'
      << "matched=" << r.matched << '\n'
      << "rmse_pos_m=" << fmt(r.rmse_position) << '\n'
      << "rmse_rot_deg=" << fmt(r.rmse_rotation) << '\n'
      << "max_pos_m=" << fmt(r.max_position) << '\n'
      << "transform_rotation=";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out << (i || j ? "," : "") << fmt(rot(i, j));
  }
  out << '\n' << "transform_translation=" << fmt(t.x()) << ',' << fmt(t.y()) << ',' << fmt(t.z()) << '\n';
}

/// Per-timestamp errors, including the per-axis position and rotation errors
/// after alignment.
inline void write_error_series(const std::filesystem::path& path, const std::vector<eval::PoseSample>& est,
                               const std::vector<eval::PoseSample>& ref, const eval::EvalResult& r,
                               double tolerance = 0.01) {
  CsvWriter w(path, "t,ex,ey,ez,eroll_deg,epitch_deg,eyaw_deg,pos_err_m,rot_err_deg");
  const auto pairs = eval::associate(est, ref, tolerance);
  const Mat3& a = r.transform.rotation;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const Vec3 e = a * est[i].p + r.transform.translation - ref[j].p;
    const Vec3 d = geometry::log_so3(ref[j].q.toRotationMatrix().transpose() * a * est[i].q.toRotationMatrix()) *
                   (180.0 / std::numbers::pi);
    w.row(est[i].t, e.x(), e.y(), e.z(), d.x(), d.y(), d.z(), r.samples[k].position_error,
          r.samples[k].rotation_error);
  }
}

}  // namespace liro

#endif  // LIRO_CONFIG_IO_HPP
