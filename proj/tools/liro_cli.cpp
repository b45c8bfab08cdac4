#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "liro/config_io.hpp"
#include "liro/dataset_io.hpp"
#include "liro/estimator.hpp"
#include "liro/evaluation.hpp"
#include "liro/plot.hpp"
#include "liro/simulator.hpp"

namespace fs = std::filesystem;
using namespace liro;

namespace {

int anchors_for_mode(const std::string& mode) {
  if (mode == "lio") return 0;
  if (mode == "liro2") return 2;
  if (mode == "liro3") return 3;
  throw Error(ErrorKind::kValidation, "mode must be lio, liro2 or liro3, got '" + mode + "'");
}

const char* mode_name(int anchors) {
  switch (anchors) {
    case 0: return "LIO";
    case 2: return "LIRO2";
    case 3: return "LIRO3";
  }
  return "?";
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

void write_solver_log(const fs::path& path, const EstimatorResult& r) {
  CsvWriter w(path, "solve,iterations,initial_cost,final_cost,imu,uwb,lidar,prior,converged,termination");
  for (std::size_t k = 0; k < r.reports.size(); ++k) {
    const SolverReport& s = r.reports[k];
    w.row(static_cast<int>(k), s.iterations, s.initial_cost, s.final_cost, s.final_breakdown[0], s.final_breakdown[1],
          s.final_breakdown[2], s.final_breakdown[3], s.converged ? 1 : 0, s.termination);
  }
}

void write_timings(const fs::path& path, const EstimatorResult& r) {
  CsvWriter w(path, "t,step_ms,full_window");
  for (const StepTiming& s : r.timings) w.row(s.t, s.milliseconds, s.full_window ? 1 : 0);
}

plot::Series top_down(const std::string& name, const std::vector<StateNode>& traj) {
  plot::Series s{name, {}};
  for (const StateNode& x : traj) s.points.emplace_back(x.p.x(), x.p.y());
  return s;
}

// --- simulate ------------------------------------------------------------------------

struct SimulateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  bool print_defaults = false;
};

int cmd_simulate(const SimulateArgs& a) {
  sim::SimulationSpec spec;
  if (a.print_defaults) {
    std::cout << to_json(spec).dump(2) << '\n';
    return 0;
  }
  if (a.out.empty()) throw Error(ErrorKind::kValidation, "--out is required");
  if (!a.spec.empty()) {
    try {
      from_json(read_json(a.spec), spec);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, a.spec + ": " + e.what());
    }
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.duration) spec.trajectory.duration = *a.duration;
  const sim::Dataset d = sim::generate(spec);
  write_dataset(a.out, d);
  std::size_t outliers = std::count(d.range_outlier.begin(), d.range_outlier.end(), true);
  std::size_t features = 0;
  for (const auto& c : d.clouds) features += c.planes.size() + c.edges.size();
  std::cout << "dataset " << a.out << '\n'
            << "  seed " << spec.seed << ", duration " << spec.trajectory.duration << " s\n"
            << "  imu samples     " << d.imu.size() << '\n'
            << "  uwb ranges      " << d.ranges.size() << " (" << outliers << " outliers)\n"
            << "  feature clouds  " << d.clouds.size() << " (" << features << " features)\n"
            << "  anchor ranging  " << d.anchor_ranging.size() << " records\n"
            << "  anchors         " << d.world.anchors.size() << ", nodes " << d.world.nodes.size() << '\n';
  return 0;
}

// --- run ------------------------------------------------------------------------------

struct RunArgs {
  std::string dataset;
  std::string out;
  std::string mode;
  std::optional<int> anchors;
  std::optional<std::size_t> window;
  std::string config;
  bool print_defaults = false;
};

EstimatorConfig resolve_config(const RunArgs& a) {
  EstimatorConfig cfg;
  if (!a.config.empty()) cfg = from_json_config(a.config);
  if (!a.mode.empty()) cfg.anchors = anchors_for_mode(a.mode);
  if (a.anchors) {
    if (!a.mode.empty() && *a.anchors != cfg.anchors) {
      throw Error(ErrorKind::kValidation, "--mode and --anchors disagree");
    }
    cfg.anchors = *a.anchors;
  }
  if (a.window) cfg.window = *a.window;
  return cfg;
}

int cmd_run(const RunArgs& a) {
  if (a.print_defaults) {
    std::cout << to_json(EstimatorConfig{}).dump(2) << '\n';
    return 0;
  }
  if (a.dataset.empty() || a.out.empty()) throw Error(ErrorKind::kValidation, "--dataset and --out are required");
  const EstimatorConfig cfg = resolve_config(a);
  const sim::Dataset d = read_dataset(a.dataset);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "config.json", to_json(cfg));
  EstimatorResult r;
  try {
    r = run_estimator(cfg, d);
  } catch (const DivergedError& e) {
    const SolverReport& rep = e.report();
    std::cerr << "error: solver diverged: " << e.what() << "\n  iterations " << rep.iterations << ", initial cost "
              << rep.initial_cost << ", termination " << rep.termination << '\n';
    return 3;
  }
  write_trajectory(fs::path(a.out) / "trajectory.csv", r.trajectory);
  write_solver_log(fs::path(a.out) / "solver_log.csv", r);
  write_timings(fs::path(a.out) / "timing.csv", r);
  std::vector<double> ms;
  for (const auto& t : r.timings) ms.push_back(t.milliseconds);
  std::cout << mode_name(cfg.anchors) << " on " << a.dataset << '\n'
            << "  nodes written   " << r.trajectory.size() << '\n'
            << "  ranges used     " << r.ranges_used << '\n';
  for (const auto& [reason, n] : r.rejections) std::cout << "  rejected (" << uwb::to_string(reason) << ")  " << n << '\n';
  std::cout << "  median step     " << median(ms) << " ms\n";
  return 0;
}

// --- eval -----------------------------------------------------------------------------

struct EvalArgs {
  std::string estimate;
  std::string groundtruth;
  std::string align = "se3";
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const auto est = eval::poses_of(read_trajectory(a.estimate));
  const auto ref = eval::poses_of(read_trajectory(a.groundtruth));
  eval::EvalConfig cfg;
  cfg.alignment = eval::parse_alignment(a.align);
  const eval::EvalResult r = eval::evaluate(est, ref, cfg);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_report(fs::path(a.out) / "report.txt", r);
    write_error_series(fs::path(a.out) / "errors.csv", est, ref, r, cfg.time_tolerance);
  }
  std::cout << "alignment " << eval::to_string(r.alignment) << ", matched " << r.matched << '\n'
            << "rmse_pos_m " << fmt(r.rmse_position) << '\n'
            << "rmse_rot_deg " << fmt(r.rmse_rotation) << '\n';
  return 0;
}

// --- plot -----------------------------------------------------------------------------

struct PlotArgs {
  std::string kind = "trajectory";
  std::vector<std::string> inputs;
  std::vector<std::string> labels;
  std::string out;
  std::string title;
};

int cmd_plot(const PlotArgs& a) {
  if (a.inputs.empty()) throw Error(ErrorKind::kValidation, "at least one --input is required");
  if (!a.labels.empty() && a.labels.size() != a.inputs.size()) {
    throw Error(ErrorKind::kValidation, "give one --label per --input");
  }
  auto name = [&](std::size_t i) { return a.labels.empty() ? fs::path(a.inputs[i]).stem().string() : a.labels[i]; };
  std::vector<plot::Series> series;
  plot::PlotStyle style;
  style.title = a.title;
  if (a.kind == "trajectory") {
    for (std::size_t i = 0; i < a.inputs.size(); ++i) series.push_back(top_down(name(i), read_trajectory(a.inputs[i])));
    style.x_label = "x [m]";
    style.y_label = "y [m]";
    style.equal_aspect = true;
  } else if (a.kind == "rotation-error") {
    static const char* axes[] = {"roll", "pitch", "yaw"};
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
      const auto rows = read_csv(a.inputs[i], 9);
      for (int k = 0; k < 3; ++k) {
        plot::Series s{name(i) + " " + axes[k], {}};
        for (const auto& r : rows) s.points.emplace_back(parse_double(r[0]), parse_double(r[4 + k]));
        series.push_back(std::move(s));
      }
    }
    style.x_label = "t [s]";
    style.y_label = "rotation error [deg]";
  } else {
    throw Error(ErrorKind::kValidation, "plot kind must be trajectory or rotation-error");
  }
  write_text(a.out, plot::line_plot(series, style));
  return 0;
}

// --- compare --------------------------------------------------------------------------

struct CompareArgs {
  std::string dataset;
  std::string out;
  std::optional<std::size_t> window;
  std::string config;
};

int cmd_compare(const CompareArgs& a) {
  if (a.dataset.empty() || a.out.empty()) throw Error(ErrorKind::kValidation, "--dataset and --out are required");
  EstimatorConfig base;
  if (!a.config.empty()) base = from_json_config(a.config);
  if (a.window) base.window = *a.window;
  const sim::Dataset d = read_dataset(a.dataset);
  const auto ref = eval::poses_of(d.groundtruth);
  fs::create_directories(a.out);

  struct Column {
    std::string name;
    eval::EvalResult aligned, unaligned;
    double median_ms = 0.0;
  };
  std::vector<Column> cols;
  std::vector<plot::Series> series{top_down("groundtruth", d.groundtruth)};
  for (int anchors : {0, 2, 3}) {
    EstimatorConfig cfg = base;
    cfg.anchors = anchors;
    const EstimatorResult r = run_estimator(cfg, d);
    std::string lower = mode_name(anchors);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    write_trajectory(fs::path(a.out) / (lower + ".csv"), r.trajectory);
    const auto est = eval::poses_of(r.trajectory);
    Column c{mode_name(anchors), eval::evaluate(est, ref, {eval::Alignment::kSe3}),
             eval::evaluate(est, ref, {eval::Alignment::kNone}), 0.0};
    std::vector<double> ms;
    for (const auto& t : r.timings) ms.push_back(t.milliseconds);
    c.median_ms = median(ms);
    cols.push_back(std::move(c));
    series.push_back(top_down(mode_name(anchors), r.trajectory));
  }

  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  std::string table = "| metric | LIO | LIRO2 | LIRO3 |\n|---|---|---|---|\n";
  auto line = [&](const std::string& label, auto get) {
    table += "| " + label + " |";
    for (const Column& c : cols) table += " " + cell(get(c)) + " |";
    table += "\n";
  };
  line("RMSE_pos aligned [m]", [](const Column& c) { return c.aligned.rmse_position; });
  line("RMSE_pos unaligned [m]", [](const Column& c) { return c.unaligned.rmse_position; });
  line("RMSE_rot aligned [deg]", [](const Column& c) { return c.aligned.rmse_rotation; });
  line("median step [ms]", [](const Column& c) { return c.median_ms; });
  write_text(fs::path(a.out) / "comparison.md", table);
  {
    CsvWriter w(fs::path(a.out) / "comparison.csv", "metric,LIO,LIRO2,LIRO3");
    w.row("rmse_pos_aligned_m", cols[0].aligned.rmse_position, cols[1].aligned.rmse_position,
          cols[2].aligned.rmse_position);
    w.row("rmse_pos_unaligned_m", cols[0].unaligned.rmse_position, cols[1].unaligned.rmse_position,
          cols[2].unaligned.rmse_position);
    w.row("rmse_rot_aligned_deg", cols[0].aligned.rmse_rotation, cols[1].aligned.rmse_rotation,
          cols[2].aligned.rmse_rotation);
  }
  plot::PlotStyle style;
  style.title = "Trajectories (top-down, unaligned)";
  style.x_label = "x [m]";
  style.y_label = "y [m]";
  style.equal_aspect = true;
  write_text(fs::path(a.out) / "trajectories.svg", plot::line_plot(series, style));
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lidar-inertial-ranging odometry: simulate, estimate, evaluate"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset directory");
  sim_cmd->add_option("--spec", sa.spec, "simulation spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", sa.out, "output dataset directory");
  sim_cmd->add_option("--seed", sa.seed, "override the spec seed");
  sim_cmd->add_option("--duration", sa.duration, "override the trajectory duration [s]");
  sim_cmd->add_flag("--print-defaults", sa.print_defaults, "print the default spec and exit");

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "run the estimator on a dataset");
  run_cmd->add_option("--dataset", ra.dataset, "dataset directory");
  run_cmd->add_option("--out", ra.out, "output directory");
  run_cmd->add_option("--mode", ra.mode, "lio | liro2 | liro3")->check(CLI::IsMember({"lio", "liro2", "liro3"}));
  run_cmd->add_option("--anchors", ra.anchors, "anchors fused (0, 2 or 3)")->check(CLI::IsMember({0, 2, 3}));
  run_cmd->add_option("--window", ra.window, "window size M")->check(CLI::PositiveNumber);
  run_cmd->add_option("--config", ra.config, "estimator config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_flag("--print-defaults", ra.print_defaults, "print the default estimator config and exit");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "trajectory error against ground truth");
  eval_cmd->add_option("--estimate", ea.estimate, "estimated trajectory CSV")->required();
  eval_cmd->add_option("--groundtruth", ea.groundtruth, "reference trajectory CSV")->required();
  eval_cmd->add_option("--align", ea.align, "se3 | none")->check(CLI::IsMember({"se3", "none"}));
  eval_cmd->add_option("--out", ea.out, "directory for report.txt and errors.csv");

  PlotArgs pa;
  auto* plot_cmd = app.add_subcommand("plot", "SVG line plots of trajectories or error series");
  plot_cmd->add_option("--kind", pa.kind, "trajectory | rotation-error")
      ->check(CLI::IsMember({"trajectory", "rotation-error"}));
  plot_cmd->add_option("--input", pa.inputs, "trajectory CSV, or errors.csv from eval")->required();
  plot_cmd->add_option("--label", pa.labels, "legend entry per input");
  plot_cmd->add_option("--title", pa.title, "plot title");
  plot_cmd->add_option("--out", pa.out, "output SVG")->required();

  CompareArgs ca;
  auto* cmp_cmd = app.add_subcommand("compare", "run LIO, LIRO2 and LIRO3 and tabulate errors");
  cmp_cmd->add_option("--dataset", ca.dataset, "dataset directory");
  cmp_cmd->add_option("--out", ca.out, "output directory");
  cmp_cmd->add_option("--window", ca.window, "window size M")->check(CLI::PositiveNumber);
  cmp_cmd->add_option("--config", ca.config, "estimator config (JSON)")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim_cmd) return cmd_simulate(sa);
    if (*run_cmd) return cmd_run(ra);
    if (*eval_cmd) return cmd_eval(ea);
    if (*plot_cmd) return cmd_plot(pa);
    if (*cmp_cmd) return cmd_compare(ca);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
