#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "mobileprint/io.hpp"

namespace fs = std::filesystem;
using namespace mobileprint;

namespace {

struct Options {
  fs::path scenario;
  std::optional<std::uint64_t> seed;
  std::optional<int> laps;
  std::optional<fs::path> out;
  bool no_print = false;
  fs::path report;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--scenario", o.scenario, "Scenario JSON file")->required();
  cmd->add_option("--seed", o.seed, "Override the simulation seed");
  cmd->add_option("--laps", o.laps, "Air laps with --no-print, else number of layers to print");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--no-print", o.no_print, "Drive the lap pattern without extruding");
}

Scenario prepare(const Options& o) {
  Scenario s = load_scenario(o.scenario);
  if (o.seed) s.loop.sim.seed = *o.seed;
  if (o.out) s.output_dir = *o.out;
  if (o.no_print) s.print = false;
  if (o.laps) {
    if (*o.laps < 1) throw ConfigError("--laps must be >= 1");
    if (s.print)
      s.structure.height = std::min(s.structure.height, *o.laps * s.structure.layer_height);
    else
      s.laps = *o.laps;
  }
  return s;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

std::optional<MetricsResult> try_metrics(const SimReport& r, double margin) {
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(r.size());
  for (const auto& p : r.true_poses) pts.push_back(p.translation());
  try {
    return evaluate_path(pts, r.desired_path(), margin);
  } catch (const InsufficientDataError&) {
    return std::nullopt;
  }
}

int cmd_plan(const Options& o) {
  const Scenario s = prepare(o);
  const PrintPlan plan = plan_for(s);
  const auto& base = plan.base;
  const JointVector q0 = solve_initial_configuration(
      s.chain, world_to_base(base[0], plan.nozzle.path[0]), s.chain.ik_seed, s.loop.ik);
  const ArmTrajectory arm = differential_ik(s.chain, plan, base, q0, s.loop.ik);

  write_text_file(s.output_dir / "plan.csv", render([&](std::ostream& out) { write_plan_csv(out, plan); }));
  write_text_file(s.output_dir / "joints.csv", render([&](std::ostream& out) { write_joints_csv(out, arm); }));
  write_text_file(s.output_dir / "plan_summary.json", dump(plan_summary(plan)));
  const auto summary = plan_summary(plan);
  std::cout << "plan: " << summary["samples"] << " samples, " << summary["duration_s"] << " s, "
            << summary["layer_count"] << " layers -> " << s.output_dir.string() << "\n";
  return 0;
}

int cmd_simulate(const Options& o) {
  const Scenario s = prepare(o);
  try {
    const PrintPlan plan = plan_for(s);
    const MarkerMap map = markers_for(s, plan);
    const SimReport r = run_closed_loop(plan, s.chain, map, s.loop);
    const auto metrics = try_metrics(r, s.corner_margin);

    const fs::path& dir = s.output_dir;
    write_text_file(dir / "trajectory.csv", render([&](std::ostream& out) { write_trajectory_csv(out, r); }));
    write_text_file(dir / "estimator.csv", render([&](std::ostream& out) { write_estimator_trace(out, r.estimator); }));
    write_text_file(dir / "controller.csv", render([&](std::ostream& out) { write_controller_trace(out, r.controller); }));
    const auto summary = sim_summary(s, r, metrics);
    write_text_file(dir / "summary.json", dump(summary));
    if (metrics) {
      write_text_file(dir / "metrics.json", dump(metrics_json(*metrics)));
      std::vector<Eigen::Vector2d> pts;
      for (const auto& p : r.true_poses) pts.push_back(p.translation());
      write_text_file(dir / "plot.svg", render([&](std::ostream& out) {
                        write_metrics_svg(out, pts, r.desired_path(), *metrics);
                      }));
      std::cout << "simulate: " << r.size() << " steps, e_max " << metrics->precision.e_max * 1e3
                << " mm, e_mean " << metrics->precision.e_mean * 1e3 << " mm, accuracy "
                << metrics->accuracy * 1e3 << " mm -> " << dir.string() << "\n";
    } else {
      std::cout << "simulate: " << r.size() << " steps -> " << dir.string() << "\n";
    }
    return 0;
  } catch (const Error& e) {
    nlohmann::json fault = {{"status", "fault"},
                            {"category", exit_code_for(e.category())},
                            {"message", e.what()}};
    if (e.index()) fault["index"] = *e.index();
    write_text_file(s.output_dir / "summary.json", dump(fault));
    throw;
  }
}

int cmd_metrics(const Options& o) {
  double margin = kDefaultCornerMargin;
  fs::path dir = o.out.value_or(o.report.parent_path());
  if (!o.scenario.empty()) {
    const Scenario s = prepare(o);
    margin = s.corner_margin;
    if (!o.out) dir = s.output_dir;
  }
  const TrajectoryTable t = read_trajectory_csv(o.report);
  const PosePath desired(t.dt, t.desired);
  const MetricsResult m = evaluate_path(t.measured, desired, margin);
  write_text_file(dir / "metrics.json", dump(metrics_json(m)));
  write_text_file(dir / "metrics.svg",
                  render([&](std::ostream& out) { write_metrics_svg(out, t.measured, desired, m); }));
  std::cout << "metrics: e_max " << m.precision.e_max * 1e3 << " mm, e_mean "
            << m.precision.e_mean * 1e3 << " mm, accuracy " << m.accuracy * 1e3 << " mm\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile 3D printing planner and simulator"};
  app.require_subcommand(1);
  Options plan_o, sim_o, met_o;
  auto* plan = app.add_subcommand("plan", "Plan nozzle, base and joint trajectories");
  add_common(plan, plan_o);
  auto* sim = app.add_subcommand("simulate", "Run the closed-loop print-while-moving simulation");
  add_common(sim, sim_o);
  auto* met = app.add_subcommand("metrics", "Precision and accuracy of a trajectory CSV");
  met->add_option("--report", met_o.report, "trajectory.csv written by simulate")->required();
  met->add_option("--scenario", met_o.scenario, "Scenario JSON (corner margin, output dir)");
  met->add_option("--out", met_o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*plan) return cmd_plan(plan_o);
    if (*sim) return cmd_simulate(sim_o);
    if (*met) return cmd_metrics(met_o);
  } catch (const Error& e) {
    std::cerr << "mobileprint: error: " << e.what();
    if (e.index()) std::cerr << " [index " << *e.index() << "]";
    std::cerr << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "mobileprint: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
