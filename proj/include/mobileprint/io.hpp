#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mobileprint/arm.hpp"
#include "mobileprint/localization.hpp"
#include "mobileprint/metrics.hpp"
#include "mobileprint/mpc.hpp"
#include "mobileprint/sim.hpp"
#include "mobileprint/toolpath.hpp"

namespace mobileprint {

struct MarkerLayout {
  double spacing = 0.4;
  double lateral_offset = 0.0;
  std::vector<Marker> explicit_markers;  // overrides the layout when non-empty
};

// Everything a run needs, resolved from one scenario file. Relative paths
// in the file are taken relative to the file's directory.
struct Scenario {
  std::filesystem::path source;
  StructureSpec structure;
  PlanningOptions planning;
  std::filesystem::path chain_file;  // empty = built-in reference arm
  KinematicChain chain;
  MarkerLayout markers;
  ClosedLoopConfig loop;
  int laps = 15;  // air laps when not printing
  bool print = true;
  double corner_margin = kDefaultCornerMargin;
  std::filesystem::path output_dir = "out";
};

// Throws ConfigError (missing files, wrong types) or InvalidSpecError.
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Plan for the scenario: the full print, or `laps` air laps at first-layer
// height when not printing.
PrintPlan plan_for(const Scenario& s);
MarkerMap markers_for(const Scenario& s, const PrintPlan& plan);

void write_plan_csv(std::ostream& out, const PrintPlan& plan);
void write_joints_csv(std::ostream& out, const ArmTrajectory& traj);
nlohmann::json plan_summary(const PrintPlan& plan);

// One row per step: k,t,true_*,est_*,des_*,u*,nozzle_*,target_*,n_markers.
void write_trajectory_csv(std::ostream& out, const SimReport& r);
nlohmann::json sim_summary(const Scenario& s, const SimReport& r,
                           const std::optional<MetricsResult>& metrics);
nlohmann::json metrics_json(const MetricsResult& m);

struct TrajectoryTable {
  double dt = 0.0;
  std::vector<Eigen::Vector2d> measured;  // true base positions
  std::vector<Pose2> desired;
};

// Throws ParseError naming the offending line.
TrajectoryTable read_trajectory_csv(std::istream& in, const std::string& name = "<input>");
TrajectoryTable read_trajectory_csv(const std::filesystem::path& path);

// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mobileprint
