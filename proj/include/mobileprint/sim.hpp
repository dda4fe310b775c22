#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mobileprint/arm.hpp"
#include "mobileprint/core.hpp"
#include "mobileprint/geometry.hpp"
#include "mobileprint/localization.hpp"
#include "mobileprint/mpc.hpp"
#include "mobileprint/toolpath.hpp"

namespace mobileprint {

struct PlantState {
  Pose2 true_pose;
  std::int64_t step = 0;
};

// Rear-mounted camera 0.5 m above the ground looking straight down.
Transform3 default_base_T_camera();

struct SimConfig {
  double dt = 0.025;
  Eigen::Vector3d process_noise_std = Eigen::Vector3d::Constant(1e-3);  // m, m, rad per step
  double detection_position_std = 0.01;                                 // m
  double detection_angle_std = 0.01;                                    // rad
  int latency_steps = 2;
  bool variable_latency = false;  // uniform over [0, max_latency_steps] per detection
  int max_latency_steps = 4;
  double camera_fov = 1.6;  // full cone angle, rad
  double camera_range = 1.0;
  Transform3 base_T_camera = default_base_T_camera();
  std::uint64_t seed = 1;
  int visibility_window = 20;
  // From this step on the camera sees nothing (emulates an emptied map).
  std::optional<std::int64_t> blackout_from_step;
  Eigen::Vector3d initial_offset = Eigen::Vector3d::Zero();  // true start relative to plan
  Eigen::Matrix3d initial_covariance = Eigen::Matrix3d::Identity() * 1e-4;

  void validate() const;
  // Noise-free, latency-free copy.
  SimConfig noiseless() const;
};

// Standard-normal source with a fixed draw order per engine.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
  double normal() { return dist_(engine_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

PlantState plant_step(const PlantState& state, const ControlInput& u, const SimConfig& cfg,
                      NoiseSource& rng);

// True marker-to-camera relations for markers inside the camera cone and
// range, perturbed so the implied base pose carries N(0, diag(s_p^2, s_p^2,
// s_a^2)) error. The camera pose is world_T_base * base_T_camera.
std::vector<MarkerDetection> camera_observe(const PlantState& state, const MarkerMap& map,
                                            const SimConfig& cfg, NoiseSource& rng);
std::size_t visible_marker_count(const Pose2& base, const MarkerMap& map, const SimConfig& cfg);

// Markers every `spacing` metres along a curve, rotated to its heading and
// shifted `lateral_offset` to the right of travel.
MarkerMap markers_along(const PlanarCurve& curve, double spacing, double lateral_offset = 0.0,
                        int first_id = 0);

struct ClosedLoopConfig {
  SimConfig sim;
  MpcConfig mpc;
  NoiseModel noise;  // filter Q, R
  DiffIkOptions ik;
};

struct SimReport {
  double dt = 0.0;
  std::vector<Pose2> true_poses;
  std::vector<Pose2> estimated_poses;
  std::vector<Pose2> desired_poses;
  std::vector<ControlInput> commanded;
  std::vector<Eigen::Vector3d> nozzle_world;   // FK through the true base pose
  std::vector<Eigen::Vector3d> nozzle_target;  // planned nozzle positions
  std::vector<std::size_t> visible_markers;    // detections fused at each step
  std::vector<JointVector> joints;
  std::vector<EstimatorTraceRow> estimator;
  std::vector<ControllerTraceRow> controller;
  std::vector<double> optimal_cost;
  std::vector<double> nees;

  std::size_t size() const { return true_poses.size(); }
  PosePath true_path() const { return {dt, true_poses}; }
  PosePath estimated_path() const { return {dt, estimated_poses}; }
  PosePath desired_path() const { return {dt, desired_poses}; }
  PointPath nozzle_world_path() const { return {dt, nozzle_world}; }
};

// Consistency checks run before any stepping: dt agreement, reach and
// marker coverage of every desired base pose. Throws ConfigError.
void check_scenario(const PrintPlan& plan, const KinematicChain& chain, const MarkerMap& map,
                    const ClosedLoopConfig& cfg);

// Print-while-moving loop. Nozzle position at step k is evaluated against
// the true base pose of the same step, before the base moves on.
SimReport run_closed_loop(const PrintPlan& plan, const KinematicChain& chain, const MarkerMap& map,
                          const ClosedLoopConfig& cfg);

}  // namespace mobileprint
