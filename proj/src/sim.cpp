#include "mobileprint/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mobileprint {

namespace {

std::string at_step(const std::string& what, std::int64_t k) {
  std::ostringstream msg;
  msg << what << " (step " << k << ")";
  return msg.str();
}

bool in_view(const Transform3& world_T_camera, const Transform3& world_T_marker,
             const SimConfig& cfg) {
  const Eigen::Vector3d ray = world_T_marker.translation - world_T_camera.translation;
  const double range = ray.norm();
  if (range > cfg.camera_range || range < 1e-9) return false;
  const Eigen::Vector3d optical = world_T_camera.rotation.col(2);
  return std::acos(std::clamp(optical.dot(ray) / range, -1.0, 1.0)) <= 0.5 * cfg.camera_fov;
}

}  // namespace

Transform3 default_base_T_camera() {
  return Transform3::from_rpy(kPi, 0.0, 0.0, {-0.4, 0.0, 0.5});
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgumentError("sim: dt must be positive");
  if ((process_noise_std.array() < 0.0).any() || detection_position_std < 0.0 ||
      detection_angle_std < 0.0)
    throw InvalidArgumentError("sim: noise standard deviations must be non-negative");
  if (latency_steps < 0 || max_latency_steps < 0 || (!variable_latency && latency_steps > max_latency_steps))
    throw InvalidArgumentError("sim: latency must lie in [0, max_latency_steps]");
  if (!(camera_fov > 0.0) || !(camera_range > 0.0))
    throw InvalidArgumentError("sim: camera fov and range must be positive");
  if (visibility_window < 0) throw InvalidArgumentError("sim: visibility window must be >= 0");
  if (!base_T_camera.is_rigid()) throw InvalidArgumentError("sim: camera mount is not rigid");
}

SimConfig SimConfig::noiseless() const {
  SimConfig c = *this;
  c.process_noise_std.setZero();
  c.detection_position_std = 0.0;
  c.detection_angle_std = 0.0;
  c.latency_steps = 0;
  c.variable_latency = false;
  return c;
}

PlantState plant_step(const PlantState& state, const ControlInput& u, const SimConfig& cfg,
                      NoiseSource& rng) {
  const Pose2& x = state.true_pose;
  Eigen::Vector3d w;
  for (int i = 0; i < 3; ++i) w[i] = cfg.process_noise_std[i] * rng.normal();
  return {Pose2(x.x() + cfg.dt * u.vx + w.x(), x.y() + cfg.dt * u.vy + w.y(),
                x.theta() + cfg.dt * u.omega + w.z()),
          state.step + 1};
}

std::size_t visible_marker_count(const Pose2& base, const MarkerMap& map, const SimConfig& cfg) {
  const Transform3 world_T_camera = embed_se2(base) * cfg.base_T_camera;
  return static_cast<std::size_t>(std::count_if(
      map.markers().begin(), map.markers().end(),
      [&](const Marker& m) { return in_view(world_T_camera, m.world_T_marker, cfg); }));
}

std::vector<MarkerDetection> camera_observe(const PlantState& state, const MarkerMap& map,
                                            const SimConfig& cfg, NoiseSource& rng) {
  std::vector<MarkerDetection> out;
  if (cfg.blackout_from_step && state.step >= *cfg.blackout_from_step) return out;
  const Transform3 world_T_base = embed_se2(state.true_pose);
  const Transform3 world_T_camera = world_T_base * cfg.base_T_camera;
  for (const auto& m : map.markers()) {
    if (!in_view(world_T_camera, m.world_T_marker, cfg)) continue;
    // Perturb the base in its own frame; isotropic xy noise stays isotropic
    // in the world frame, so the implied pose error has the stated std.
    const Pose2 delta(cfg.detection_position_std * rng.normal(),
                      cfg.detection_position_std * rng.normal(),
                      cfg.detection_angle_std * rng.normal());
    const Transform3 noisy_camera = world_T_base * embed_se2(delta) * cfg.base_T_camera;
    out.push_back({m.id, m.world_T_marker.inverse() * noisy_camera, state.step});
  }
  return out;
}

MarkerMap markers_along(const PlanarCurve& curve, double spacing, double lateral_offset,
                        int first_id) {
  if (!(spacing > 0.0)) throw InvalidArgumentError("marker spacing must be positive");
  MarkerMap map;
  const double length = curve.length();
  const auto count = static_cast<int>(std::floor(length / spacing + 1e-9)) + (curve.closed() ? 0 : 1);
  for (int i = 0; i < count; ++i) {
    const Pose2 p = curve.pose_at(spacing * i);
    const Eigen::Vector2d right(std::sin(p.theta()), -std::cos(p.theta()));
    const Eigen::Vector2d at = p.translation() + lateral_offset * right;
    map.add(first_id + i, embed_se2(Pose2(at.x(), at.y(), p.theta())));
  }
  return map;
}

void check_scenario(const PrintPlan& plan, const KinematicChain& chain, const MarkerMap& map,
                    const ClosedLoopConfig& cfg) {
  cfg.sim.validate();
  cfg.mpc.validate();
  chain.validate();
  if (std::abs(plan.base.dt() - cfg.sim.dt) > 1e-12 || std::abs(cfg.mpc.dt - cfg.sim.dt) > 1e-12)
    throw ConfigError("plan, controller and simulator must share one dt");
  if (plan.reach.max > chain.reach_max() + 1e-9) {
    std::ostringstream msg;
    msg << "plan reach " << plan.reach.max << " m exceeds the arm reach " << chain.reach_max() << " m";
    throw ConfigError(msg.str());
  }
  if (map.empty()) throw ConfigError("marker map is empty");
  for (std::size_t k = 0; k < plan.base.size(); ++k)
    if (visible_marker_count(plan.base[k], map, cfg.sim) == 0) {
      std::ostringstream msg;
      msg << "no marker visible from planned base pose " << k;
      throw ConfigError(msg.str(), k);
    }
}

SimReport run_closed_loop(const PrintPlan& plan, const KinematicChain& chain, const MarkerMap& map,
                          const ClosedLoopConfig& cfg) {
  check_scenario(plan, chain, map, cfg);
  const SimConfig& sc = cfg.sim;
  const PosePath& desired = plan.base;
  const PointPath& nozzle = plan.nozzle.path;
  const std::size_t steps = desired.size();
  const StackedDynamics dyn = build_stacked_dynamics(cfg.mpc);

  NoiseSource plant_rng(sc.seed);
  NoiseSource camera_rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);

  const Pose2& start = desired[0];
  PlantState plant{Pose2(start.x() + sc.initial_offset.x(), start.y() + sc.initial_offset.y(),
                         start.theta() + sc.initial_offset.z()),
                   0};
  const int max_delay = sc.variable_latency ? sc.max_latency_steps : sc.latency_steps;
  Localizer loc(map, sc.base_T_camera.inverse(), cfg.noise, sc.dt,
                static_cast<std::size_t>(max_delay) + 1, {start, sc.initial_covariance});

  SimReport r;
  r.dt = sc.dt;
  for (auto* v : {&r.true_poses, &r.estimated_poses, &r.desired_poses}) v->reserve(steps);
  r.commanded.reserve(steps);
  r.nozzle_world.reserve(steps);
  r.nozzle_target.reserve(steps);

  struct Pending {
    std::int64_t due;
    MarkerDetection det;
  };
  std::vector<Pending> queue;
  std::int64_t last_seen = -1;
  JointVector q;
  int ik_failures = 0;
  std::size_t ik_run_start = 0;

  for (std::size_t kk = 0; kk < steps; ++kk) {
    const auto k = static_cast<std::int64_t>(kk);
    try {
      // Camera exposure at k, delivered after the latency.
      for (auto& det : camera_observe(plant, map, sc, camera_rng)) {
        const int lat = sc.variable_latency ? camera_rng.uniform_int(0, sc.max_latency_steps)
                                            : sc.latency_steps;
        queue.push_back({k + lat, det});
      }
      std::vector<MarkerDetection> due;
      const auto split = std::stable_partition(queue.begin(), queue.end(),
                                               [k](const Pending& p) { return p.due > k; });
      for (auto it = split; it != queue.end(); ++it) due.push_back(it->det);
      queue.erase(split, queue.end());

      if (k > 0) loc.predict(r.commanded.back());
      const std::size_t fused = loc.update(due, k);
      if (fused > 0) last_seen = k;
      if (k - last_seen > sc.visibility_window)
        throw VisibilityFault(at_step("no marker detection within the visibility window", k),
                              static_cast<std::size_t>(k));

      const Pose2 estimate = loc.state().mean;

      // Arm: track the planned nozzle point against the estimated base.
      const Eigen::Vector3d target = world_to_base(estimate, nozzle[kk]);
      if (kk == 0) {
        q = solve_initial_configuration(chain, target, chain.ik_seed, cfg.ik);
      } else {
        const IkStep s = diff_ik_step(chain, q, target, sc.dt, cfg.ik);
        q = s.q;
        if (s.converged) {
          ik_failures = 0;
        } else {
          if (ik_failures == 0) ik_run_start = kk;
          if (++ik_failures > cfg.ik.max_consecutive_failures)
            throw IkFailureError(at_step("differential IK lost the nozzle target", k), ik_run_start);
        }
      }
      const Eigen::Vector3d tip = forward_kinematics(chain, q).translation;

      const MpcResult ctl = mpc_solve(cfg.mpc, dyn, estimate, desired, k);

      r.true_poses.push_back(plant.true_pose);
      r.estimated_poses.push_back(estimate);
      r.desired_poses.push_back(desired[kk]);
      r.commanded.push_back(ctl.u);
      r.nozzle_world.push_back(base_to_world(plant.true_pose, tip));
      r.nozzle_target.push_back(nozzle[kk]);
      r.visible_markers.push_back(fused);
      r.joints.push_back(q);
      r.estimator.push_back({k, loc.state(), fused});
      r.controller.push_back({k, ctl.u, ctl.qp.iterations, ctl.qp.residuals.max()});
      r.optimal_cost.push_back(ctl.optimal_cost);
      r.nees.push_back(mobileprint::nees(loc.state(), plant.true_pose));

      loc.record_control(k, ctl.u);
      plant = plant_step(plant, ctl.u, sc, plant_rng);
    } catch (const SolverFailureError& e) {
      throw SolverFailureError(at_step(e.what(), k), e.best());
    } catch (const Error& e) {
      if (e.index()) throw;
      throw Error(e.category(), at_step(e.what(), k), kk);
    }
  }
  return r;
}

}  // namespace mobileprint
