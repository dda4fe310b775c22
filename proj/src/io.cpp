#include "mobileprint/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mobileprint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("scenario: key '") + key + "' has the wrong type");
  }
}

Eigen::Vector3d vec3_or(const json& j, const char* key, const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3)
    throw ConfigError(std::string("scenario: '") + key + "' must be a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Eigen::Matrix3d diag_or(const json& j, const char* key, const Eigen::Matrix3d& fallback) {
  if (!j.contains(key)) return fallback;
  return vec3_or(j, key, Eigen::Vector3d::Zero()).asDiagonal();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

std::string csv_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Scenario scenario_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
  Scenario s;

  const json st = j.value("structure", json::object());
  const double height = get_or(st, "height", 0.1);
  const double layer = get_or(st, "layer_height", 0.01);
  const double infill = get_or(st, "infill_spacing", kDefaultInfillSpacing);
  if (st.contains("footprint")) {
    s.structure = StructureSpec::rectangle(1.0, 1.0, height, layer, infill);
    s.structure.footprint.clear();
    for (const auto& v : st.at("footprint")) {
      if (!v.is_array() || v.size() != 2) throw ConfigError("scenario: footprint vertices are [x, y]");
      s.structure.footprint.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
    s.structure.length = s.structure.width = 0.0;
  } else {
    s.structure = StructureSpec::rectangle(get_or(st, "length", 2.1), get_or(st, "width", 0.45),
                                           height, layer, infill);
  }

  const json pl = j.value("planning", json::object());
  s.planning.nozzle_speed = get_or(pl, "nozzle_speed", s.planning.nozzle_speed);
  s.planning.dt = get_or(pl, "dt", s.planning.dt);
  s.planning.standoff = get_or(pl, "standoff", s.planning.standoff);
  s.planning.clearance = get_or(pl, "clearance", s.planning.clearance);
  s.planning.reach.min = get_or(pl, "reach_min", s.planning.reach.min);

  const json arm = j.value("arm", json::object());
  if (arm.contains("chain_file")) {
    s.chain_file = resolve(base_dir, get_or<std::string>(arm, "chain_file", ""));
    s.chain = load_chain(s.chain_file);
  } else {
    s.chain = reference_chain();
  }
  s.planning.reach.max = get_or(pl, "reach_max", s.chain.reach_max());

  const json mk = j.value("markers", json::object());
  s.markers.spacing = get_or(mk, "spacing", s.markers.spacing);
  s.markers.lateral_offset = get_or(mk, "lateral_offset", s.markers.lateral_offset);
  if (mk.contains("list"))
    for (const auto& m : mk.at("list")) {
      const Eigen::Vector3d p = vec3_or(m, "pose", Eigen::Vector3d::Zero());
      s.markers.explicit_markers.push_back({get_or(m, "id", 0), embed_se2(Pose2(p.x(), p.y(), p.z()))});
    }

  SimConfig& sim = s.loop.sim;
  const json sj = j.value("sim", json::object());
  sim.dt = s.planning.dt;
  sim.seed = get_or<std::uint64_t>(sj, "seed", sim.seed);
  sim.process_noise_std = vec3_or(sj, "process_noise_std", sim.process_noise_std);
  sim.detection_position_std = get_or(sj, "detection_position_std", sim.detection_position_std);
  sim.detection_angle_std = get_or(sj, "detection_angle_std", sim.detection_angle_std);
  sim.latency_steps = get_or(sj, "latency_steps", sim.latency_steps);
  sim.variable_latency = get_or(sj, "variable_latency", sim.variable_latency);
  sim.max_latency_steps = get_or(sj, "max_latency_steps", sim.max_latency_steps);
  sim.camera_fov = get_or(sj, "camera_fov", sim.camera_fov);
  sim.camera_range = get_or(sj, "camera_range", sim.camera_range);
  sim.visibility_window = get_or(sj, "visibility_window", sim.visibility_window);
  if (sj.contains("blackout_from_step")) sim.blackout_from_step = get_or<std::int64_t>(sj, "blackout_from_step", 0);
  if (sj.contains("camera_mount")) {
    const json& cm = sj.at("camera_mount");
    const Eigen::Vector3d t = vec3_or(cm, "translation", sim.base_T_camera.translation);
    const Eigen::Vector3d rpy = vec3_or(cm, "rpy", Eigen::Vector3d(kPi, 0, 0));
    sim.base_T_camera = Transform3::from_rpy(rpy.x(), rpy.y(), rpy.z(), t);
  }
  sim.initial_offset = vec3_or(sj, "initial_offset", sim.initial_offset);
  s.laps = get_or(sj, "laps", s.laps);
  s.print = get_or(sj, "print", s.print);

  MpcConfig& mpc = s.loop.mpc;
  const json mj = j.value("mpc", json::object());
  mpc.dt = s.planning.dt;
  mpc.horizon = get_or(mj, "horizon", mpc.horizon);
  mpc.Qc = diag_or(mj, "Qc", mpc.Qc);
  mpc.Rc = diag_or(mj, "Rc", mpc.Rc);
  mpc.v_max = get_or(mj, "v_max", mpc.v_max);
  mpc.omega_max = get_or(mj, "omega_max", mpc.omega_max);

  const json ej = j.value("ekf", json::object());
  s.loop.noise.Q = diag_or(ej, "Q", s.loop.noise.Q);
  s.loop.noise.R = diag_or(ej, "R", s.loop.noise.R);
  sim.initial_covariance = diag_or(ej, "P0", sim.initial_covariance);

  const json ij = j.value("ik", json::object());
  s.loop.ik.damping = get_or(ij, "damping", s.loop.ik.damping);
  s.loop.ik.max_consecutive_failures = get_or(ij, "max_consecutive_failures", s.loop.ik.max_consecutive_failures);

  const json mt = j.value("metrics", json::object());
  s.corner_margin = get_or(mt, "corner_margin", s.corner_margin);
  s.output_dir = resolve(base_dir, get_or<std::string>(j, "output", "out"));

  try {
    sim.validate();
    mpc.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  if (s.laps < 1) throw ConfigError("scenario: laps must be >= 1");
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  Scenario s = scenario_from_json(j, path.parent_path());
  s.source = path;
  return s;
}

PrintPlan plan_for(const Scenario& s) {
  if (s.print) return plan_print(s.structure, s.planning);
  return plan_air_laps(s.structure, static_cast<std::size_t>(s.laps), s.planning);
}

MarkerMap markers_for(const Scenario& s, const PrintPlan& plan) {
  if (!s.markers.explicit_markers.empty()) return MarkerMap(s.markers.explicit_markers);
  return markers_along(plan.base_circuit, s.markers.spacing, s.markers.lateral_offset);
}

void write_plan_csv(std::ostream& out, const PrintPlan& plan) {
  out << "t,nx,ny,nz,bx,by,btheta\n";
  const auto& n = plan.nozzle.path;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto& b = plan.base[k];
    out << csv_number(n.time_at(k)) << ',' << csv_number(n[k].x()) << ',' << csv_number(n[k].y())
        << ',' << csv_number(n[k].z()) << ',' << csv_number(b.x()) << ',' << csv_number(b.y())
        << ',' << csv_number(b.theta()) << '\n';
  }
}

void write_joints_csv(std::ostream& out, const ArmTrajectory& traj) {
  out << "t,q1,q2,q3,q4,q5,q6\n";
  for (std::size_t k = 0; k < traj.q_samples.size(); ++k) {
    out << csv_number(traj.dt * static_cast<double>(k));
    for (int i = 0; i < 6; ++i) out << ',' << csv_number(traj.q_samples[k][i]);
    out << '\n';
  }
}

json plan_summary(const PrintPlan& plan) {
  double base_length = 0.0, reach_lo = 1e300, reach_hi = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    if (k > 0) base_length += (plan.base[k].translation() - plan.base[k - 1].translation()).norm();
    const double d = (plan.nozzle.path[k].head<2>() - plan.base[k].translation()).norm();
    reach_lo = std::min(reach_lo, d);
    reach_hi = std::max(reach_hi, d);
  }
  return {
      {"samples", plan.size()},
      {"dt_s", plan.nozzle.path.dt()},
      {"duration_s", plan.duration()},
      {"nozzle_length_m", plan.nozzle.progress.empty() ? 0.0 : plan.nozzle.progress.back()},
      {"base_length_m", base_length},
      {"nozzle_speed_mps", plan.nozzle_speed},
      {"layer_count", plan.layer_count},
      {"laps", plan.nozzle.laps.size()},
      {"reach_min_m", reach_lo},
      {"reach_max_m", reach_hi},
  };
}

void write_trajectory_csv(std::ostream& out, const SimReport& r) {
  out << "k,t,true_x,true_y,true_theta,est_x,est_y,est_theta,des_x,des_y,des_theta,ux,uy,uw,"
         "nozzle_x,nozzle_y,nozzle_z,target_x,target_y,target_z,n_markers\n";
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto pose = [&](const Pose2& p) {
      out << ',' << csv_number(p.x()) << ',' << csv_number(p.y()) << ',' << csv_number(p.theta());
    };
    const auto point = [&](const Eigen::Vector3d& p) {
      out << ',' << csv_number(p.x()) << ',' << csv_number(p.y()) << ',' << csv_number(p.z());
    };
    out << k << ',' << csv_number(r.dt * static_cast<double>(k));
    pose(r.true_poses[k]);
    pose(r.estimated_poses[k]);
    pose(r.desired_poses[k]);
    out << ',' << csv_number(r.commanded[k].vx) << ',' << csv_number(r.commanded[k].vy) << ','
        << csv_number(r.commanded[k].omega);
    point(r.nozzle_world[k]);
    point(r.nozzle_target[k]);
    out << ',' << r.visible_markers[k] << '\n';
  }
}

json metrics_json(const MetricsResult& m) {
  std::ostringstream s;
  write_metrics_json(s, m);
  return json::parse(s.str());
}

json sim_summary(const Scenario& s, const SimReport& r, const std::optional<MetricsResult>& metrics) {
  double base_err = 0.0, nozzle_err = 0.0, cost_sum = 0.0, cost_max = 0.0, nees_sum = 0.0;
  double markers = 0.0;
  int iters_max = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    base_err = std::max(base_err, (r.true_poses[k].translation() - r.desired_poses[k].translation()).norm());
    nozzle_err = std::max(nozzle_err, (r.nozzle_world[k] - r.nozzle_target[k]).norm());
    cost_sum += r.optimal_cost[k];
    cost_max = std::max(cost_max, r.optimal_cost[k]);
    nees_sum += r.nees[k];
    markers += static_cast<double>(r.visible_markers[k]);
    iters_max = std::max(iters_max, r.controller[k].qp_iters);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, r.size()));
  const SimConfig& sim = s.loop.sim;
  json j = {
      {"status", "ok"},
      {"steps", r.size()},
      {"duration_s", r.dt * static_cast<double>(r.size() > 0 ? r.size() - 1 : 0)},
      {"mode", s.print ? "print" : "air"},
      {"laps", s.print ? 0 : s.laps},
      {"seed", sim.seed},
      {"config",
       {{"dt", sim.dt},
        {"latency_steps", sim.latency_steps},
        {"variable_latency", sim.variable_latency},
        {"process_noise_std", {sim.process_noise_std.x(), sim.process_noise_std.y(), sim.process_noise_std.z()}},
        {"detection_position_std", sim.detection_position_std},
        {"detection_angle_std", sim.detection_angle_std},
        {"mpc_horizon", s.loop.mpc.horizon},
        {"v_max", s.loop.mpc.v_max},
        {"omega_max", s.loop.mpc.omega_max}}},
      {"base_max_position_error_m", base_err},
      {"nozzle_max_deviation_m", nozzle_err},
      {"mean_visible_markers", markers / n},
      {"mean_nees", nees_sum / n},
      {"optimal_cost", {{"mean", cost_sum / n}, {"max", cost_max}}},
      {"qp_iterations_max", iters_max},
      {"faults", json::array()},
  };
  if (metrics) j["metrics"] = metrics_json(*metrics);
  return j;
}

TrajectoryTable read_trajectory_csv(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(name + ": empty file", 1);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto column = [&](const std::string& key) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == key) return i;
    throw ParseError(name + ": line 1: missing column '" + key + "'", 1);
  };
  const std::size_t ct = column("t"), cx = column("true_x"), cy = column("true_y"),
                    dx = column("des_x"), dy = column("des_y"), dth = column("des_theta");

  TrajectoryTable t;
  std::vector<double> times;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    row.clear();
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || (res.ptr != end && *res.ptr != ',')) {
        std::ostringstream msg;
        msg << name << ": line " << line_no << ": malformed number in field " << row.size() + 1;
        throw ParseError(msg.str(), line_no);
      }
      row.push_back(v);
      if (res.ptr == end) break;
      p = res.ptr + 1;
    }
    if (row.size() != header.size()) {
      std::ostringstream msg;
      msg << name << ": line " << line_no << ": expected " << header.size() << " fields, got "
          << row.size();
      throw ParseError(msg.str(), line_no);
    }
    times.push_back(row[ct]);
    t.measured.emplace_back(row[cx], row[cy]);
    t.desired.emplace_back(row[dx], row[dy], row[dth]);
  }
  if (times.size() < 2) throw ParseError(name + ": fewer than two data rows", line_no);
  t.dt = times[1] - times[0];
  if (!(t.dt > 0.0)) throw ParseError(name + ": line 3: time column is not increasing", 3);
  return t;
}

TrajectoryTable read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory file: " + path.string());
  return read_trajectory_csv(in, path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

}  // namespace mobileprint
