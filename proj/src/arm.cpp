#include "mobileprint/arm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mobileprint {

namespace {

using TaskJacobian = Eigen::Matrix<double, 5, 6>;
using TaskVector = Eigen::Matrix<double, 5, 1>;

Eigen::Matrix<double, 3, 2> perpendicular_basis(const Eigen::Vector3d& axis) {
  const Eigen::Vector3d a = axis.normalized();
  const Eigen::Vector3d helper =
      std::abs(a.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  Eigen::Matrix<double, 3, 2> basis;
  basis.col(0) = a.cross(helper).normalized();
  basis.col(1) = a.cross(basis.col(0));
  return basis;
}

struct TaskState {
  TaskVector error;
  double position_error = 0.0;
  double axis_error = 0.0;
};

TaskState task_error(const Transform3& tool, const Eigen::Vector3d& target,
                     const Eigen::Vector3d& desired_axis,
                     const Eigen::Matrix<double, 3, 2>& basis) {
  TaskState s;
  const Eigen::Vector3d dp = target - tool.translation;
  const Eigen::Vector3d a = tool.rotation.col(2);
  const Eigen::Vector3d rot = a.cross(desired_axis);
  s.error.head<3>() = dp;
  s.error.tail<2>() = basis.transpose() * rot;
  s.position_error = dp.norm();
  s.axis_error = std::atan2(rot.norm(), a.dot(desired_axis));
  return s;
}

TaskJacobian task_jacobian(const Matrix6d& j, const Eigen::Matrix<double, 3, 2>& basis) {
  TaskJacobian t;
  t.topRows<3>() = j.topRows<3>();
  t.bottomRows<2>() = basis.transpose() * j.bottomRows<3>();
  return t;
}

JointVector damped_solve(const TaskJacobian& j, const TaskVector& e, double damping) {
  const Eigen::Matrix<double, 5, 5> jjt =
      j * j.transpose() + damping * damping * Eigen::Matrix<double, 5, 5>::Identity();
  return j.transpose() * jjt.ldlt().solve(e);
}

void clamp_to_limits(const KinematicChain& chain, JointVector& q) {
  for (int i = 0; i < 6; ++i) q[i] = std::clamp(q[i], chain.joints[i].min, chain.joints[i].max);
}

Transform3 fk_unchecked(const KinematicChain& chain, const JointVector& q) {
  Transform3 t;
  for (int i = 0; i < 6; ++i) {
    const auto& joint = chain.joints[i];
    t = t * joint.offset * Transform3::from_axis_angle(joint.axis, q[i]);
  }
  return t * chain.tool_offset;
}

Matrix6d jacobian_unchecked(const KinematicChain& chain, const JointVector& q) {
  Eigen::Matrix<double, 3, 6> axes, origins;
  Transform3 t;
  for (int i = 0; i < 6; ++i) {
    const auto& joint = chain.joints[i];
    t = t * joint.offset;
    axes.col(i) = t.rotation * joint.axis.normalized();
    origins.col(i) = t.translation;
    t = t * Transform3::from_axis_angle(joint.axis, q[i]);
  }
  const Eigen::Vector3d tip = (t * chain.tool_offset).translation;
  Matrix6d j;
  for (int i = 0; i < 6; ++i) {
    j.block<3, 1>(0, i) = axes.col(i).cross(tip - origins.col(i));
    j.block<3, 1>(3, i) = axes.col(i);
  }
  return j;
}

// Shared iteration for tracking steps and initial solves; velocity clipping
// is skipped when dt <= 0.
IkStep iterate(const KinematicChain& chain, const JointVector& q_prev, const Eigen::Vector3d& target,
               double dt, int iterations, const DiffIkOptions& options) {
  const auto basis = perpendicular_basis(options.nozzle_axis);
  const Eigen::Vector3d desired_axis = options.nozzle_axis.normalized();
  JointVector q = q_prev;
  for (int it = 0; it < iterations; ++it) {
    const TaskState s = task_error(fk_unchecked(chain, q), target, desired_axis, basis);
    if (s.position_error < options.polish_tolerance && s.axis_error < options.polish_tolerance)
      break;
    const TaskJacobian j = task_jacobian(jacobian_unchecked(chain, q), basis);
    q += damped_solve(j, s.error, options.damping);
    clamp_to_limits(chain, q);
  }
  if (dt > 0.0) {
    JointVector delta = q - q_prev;
    double scale = 1.0;
    for (int i = 0; i < 6; ++i)
      scale = std::max(scale, std::abs(delta[i]) / (chain.joints[i].velocity_limit * dt));
    if (scale > 1.0) q = q_prev + delta / scale;
  }
  const TaskState s = task_error(fk_unchecked(chain, q), target, desired_axis, basis);
  IkStep out;
  out.q = q;
  out.position_error = s.position_error;
  out.axis_error = s.axis_error;
  out.converged = s.position_error <= options.tolerance && s.axis_error <= options.axis_tolerance;
  return out;
}

Eigen::Vector3d read_vec3(const nlohmann::json& j, const char* key, Eigen::Vector3d fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3)
    throw ConfigError(std::string("chain config: '") + key + "' must be a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Transform3 read_offset(const nlohmann::json& j) {
  const Eigen::Vector3d t = read_vec3(j, "translation", Eigen::Vector3d::Zero());
  const Eigen::Vector3d rpy = read_vec3(j, "rpy", Eigen::Vector3d::Zero());
  return Transform3::from_rpy(rpy.x(), rpy.y(), rpy.z(), t);
}

}  // namespace

double KinematicChain::reach_max() const {
  double reach = tool_offset.translation.norm();
  for (std::size_t i = 1; i < joints.size(); ++i) reach += joints[i].offset.translation.norm();
  return reach;
}

bool KinematicChain::within_limits(const JointVector& q, double tol) const {
  for (int i = 0; i < 6; ++i)
    if (!(q[i] >= joints[i].min - tol && q[i] <= joints[i].max + tol)) return false;
  return true;
}

void KinematicChain::validate() const {
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (!(j.axis.norm() > 1e-9)) throw ConfigError("chain: joint axis must be non-zero", i);
    if (!j.offset.is_rigid()) throw ConfigError("chain: joint offset is not rigid", i);
    if (!(j.min < j.max)) throw ConfigError("chain: joint limits must satisfy min < max", i);
    if (!(j.velocity_limit > 0.0)) throw ConfigError("chain: velocity limit must be positive", i);
  }
  if (!tool_offset.is_rigid()) throw ConfigError("chain: tool offset is not rigid");
}

KinematicChain reference_chain() {
  KinematicChain c;
  const Eigen::Vector3d x = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d y = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  c.joints[0] = {z, Transform3::from_translation({0, 0, 0.20}), -2.96, 2.96, 3.0};
  c.joints[1] = {y, Transform3::identity(), -2.0, 2.0, 3.0};
  c.joints[2] = {y, Transform3::from_translation({0.42, 0, 0}), -2.6, 2.6, 3.0};
  c.joints[3] = {x, Transform3::from_translation({0.20, 0, 0}), -3.0, 3.0, 4.0};
  c.joints[4] = {y, Transform3::from_translation({0.17, 0, 0}), -2.1, 2.1, 4.0};
  c.joints[5] = {x, Transform3::identity(), -6.28, 6.28, 6.0};
  c.tool_offset = Transform3::from_rpy(0, kPi / 2, 0, {0.08, 0, 0});
  c.ik_seed << kPi / 2, -0.6, 1.9, 0.0, 0.3, 0.0;
  return c;
}

KinematicChain chain_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain config: ") + e.what());
  }
  try {
    KinematicChain c;
    const auto& joints = j.at("joints");
    if (!joints.is_array() || joints.size() != 6)
      throw ConfigError("chain config: exactly 6 revolute joints are required");
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& jj = joints[i];
      auto& joint = c.joints[i];
      joint.axis = read_vec3(jj, "axis", Eigen::Vector3d::UnitZ()).normalized();
      joint.offset = read_offset(jj);
      const auto& lim = jj.at("limits");
      joint.min = lim.at(0).get<double>();
      joint.max = lim.at(1).get<double>();
      joint.velocity_limit = jj.value("velocity_limit", 3.0);
    }
    if (j.contains("tool")) c.tool_offset = read_offset(j.at("tool"));
    if (j.contains("ik_seed")) {
      const auto& s = j.at("ik_seed");
      if (!s.is_array() || s.size() != 6) throw ConfigError("chain config: ik_seed needs 6 values");
      for (int i = 0; i < 6; ++i) c.ik_seed[i] = s[i].get<double>();
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain config: ") + e.what());
  }
}

KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open chain file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return chain_from_json_text(buf.str());
}

Transform3 forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  if (!chain.within_limits(q)) throw JointLimitError("joint configuration outside limits");
  return fk_unchecked(chain, q);
}

Matrix6d jacobian(const KinematicChain& chain, const JointVector& q) {
  if (!chain.within_limits(q)) throw JointLimitError("joint configuration outside limits");
  return jacobian_unchecked(chain, q);
}

IkStep diff_ik_step(const KinematicChain& chain, const JointVector& q_prev,
                    const Eigen::Vector3d& target, double dt, const DiffIkOptions& options) {
  return iterate(chain, q_prev, target, dt, 1 + options.corrector_iterations, options);
}

JointVector solve_initial_configuration(const KinematicChain& chain, const Eigen::Vector3d& target,
                                        const JointVector& seed, const DiffIkOptions& options) {
  JointVector start = seed;
  const auto& j1 = chain.joints[0];
  const bool vertical_first_axis =
      (j1.offset.rotation * j1.axis).normalized().cross(Eigen::Vector3d::UnitZ()).norm() < 1e-9;
  if (vertical_first_axis) {
    JointVector probe = seed;
    probe[0] = 0.0;
    const Eigen::Vector3d p = fk_unchecked(chain, probe).translation;
    const double sign = (j1.offset.rotation * j1.axis).z() > 0 ? 1.0 : -1.0;
    start[0] = wrap_angle(sign * (std::atan2(target.y(), target.x()) - std::atan2(p.y(), p.x())));
    clamp_to_limits(chain, start);
  }
  const IkStep s = iterate(chain, start, target, 0.0, 200, options);
  if (!s.converged || s.position_error > options.tolerance) {
    std::ostringstream msg;
    msg << "initial configuration: residual " << s.position_error << " m";
    throw IkFailureError(msg.str(), 0);
  }
  return s.q;
}

Eigen::Vector3d world_to_base(const Pose2& base, const Eigen::Vector3d& world) {
  const double c = std::cos(base.theta()), s = std::sin(base.theta());
  const double dx = world.x() - base.x(), dy = world.y() - base.y();
  return {c * dx + s * dy, -s * dx + c * dy, world.z()};
}

Eigen::Vector3d base_to_world(const Pose2& base, const Eigen::Vector3d& local) {
  const Eigen::Vector2d p = base.transform(local.head<2>());
  return {p.x(), p.y(), local.z()};
}

ArmTrajectory differential_ik(const KinematicChain& chain, const PrintPlan& plan,
                              const PosePath& base_actual, const JointVector& q0,
                              const DiffIkOptions& options) {
  return differential_ik(chain, plan.nozzle.path, base_actual, q0, options);
}

ArmTrajectory differential_ik(const KinematicChain& chain, const PointPath& nozzle,
                              const PosePath& base_actual, const JointVector& q0,
                              const DiffIkOptions& options) {
  if (base_actual.size() != nozzle.size())
    throw DimensionError("differential_ik: base path is not sample-aligned with the plan");
  ArmTrajectory out;
  out.dt = nozzle.dt();
  out.q_samples.reserve(nozzle.size());
  out.position_error.reserve(nozzle.size());

  JointVector q = q0;
  int consecutive = 0;
  std::size_t run_start = 0;
  for (std::size_t k = 0; k < nozzle.size(); ++k) {
    const Eigen::Vector3d target = world_to_base(base_actual[k], nozzle[k]);
    const IkStep s = diff_ik_step(chain, q, target, k == 0 ? 0.0 : out.dt, options);
    q = s.q;
    out.q_samples.push_back(q);
    out.position_error.push_back(s.position_error);
    if (s.converged) {
      consecutive = 0;
      continue;
    }
    if (consecutive == 0) run_start = k;
    if (++consecutive > options.max_consecutive_failures) {
      std::ostringstream msg;
      msg << "differential IK failed from index " << run_start << " (residual "
          << s.position_error << " m)";
      throw IkFailureError(msg.str(), run_start);
    }
  }
  return out;
}

}  // namespace mobileprint
