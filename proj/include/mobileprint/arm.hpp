#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mobileprint/core.hpp"
#include "mobileprint/toolpath.hpp"

namespace mobileprint {

using JointVector = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct RevoluteJoint {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit, in the joint frame
  Transform3 offset;  // parent link frame -> joint frame, applied before rotation
  double min = -kPi;
  double max = kPi;
  double velocity_limit = 3.0;  // rad/s
};

// Serial 6R arm. Joint i maps frame i-1 to frame i as offset_i * Rot(axis_i, q_i);
// the tool frame z axis is the nozzle direction.
struct KinematicChain {
  std::array<RevoluteJoint, 6> joints;
  Transform3 tool_offset;
  JointVector ik_seed = JointVector::Zero();

  // Sum of link lengths past the first joint plus the tool offset, i.e. the
  // horizontal reach of the stretched arm.
  double reach_max() const;
  bool within_limits(const JointVector& q, double tol = 0.0) const;
  void validate() const;
};

// Representative 6R arm with 0.87 m stretched reach and a spherical wrist.
KinematicChain reference_chain();

// Config file schema (JSON):
//   { "joints": [ { "axis": [x,y,z], "translation": [x,y,z], "rpy": [r,p,y],
//                   "limits": [min,max], "velocity_limit": v }, ... x6 ],
//     "tool": { "translation": [x,y,z], "rpy": [r,p,y] },
//     "ik_seed": [q1..q6] }
KinematicChain load_chain(const std::filesystem::path& path);
KinematicChain chain_from_json_text(const std::string& text);

// Tool pose in the arm base frame; throws JointLimitError outside limits.
Transform3 forward_kinematics(const KinematicChain& chain, const JointVector& q);

// Geometric Jacobian: rows 0-2 linear velocity of the tool point, rows 3-5
// angular velocity, both in the arm base frame.
Matrix6d jacobian(const KinematicChain& chain, const JointVector& q);

struct DiffIkOptions {
  double damping = 1e-3;
  double tolerance = 1e-4;        // position residual that counts as a failed step
  double axis_tolerance = 1e-3;   // nozzle-axis misalignment, rad
  double polish_tolerance = 1e-10;
  int corrector_iterations = 8;
  int max_consecutive_failures = 5;
  Eigen::Vector3d nozzle_axis = -Eigen::Vector3d::UnitZ();  // desired tool z, base frame
};

struct IkStep {
  JointVector q;
  double position_error = 0.0;
  double axis_error = 0.0;
  bool converged = false;
};

// One differential-IK update toward a tool-point target in the arm base
// frame: damped least squares on the 5-DoF task (position + nozzle axis,
// yaw about the axis left free), then corrector iterations at the same
// step. Joint motion is clipped to velocity and position limits.
IkStep diff_ik_step(const KinematicChain& chain, const JointVector& q_prev,
                    const Eigen::Vector3d& target, double dt, const DiffIkOptions& options = {});

// Iterates from `seed` (joint 1 re-aimed at the target when its axis is
// vertical) until the target is met; throws IkFailureError otherwise.
JointVector solve_initial_configuration(const KinematicChain& chain, const Eigen::Vector3d& target,
                                        const JointVector& seed, const DiffIkOptions& options = {});

struct ArmTrajectory {
  double dt = 0.0;
  std::vector<JointVector> q_samples;
  std::vector<double> position_error;
};

// Expresses a world-frame nozzle position in the base frame.
Eigen::Vector3d world_to_base(const Pose2& base, const Eigen::Vector3d& world);
Eigen::Vector3d base_to_world(const Pose2& base, const Eigen::Vector3d& local);

// Joint trajectory realizing the plan's nozzle path from the given
// (sample-aligned) base poses. Throws IkFailureError naming the first index
// of a run of more than max_consecutive_failures failed steps.
ArmTrajectory differential_ik(const KinematicChain& chain, const PrintPlan& plan,
                              const PosePath& base_actual, const JointVector& q0,
                              const DiffIkOptions& options = {});
ArmTrajectory differential_ik(const KinematicChain& chain, const PointPath& nozzle,
                              const PosePath& base_actual, const JointVector& q0,
                              const DiffIkOptions& options = {});

}  // namespace mobileprint
