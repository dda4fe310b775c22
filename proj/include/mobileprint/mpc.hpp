#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mobileprint/core.hpp"

namespace mobileprint {

// Optional extra rows Gs U <= w + E x_k + Ed X^d, with x_k the current state
// (3) and X^d the stacked desired states (3N). Empty by default.
struct StateConstraintHook {
  Eigen::MatrixXd Gs;
  Eigen::VectorXd w;
  Eigen::MatrixXd E;
  Eigen::MatrixXd Ed;

  bool empty() const { return Gs.rows() == 0; }
};

struct MpcConfig {
  int horizon = 10;
  double dt = 0.025;
  Eigen::Matrix3d Qc = Eigen::Vector3d(100.0, 100.0, 10.0).asDiagonal();
  Eigen::Matrix3d Rc = Eigen::Matrix3d::Identity();
  double v_max = 0.3;      // m/s, per axis
  double omega_max = 0.5;  // rad/s
  StateConstraintHook hook;

  // Throws InvalidArgumentError unless N >= 1, Qc PSD, Rc PD, bounds >= 0.
  void validate() const;
};

// X_{k+1} = Sx x_k + Su U_k for A = I, B = dt I.
struct StackedDynamics {
  Eigen::MatrixXd Sx;  // 3N x 3
  Eigen::MatrixXd Su;  // 3N x 3N
};

StackedDynamics build_stacked_dynamics(const MpcConfig& cfg);

// Minimize U'HU + 2q'U + constant subject to G U <= h.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd q;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  double constant = 0.0;

  double objective(const Eigen::VectorXd& U) const {
    return U.dot(H * U) + 2.0 * q.dot(U) + constant;
  }
};

// Desired states X^d_{k+1..k+N}; theta is unwrapped against x_k so the
// linear model never sees a 2*pi jump. Throws DimensionError on a length
// mismatch.
QpProblem build_qp(const StackedDynamics& dyn, const MpcConfig& cfg, const Pose2& x_k,
                   std::span<const Pose2> desired);

struct KktResiduals {
  double stationarity = 0.0;     // ||H U + q + G' lambda||_inf
  double primal = 0.0;           // max(G U - h, 0)
  double complementarity = 0.0;  // max |lambda_i (G U - h)_i|
  double dual = 0.0;             // max(-lambda, 0)

  double max() const;
};

// lambda follows the 1/2 U'HU + q'U scaling of the Lagrangian.
KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& U,
                           const Eigen::VectorXd& lambda);

struct QpSolution {
  Eigen::VectorXd U;
  Eigen::VectorXd lambda;
  int iterations = 0;
  KktResiduals residuals;
};

class SolverFailureError : public Error {
 public:
  SolverFailureError(const std::string& what, QpSolution best)
      : Error(ErrorCategory::Solver, what), best_(std::move(best)) {}
  const QpSolution& best() const { return best_; }

 private:
  QpSolution best_;
};

struct QpOptions {
  int max_iterations = 200;
  double tolerance = 1e-9;
};

// Primal active-set method started from U = 0, which must be feasible.
QpSolution solve_qp(const QpProblem& p, const QpOptions& options = {});

struct MpcResult {
  ControlInput u;
  QpSolution qp;
  double optimal_cost = 0.0;  // J*(x_k), including the constant term
};

// Solves the horizon starting at step k (desired samples k+1 .. k+N, the
// last pose held past the end) and returns the first control block,
// clamped exactly to the bounds.
MpcResult mpc_solve(const MpcConfig& cfg, const StackedDynamics& dyn, const Pose2& x_hat,
                    const PosePath& desired, std::int64_t k);
ControlInput mpc_step(const MpcConfig& cfg, const StackedDynamics& dyn, const Pose2& x_hat,
                      const PosePath& desired, std::int64_t k);

struct ControllerTraceRow {
  std::int64_t k = 0;
  ControlInput u;
  int qp_iters = 0;
  double qp_residual = 0.0;
};

void write_controller_trace(std::ostream& out, std::span<const ControllerTraceRow> rows);

}  // namespace mobileprint
