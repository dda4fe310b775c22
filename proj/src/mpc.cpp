#include "mobileprint/mpc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mobileprint {

void MpcConfig::validate() const {
  if (horizon < 1) throw InvalidArgumentError("mpc: horizon must be >= 1");
  if (!(dt > 0.0)) throw InvalidArgumentError("mpc: dt must be positive");
  if (!(v_max >= 0.0) || !(omega_max >= 0.0))
    throw InvalidArgumentError("mpc: velocity bounds must be non-negative");
  if ((Qc - Qc.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      (Rc - Rc.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgumentError("mpc: weights must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(Qc).eigenvalues().minCoeff() < -1e-12)
    throw InvalidArgumentError("mpc: Qc must be positive semidefinite");
  if (!(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(Rc).eigenvalues().minCoeff() > 0.0))
    throw InvalidArgumentError("mpc: Rc must be positive definite");
  if (!hook.empty()) {
    const Eigen::Index m = hook.Gs.rows(), n = 3 * horizon;
    if (hook.Gs.cols() != n || hook.w.size() != m || hook.E.rows() != m || hook.E.cols() != 3 ||
        hook.Ed.rows() != m || hook.Ed.cols() != n)
      throw DimensionError("mpc: state-constraint hook has inconsistent dimensions");
  }
}

StackedDynamics build_stacked_dynamics(const MpcConfig& cfg) {
  const int n = cfg.horizon;
  StackedDynamics d;
  d.Sx.resize(3 * n, 3);
  d.Su = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  // A = I, so A^i = I and every block of Su on or below the diagonal is B.
  for (int i = 0; i < n; ++i) {
    d.Sx.block<3, 3>(3 * i, 0).setIdentity();
    for (int j = 0; j <= i; ++j) d.Su.block<3, 3>(3 * i, 3 * j) = cfg.dt * Eigen::Matrix3d::Identity();
  }
  return d;
}

QpProblem build_qp(const StackedDynamics& dyn, const MpcConfig& cfg, const Pose2& x_k,
                   std::span<const Pose2> desired) {
  const int n = cfg.horizon;
  if (static_cast<int>(desired.size()) != n || dyn.Sx.rows() != 3 * n)
    throw DimensionError("build_qp: desired segment length must equal the horizon");

  Eigen::VectorXd xd(3 * n);
  double theta = x_k.theta();
  for (int i = 0; i < n; ++i) {
    const Pose2& p = desired[static_cast<std::size_t>(i)];
    theta += wrap_angle(p.theta() - theta);
    xd.segment<3>(3 * i) = Eigen::Vector3d(p.x(), p.y(), theta);
  }
  const Eigen::Vector3d x = x_k.vector();

  Eigen::MatrixXd Qbar = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  Eigen::MatrixXd Rbar = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  for (int i = 0; i < n; ++i) {
    Qbar.block<3, 3>(3 * i, 3 * i) = cfg.Qc;
    Rbar.block<3, 3>(3 * i, 3 * i) = cfg.Rc;
  }
  const Eigen::VectorXd e0 = dyn.Sx * x - xd;  // predicted error with U = 0

  QpProblem p;
  p.H = dyn.Su.transpose() * Qbar * dyn.Su + Rbar;
  p.H = 0.5 * (p.H + p.H.transpose());
  p.q = dyn.Su.transpose() * Qbar * e0;
  p.constant = e0.dot(Qbar * e0);

  // Input bounds as G U <= w with G = [I; -I], w = [u_max; u_max] and E, Ed
  // zero; hook rows are appended with their state-dependent right side.
  const Eigen::Index m_box = 6 * n;
  const Eigen::Index m_hook = cfg.hook.empty() ? 0 : cfg.hook.Gs.rows();
  p.G = Eigen::MatrixXd::Zero(m_box + m_hook, 3 * n);
  p.h.resize(m_box + m_hook);
  p.G.topRows(3 * n).setIdentity();
  p.G.middleRows(3 * n, 3 * n) = -Eigen::MatrixXd::Identity(3 * n, 3 * n);
  for (int i = 0; i < 2 * n; ++i) p.h.segment<3>(3 * i) = Eigen::Vector3d(cfg.v_max, cfg.v_max, cfg.omega_max);
  if (m_hook > 0) {
    p.G.bottomRows(m_hook) = cfg.hook.Gs;
    p.h.tail(m_hook) = cfg.hook.w + cfg.hook.E * x + cfg.hook.Ed * xd;
  }
  return p;
}

double KktResiduals::max() const {
  return std::max({stationarity, primal, complementarity, dual});
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& U,
                           const Eigen::VectorXd& lambda) {
  KktResiduals r;
  r.stationarity = (p.H * U + p.q + p.G.transpose() * lambda).cwiseAbs().maxCoeff();
  const Eigen::VectorXd slack = p.G * U - p.h;
  if (slack.size() > 0) {
    r.primal = std::max(0.0, slack.maxCoeff());
    r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
    r.dual = std::max(0.0, -lambda.minCoeff());
  }
  return r;
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& options) {
  const Eigen::Index n = p.H.rows();
  const Eigen::Index m = p.G.rows();
  if (p.H.cols() != n || p.q.size() != n || p.G.cols() != n || p.h.size() != m)
    throw DimensionError("solve_qp: inconsistent problem dimensions");

  QpSolution sol;
  sol.U = Eigen::VectorXd::Zero(n);
  sol.lambda = Eigen::VectorXd::Zero(m);
  if (m > 0 && p.h.minCoeff() < 0.0) {
    sol.residuals = kkt_residuals(p, sol.U, sol.lambda);
    throw SolverFailureError("solve_qp: U = 0 violates the constraints", sol);
  }

  std::vector<Eigen::Index> working;
  Eigen::VectorXd& x = sol.U;
  for (int it = 1; it <= options.max_iterations; ++it) {
    sol.iterations = it;
    const auto w = static_cast<Eigen::Index>(working.size());
    // Equality-constrained step: [H Gw'; Gw 0] [d; lambda_w] = [-(Hx + q); 0].
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + w, n + w);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + w);
    kkt.topLeftCorner(n, n) = p.H;
    for (Eigen::Index i = 0; i < w; ++i) {
      kkt.block(n + i, 0, 1, n) = p.G.row(working[static_cast<std::size_t>(i)]);
      kkt.block(0, n + i, n, 1) = p.G.row(working[static_cast<std::size_t>(i)]).transpose();
    }
    rhs.head(n) = -(p.H * x + p.q);
    const Eigen::VectorXd sol_kkt = kkt.partialPivLu().solve(rhs);
    const Eigen::VectorXd d = sol_kkt.head(n);
    const Eigen::VectorXd lam_w = sol_kkt.tail(w);

    const double scale = 1.0 + x.cwiseAbs().maxCoeff();
    if (d.cwiseAbs().maxCoeff() <= options.tolerance * scale) {
      x += d;
      Eigen::Index worst = -1;
      double most_negative = -options.tolerance;
      for (Eigen::Index i = 0; i < w; ++i)
        if (lam_w[i] < most_negative) {
          most_negative = lam_w[i];
          worst = i;
        }
      if (worst < 0) {
        sol.lambda.setZero();
        for (Eigen::Index i = 0; i < w; ++i)
          sol.lambda[working[static_cast<std::size_t>(i)]] = std::max(0.0, lam_w[i]);
        sol.residuals = kkt_residuals(p, x, sol.lambda);
        return sol;
      }
      working.erase(working.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      const double gd = p.G.row(i).dot(d);
      if (gd <= 1e-14) continue;
      const double step = std::max(0.0, p.h[i] - p.G.row(i).dot(x)) / gd;
      if (step < alpha) {
        alpha = step;
        blocking = i;
      }
    }
    x += alpha * d;
    if (blocking >= 0) working.push_back(blocking);
  }

  sol.lambda.setZero();
  sol.residuals = kkt_residuals(p, sol.U, sol.lambda);
  std::ostringstream msg;
  msg << "solve_qp: no KKT point after " << options.max_iterations << " iterations";
  throw SolverFailureError(msg.str(), sol);
}

MpcResult mpc_solve(const MpcConfig& cfg, const StackedDynamics& dyn, const Pose2& x_hat,
                    const PosePath& desired, std::int64_t k) {
  std::vector<Pose2> segment;
  segment.reserve(static_cast<std::size_t>(cfg.horizon));
  for (int i = 1; i <= cfg.horizon; ++i)
    segment.push_back(desired.at_or_last(static_cast<std::size_t>(std::max<std::int64_t>(0, k + i))));
  const QpProblem p = build_qp(dyn, cfg, x_hat, segment);
  MpcResult r;
  r.qp = solve_qp(p);
  r.optimal_cost = p.objective(r.qp.U);
  r.u.vx = std::clamp(r.qp.U[0], -cfg.v_max, cfg.v_max);
  r.u.vy = std::clamp(r.qp.U[1], -cfg.v_max, cfg.v_max);
  r.u.omega = std::clamp(r.qp.U[2], -cfg.omega_max, cfg.omega_max);
  return r;
}

ControlInput mpc_step(const MpcConfig& cfg, const StackedDynamics& dyn, const Pose2& x_hat,
                      const PosePath& desired, std::int64_t k) {
  return mpc_solve(cfg, dyn, x_hat, desired, k).u;
}

void write_controller_trace(std::ostream& out, std::span<const ControllerTraceRow> rows) {
  out << "k,ux,uy,uw,qp_iters,qp_residual\n";
  const auto old = out.precision(17);
  for (const auto& r : rows)
    out << r.k << ',' << r.u.vx << ',' << r.u.vy << ',' << r.u.omega << ',' << r.qp_iters << ','
        << r.qp_residual << '\n';
  out.precision(old);
}

}  // namespace mobileprint
