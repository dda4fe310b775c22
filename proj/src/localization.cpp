#include "mobileprint/localization.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mobileprint {

namespace {

void check_flat(const Transform3& t, int id) {
  const Eigen::Matrix3d& r = t.rotation;
  const bool yaw_only = std::abs(r(2, 2) - 1.0) < 1e-9 && std::abs(r(0, 2)) < 1e-9 &&
                        std::abs(r(1, 2)) < 1e-9;
  if (std::abs(t.translation.z()) > 1e-9 || !yaw_only || !t.is_rigid()) {
    std::ostringstream msg;
    msg << "marker " << id << " must lie flat on the ground";
    throw InvalidArgumentError(msg.str());
  }
}

void check_covariance(const Eigen::Matrix3d& p, const char* where) {
  if (!p.allFinite()) throw FilterDivergenceError(std::string(where) + ": non-finite covariance");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(p);
  if (!(eig.eigenvalues().minCoeff() > 0.0))
    throw FilterDivergenceError(std::string(where) + ": covariance lost positive definiteness");
}

}  // namespace

MarkerMap::MarkerMap(std::vector<Marker> markers) {
  for (const auto& m : markers) add(m.id, m.world_T_marker);
}

void MarkerMap::add(int id, const Transform3& world_T_marker) {
  if (contains(id)) throw InvalidArgumentError("duplicate marker id " + std::to_string(id));
  check_flat(world_T_marker, id);
  markers_.push_back({id, world_T_marker});
}

bool MarkerMap::contains(int id) const {
  return std::any_of(markers_.begin(), markers_.end(), [id](const Marker& m) { return m.id == id; });
}

const Transform3& MarkerMap::at(int id) const {
  for (const auto& m : markers_)
    if (m.id == id) return m.world_T_marker;
  throw UnknownMarkerError("unknown marker id " + std::to_string(id));
}

Pose2 pose_from_detection(const MarkerDetection& det, const MarkerMap& map,
                          const Transform3& camera_T_base) {
  return project_to_se2(map.at(det.marker_id) * det.marker_T_camera * camera_T_base);
}

Pose2 propagate_delayed(const Pose2& estimate, std::span<const ControlInput> controls, double dt) {
  Eigen::Vector3d x = estimate.vector();
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& u : controls) sum += u.vector();
  x += dt * sum;
  return Pose2(x.x(), x.y(), x.z());
}

StackedMeasurement stack_measurements(std::span<const Pose2> propagated, const Eigen::Matrix3d& R) {
  if (propagated.empty()) throw NoVisibleMarkerError("no marker visible");
  const auto m = static_cast<Eigen::Index>(propagated.size());
  StackedMeasurement s;
  s.z.resize(3 * m);
  s.H.resize(3 * m, 3);
  s.R = Eigen::MatrixXd::Zero(3 * m, 3 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s.z.segment<3>(3 * i) = propagated[static_cast<std::size_t>(i)].vector();
    s.H.block<3, 3>(3 * i, 0).setIdentity();
    s.R.block<3, 3>(3 * i, 3 * i) = R;
  }
  return s;
}

EkfState ekf_predict(const EkfState& state, const ControlInput& u, double dt,
                     const Eigen::Matrix3d& Q) {
  const Eigen::Vector3d x = state.mean.vector() + dt * u.vector();
  EkfState out;
  out.mean = Pose2(x.x(), x.y(), x.z());
  out.covariance = state.covariance + Q;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

EkfState ekf_update(const EkfState& state, const StackedMeasurement& z) {
  const Eigen::Index n = z.z.size();
  if (n == 0 || n % 3 != 0 || z.H.rows() != n || z.H.cols() != 3 || z.R.rows() != n ||
      z.R.cols() != n)
    throw DimensionError("ekf_update: inconsistent stacked measurement");
  const Eigen::Matrix3d& P = state.covariance;
  const Eigen::Vector3d mean = state.mean.vector();

  Eigen::VectorXd innovation = z.z - z.H * mean;
  for (Eigen::Index i = 2; i < n; i += 3) innovation[i] = wrap_angle(innovation[i]);

  const Eigen::MatrixXd S = z.H * P * z.H.transpose() + z.R;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw FilterDivergenceError("innovation covariance is not positive definite");
  // K = P H^T S^-1
  const Eigen::MatrixXd K = llt.solve(z.H * P).transpose();

  const Eigen::Vector3d x = mean + K * innovation;
  const Eigen::Matrix3d I_KH = Eigen::Matrix3d::Identity() - K * z.H;
  Eigen::Matrix3d post = I_KH * P * I_KH.transpose() + K * z.R * K.transpose();
  post = 0.5 * (post + post.transpose());
  check_covariance(post, "ekf_update");

  EkfState out;
  out.mean = Pose2(x.x(), x.y(), x.z());
  out.covariance = post;
  return out;
}

void ControlHistory::push(std::int64_t k, const ControlInput& u) {
  if (!buffer_.empty() && k != buffer_.back().first + 1)
    throw InvalidArgumentError("control history: steps must be consecutive");
  buffer_.emplace_back(k, u);
  while (buffer_.size() > capacity_) buffer_.pop_front();
}

std::vector<ControlInput> ControlHistory::since(std::int64_t capture_step, std::int64_t now) const {
  if (capture_step > now) throw SimulationFault("detection captured in the future");
  std::vector<ControlInput> out;
  if (capture_step == now) return out;
  if (buffer_.empty() || capture_step < buffer_.front().first || now - 1 > buffer_.back().first) {
    std::ostringstream msg;
    msg << "controls for steps " << capture_step << ".." << now - 1 << " are not buffered";
    throw SimulationFault(msg.str());
  }
  const auto first = static_cast<std::size_t>(capture_step - buffer_.front().first);
  for (std::size_t i = first; i < first + static_cast<std::size_t>(now - capture_step); ++i)
    out.push_back(buffer_[i].second);
  return out;
}

Localizer::Localizer(MarkerMap map, Transform3 camera_T_base, NoiseModel noise, double dt,
                     std::size_t max_delay_steps, EkfState initial)
    : map_(std::move(map)),
      camera_T_base_(camera_T_base),
      noise_(std::move(noise)),
      dt_(dt),
      history_(max_delay_steps),
      state_(initial) {
  check_covariance(state_.covariance, "initial state");
}

void Localizer::predict(const ControlInput& u_prev) {
  state_ = ekf_predict(state_, u_prev, dt_, noise_.Q);
}

std::size_t Localizer::update(std::span<const MarkerDetection> detections, std::int64_t now) {
  if (detections.empty()) return 0;
  std::vector<Pose2> propagated;
  propagated.reserve(detections.size());
  for (const auto& det : detections) {
    const Pose2 captured = pose_from_detection(det, map_, camera_T_base_);
    const auto controls = history_.since(det.capture_step, now);
    propagated.push_back(propagate_delayed(captured, controls, dt_));
  }
  state_ = ekf_update(state_, stack_measurements(propagated, noise_.R));
  return propagated.size();
}

double nees(const EkfState& state, const Pose2& truth) {
  Eigen::Vector3d e = truth.vector() - state.mean.vector();
  e.z() = wrap_angle(e.z());
  return e.dot(state.covariance.ldlt().solve(e));
}

void write_estimator_trace(std::ostream& out, std::span<const EstimatorTraceRow> rows) {
  out << "k,mean_x,mean_y,mean_theta,cov_xx,cov_yy,cov_tt,n_markers\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    const auto& m = r.state.mean;
    const auto& p = r.state.covariance;
    out << r.k << ',' << m.x() << ',' << m.y() << ',' << m.theta() << ',' << p(0, 0) << ','
        << p(1, 1) << ',' << p(2, 2) << ',' << r.n_markers << '\n';
  }
  out.precision(old);
}

}  // namespace mobileprint
