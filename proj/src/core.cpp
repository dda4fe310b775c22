#include "mobileprint/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mobileprint {

double wrap_angle(double theta) {
  double r = std::remainder(theta, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

Pose2 Pose2::inverse() const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {-c * x_ - s * y_, s * x_ - c * y_, -theta_};
}

Eigen::Vector2d Pose2::transform(const Eigen::Vector2d& p) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {x_ + c * p.x() - s * p.y(), y_ + s * p.x() + c * p.y()};
}

Pose2 compose_pose(const Pose2& a, const Pose2& b) {
  const Eigen::Vector2d t = a.transform(b.translation());
  return {t.x(), t.y(), a.theta() + b.theta()};
}

Transform3 Transform3::from_matrix(const Eigen::Matrix4d& m) {
  Transform3 t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

Transform3 Transform3::from_translation(const Eigen::Vector3d& t) {
  Transform3 out;
  out.translation = t;
  return out;
}

Transform3 Transform3::from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                       const Eigen::Vector3d& t) {
  Transform3 out;
  out.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  out.translation = t;
  return out;
}

Transform3 Transform3::from_rpy(double roll, double pitch, double yaw,
                                const Eigen::Vector3d& t) {
  Transform3 out;
  out.rotation = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
  out.translation = t;
  return out;
}

Eigen::Matrix4d Transform3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Transform3 Transform3::inverse() const {
  Transform3 out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

bool Transform3::is_rigid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Transform3 chain_transforms(std::span<const Transform3> list) {
  if (list.empty()) throw InvalidArgumentError("chain_transforms: empty list");
  Transform3 out = Transform3::identity();
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_rigid()) {
      std::ostringstream msg;
      msg << "chain_transforms: element " << i << " is not a rigid transform";
      throw InvalidArgumentError(msg.str(), i);
    }
    out = out * list[i];
  }
  return out;
}

Transform3 embed_se2(const Pose2& p) {
  return Transform3::from_axis_angle(Eigen::Vector3d::UnitZ(), p.theta(),
                                     {p.x(), p.y(), 0.0});
}

Pose2 project_to_se2(const Transform3& t, double tilt_tolerance) {
  // Angle between the body z axis and the world z axis captures roll and
  // pitch together without needing an Euler decomposition.
  const double cos_tilt = std::clamp(t.rotation(2, 2), -1.0, 1.0);
  const double tilt = std::acos(cos_tilt);
  if (!(tilt <= tilt_tolerance)) {
    std::ostringstream msg;
    msg << "out-of-plane rotation " << tilt << " rad exceeds tolerance " << tilt_tolerance;
    throw DegenerateObservationError(msg.str());
  }
  const double yaw = std::atan2(t.rotation(1, 0), t.rotation(0, 0));
  return {t.translation.x(), t.translation.y(), yaw};
}

bool ControlInput::is_finite() const {
  return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(omega);
}

PointPath constant_speed_path(std::span<const Eigen::Vector3d> vertices, double speed,
                              double dt) {
  if (vertices.empty()) throw InvalidArgumentError("constant_speed_path: no vertices");
  if (!(speed > 0.0) || !(dt > 0.0))
    throw InvalidArgumentError("constant_speed_path: speed and dt must be positive");

  std::vector<double> cumulative(vertices.size(), 0.0);
  for (std::size_t i = 1; i < vertices.size(); ++i)
    cumulative[i] = cumulative[i - 1] + (vertices[i] - vertices[i - 1]).norm();
  const double total = cumulative.back();
  const double step = speed * dt;
  const auto count = static_cast<std::size_t>(std::floor(total / step + 1e-9));

  std::vector<Eigen::Vector3d> samples;
  samples.reserve(count + 1);
  std::size_t seg = 0;
  for (std::size_t i = 0; i <= count; ++i) {
    const double s = std::min(step * static_cast<double>(i), total);
    while (seg + 2 < vertices.size() && cumulative[seg + 1] < s) ++seg;
    const double len = cumulative[seg + 1 < vertices.size() ? seg + 1 : seg] - cumulative[seg];
    if (seg + 1 >= vertices.size() || len <= 0.0) {
      samples.push_back(vertices[seg]);
      continue;
    }
    const double f = (s - cumulative[seg]) / len;
    samples.push_back(vertices[seg] + f * (vertices[seg + 1] - vertices[seg]));
  }
  return {dt, std::move(samples)};
}

double max_relative_speed_deviation(const PointPath& path, double speed) {
  const double step = speed * path.dt();
  double worst = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double d = (path[k] - path[k - 1]).norm();
    worst = std::max(worst, std::abs(d / step - 1.0));
  }
  return worst;
}

}  // namespace mobileprint
