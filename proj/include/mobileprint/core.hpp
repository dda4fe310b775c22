#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "mobileprint/errors.hpp"

namespace mobileprint {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

// SE(2) pose of the mobile base. The heading is wrapped on construction.
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double x, double y, double theta)
      : x_(x), y_(y), theta_(wrap_angle(theta)) {}

  static Pose2 identity() { return {}; }

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }
  Eigen::Vector2d translation() const { return {x_, y_}; }
  Eigen::Vector3d vector() const { return {x_, y_, theta_}; }

  Pose2 inverse() const;
  // Maps a point from this pose's frame into the parent frame.
  Eigen::Vector2d transform(const Eigen::Vector2d& p) const;

  friend bool operator==(const Pose2&, const Pose2&) = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

Pose2 compose_pose(const Pose2& a, const Pose2& b);

// Homogeneous rigid transform. A name like a_T_b reads "pose of frame b
// expressed in frame a": p_a = a_T_b * p_b.
struct Transform3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Transform3 identity() { return {}; }
  static Transform3 from_matrix(const Eigen::Matrix4d& m);
  static Transform3 from_translation(const Eigen::Vector3d& t);
  static Transform3 from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                    const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
  // Fixed-axis roll (x), pitch (y), yaw (z): R = Rz(yaw) Ry(pitch) Rx(roll).
  static Transform3 from_rpy(double roll, double pitch, double yaw,
                             const Eigen::Vector3d& t = Eigen::Vector3d::Zero());

  Eigen::Matrix4d matrix() const;
  Transform3 inverse() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  bool is_rigid(double tol = 1e-9) const;

  friend Transform3 operator*(const Transform3& a, const Transform3& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  }
};

// Left-to-right product of rigid transforms; throws InvalidArgumentError
// on an empty list or a non-orthonormal member.
Transform3 chain_transforms(std::span<const Transform3> list);

inline constexpr double kDefaultTiltTolerance = 0.05;

// Planar embedding at z = 0 with yaw-only rotation.
Transform3 embed_se2(const Pose2& p);

// Drops z, roll and pitch. Throws DegenerateObservationError when the
// rotation tilts more than tilt_tolerance out of the ground plane.
Pose2 project_to_se2(const Transform3& t, double tilt_tolerance = kDefaultTiltTolerance);

// World-frame velocity command of the holonomic base.
struct ControlInput {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;

  Eigen::Vector3d vector() const { return {vx, vy, omega}; }
  bool is_finite() const;
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

// Uniformly sampled sequence; dt > 0 and at least one sample.
template <typename Sample>
class TimedPath {
 public:
  using value_type = Sample;

  TimedPath(double dt, std::vector<Sample> samples)
      : dt_(dt), samples_(std::move(samples)) {
    if (!(dt_ > 0.0)) throw InvalidArgumentError("TimedPath requires dt > 0");
    if (samples_.empty()) throw InvalidArgumentError("TimedPath requires samples");
  }

  double dt() const { return dt_; }
  std::size_t size() const { return samples_.size(); }
  double duration() const { return dt_ * static_cast<double>(samples_.size() - 1); }
  double time_at(std::size_t k) const { return dt_ * static_cast<double>(k); }

  const Sample& operator[](std::size_t k) const { return samples_[k]; }
  const Sample& front() const { return samples_.front(); }
  const Sample& back() const { return samples_.back(); }
  // Clamped access: indices past the end repeat the final sample.
  const Sample& at_or_last(std::size_t k) const {
    return k < samples_.size() ? samples_[k] : samples_.back();
  }
  const std::vector<Sample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

 private:
  double dt_;
  std::vector<Sample> samples_;
};

using PosePath = TimedPath<Pose2>;
using PointPath = TimedPath<Eigen::Vector3d>;

// Resamples a 3D polyline at constant arc length speed * dt. The final
// partial step, if any, is dropped so that every step has equal length.
PointPath constant_speed_path(std::span<const Eigen::Vector3d> vertices, double speed,
                              double dt);

// Max |step / (speed*dt) - 1| over consecutive samples (Euclidean steps).
double max_relative_speed_deviation(const PointPath& path, double speed);

}  // namespace mobileprint
