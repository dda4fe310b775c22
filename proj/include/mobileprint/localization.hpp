#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "mobileprint/core.hpp"

namespace mobileprint {

struct Marker {
  int id = 0;
  Transform3 world_T_marker;
};

// Ground markers with unique ids, lying flat (z = 0, yaw-only rotation).
class MarkerMap {
 public:
  MarkerMap() = default;
  explicit MarkerMap(std::vector<Marker> markers);

  void add(int id, const Transform3& world_T_marker);
  // Throws UnknownMarkerError.
  const Transform3& at(int id) const;
  bool contains(int id) const;
  std::size_t size() const { return markers_.size(); }
  bool empty() const { return markers_.empty(); }
  const std::vector<Marker>& markers() const { return markers_; }

 private:
  std::vector<Marker> markers_;
};

struct MarkerDetection {
  int marker_id = 0;
  Transform3 marker_T_camera;  // camera pose in the marker frame
  std::int64_t capture_step = 0;
};

struct EkfState {
  Pose2 mean;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity() * 1e-4;
};

struct NoiseModel {
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity() * 1e-6;  // per step
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity() * 1e-4;  // per marker
};

// world_T_base = world_T_marker * marker_T_camera * camera_T_base, projected
// to the ground plane.
Pose2 pose_from_detection(const MarkerDetection& det, const MarkerMap& map,
                          const Transform3& camera_T_base);

// estimate + dt * sum(controls), theta wrapped.
Pose2 propagate_delayed(const Pose2& estimate, std::span<const ControlInput> controls, double dt);

struct StackedMeasurement {
  Eigen::VectorXd z;  // [x1 y1 th1 x2 y2 th2 ...]
  Eigen::MatrixXd H;  // stacked identity blocks
  Eigen::MatrixXd R;  // blockdiag(R, ..., R)

  std::size_t count() const { return static_cast<std::size_t>(z.size() / 3); }
};

// Throws NoVisibleMarkerError on an empty list.
StackedMeasurement stack_measurements(std::span<const Pose2> propagated,
                                      const Eigen::Matrix3d& R = NoiseModel{}.R);

EkfState ekf_predict(const EkfState& state, const ControlInput& u, double dt,
                     const Eigen::Matrix3d& Q);

// Joseph-form update with wrapped angle innovations. Throws
// FilterDivergenceError when the innovation covariance is not positive
// definite or the posterior loses definiteness.
EkfState ekf_update(const EkfState& state, const StackedMeasurement& z);

// Controls sent over the last `capacity` steps, keyed by step index.
class ControlHistory {
 public:
  explicit ControlHistory(std::size_t capacity = 4) : capacity_(capacity) {}

  // u was applied from step k to k + 1; steps must be pushed in order.
  void push(std::int64_t k, const ControlInput& u);
  // Controls u_capture .. u_{now-1}; throws SimulationFault when they are
  // no longer (or not yet) buffered.
  std::vector<ControlInput> since(std::int64_t capture_step, std::int64_t now) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<std::pair<std::int64_t, ControlInput>> buffer_;
};

struct EstimatorTraceRow {
  std::int64_t k = 0;
  EkfState state;
  std::size_t n_markers = 0;
};

// Filter wired to a marker map and camera mount; one instance per run.
class Localizer {
 public:
  Localizer(MarkerMap map, Transform3 camera_T_base, NoiseModel noise, double dt,
            std::size_t max_delay_steps, EkfState initial);

  // Prediction with the control applied over the previous step.
  void predict(const ControlInput& u_prev);
  // Propagates each detection to `now`, stacks and fuses them. Returns the
  // number of markers used (zero leaves the state untouched).
  std::size_t update(std::span<const MarkerDetection> detections, std::int64_t now);
  void record_control(std::int64_t k, const ControlInput& u) { history_.push(k, u); }

  const EkfState& state() const { return state_; }
  const MarkerMap& map() const { return map_; }
  const NoiseModel& noise() const { return noise_; }

 private:
  MarkerMap map_;
  Transform3 camera_T_base_;
  NoiseModel noise_;
  double dt_;
  ControlHistory history_;
  EkfState state_;
};

// Normalized estimation error squared, angle difference wrapped.
double nees(const EkfState& state, const Pose2& truth);

void write_estimator_trace(std::ostream& out, std::span<const EstimatorTraceRow> rows);

}  // namespace mobileprint
