#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mobileprint/core.hpp"

namespace mobileprint {

enum class SegmentAxis { XParallel, YParallel };

inline constexpr double kDefaultCornerMargin = 0.1;

// One straight run of the desired path with the measured points assigned
// to it.
struct PathSegment {
  std::string label;
  SegmentAxis axis = SegmentAxis::XParallel;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d end = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> points;
};

// Straight runs of the desired path (constant heading), merged across laps
// and labelled A, B, C, ... in order of first appearance.
std::vector<PathSegment> straight_segments(const PosePath& desired, double min_length = 0.0);

// Assigns each measured point to the nearest straight segment, discarding
// points that project within corner_margin of a segment end. Throws
// InsufficientDataError when a segment keeps fewer than 10 points.
std::vector<PathSegment> segment_points(std::span<const Eigen::Vector2d> measured,
                                        const PosePath& desired,
                                        double corner_margin = kDefaultCornerMargin);

struct SegmentFit {
  SegmentAxis axis = SegmentAxis::XParallel;
  double a = 0.0;  // slope; for Y-parallel segments x = a y + b
  double b = 0.0;
  std::size_t n_points = 0;
  std::vector<double> residuals;  // cross-axis residual per point
};

// Least-squares line in the segment's own coordinates. Throws
// VerticalDegeneracyError when the independent coordinate has no spread.
SegmentFit fit_line(std::span<const Eigen::Vector2d> points,
                    SegmentAxis axis = SegmentAxis::XParallel);

struct PrecisionReport {
  double e_max = 0.0;
  double e_mean = 0.0;      // root mean square over all pooled residuals
  double e_abs_mean = 0.0;  // plain mean of |r|, reported alongside
  std::vector<SegmentFit> fits;
};

PrecisionReport precision(std::span<const SegmentFit> fits);

// Perpendicular distance from a fitted line to a point.
double line_distance(const SegmentFit& fit, const Eigen::Vector2d& p);

// Largest distance from any fitted line to the endpoints of its desired
// segment.
double accuracy(std::span<const SegmentFit> fits, std::span<const PathSegment> segments);

struct MetricsResult {
  std::vector<PathSegment> segments;
  PrecisionReport precision;
  double accuracy = 0.0;
};

MetricsResult evaluate_path(std::span<const Eigen::Vector2d> measured, const PosePath& desired,
                            double corner_margin = kDefaultCornerMargin);

void write_metrics_json(std::ostream& out, const MetricsResult& m);

// Measured path, desired path and fitted lines, plotted in world metres.
void write_metrics_svg(std::ostream& out, std::span<const Eigen::Vector2d> measured,
                       const PosePath& desired, const MetricsResult& m);

}  // namespace mobileprint
