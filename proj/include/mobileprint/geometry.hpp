#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "mobileprint/core.hpp"

namespace mobileprint {

// Closed polygon; the last vertex connects back to the first.
using Polygon = std::vector<Eigen::Vector2d>;

double signed_area(std::span<const Eigen::Vector2d> poly);
Polygon make_ccw(Polygon poly);
bool is_simple(std::span<const Eigen::Vector2d> poly);
bool is_convex(std::span<const Eigen::Vector2d> poly);
bool point_in_polygon(const Eigen::Vector2d& p, std::span<const Eigen::Vector2d> poly);
double distance_to_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                           const Eigen::Vector2d& b);
// Distance to the boundary; `closed` selects polygon vs open polyline.
double distance_to_polyline(const Eigen::Vector2d& p, std::span<const Eigen::Vector2d> pts,
                            bool closed);

// One primitive of a planar curve: a segment or a circular arc.
struct CurvePiece {
  enum class Kind { Line, Arc };
  Kind kind = Kind::Line;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d end = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
  double start_angle = 0.0;
  double sweep = 0.0;  // signed; positive is counter-clockwise

  static CurvePiece line(const Eigen::Vector2d& a, const Eigen::Vector2d& b);
  static CurvePiece arc(const Eigen::Vector2d& center, double radius, double start_angle,
                        double sweep);

  double length() const;
  Eigen::Vector2d point(double s) const;
  double heading(double s) const;
};

// Arc-length parameterized chain of lines and arcs.
class PlanarCurve {
 public:
  PlanarCurve() = default;
  PlanarCurve(std::vector<CurvePiece> pieces, bool closed);

  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  bool closed() const { return closed_; }
  const std::vector<CurvePiece>& pieces() const { return pieces_; }
  bool empty() const { return pieces_.empty(); }

  // Closed curves wrap s modulo length; open curves clamp.
  Eigen::Vector2d point_at(double s) const;
  double heading_at(double s) const;
  Pose2 pose_at(double s) const;

  // Nearest point distance (exact for lines and arcs).
  double distance_to(const Eigen::Vector2d& p) const;

 private:
  std::size_t locate(double& s) const;

  std::vector<CurvePiece> pieces_;
  std::vector<double> cumulative_;
  bool closed_ = false;
};

// Piecewise-linear curve through the given points.
PlanarCurve polyline_curve(std::span<const Eigen::Vector2d> pts, bool closed);

// Outward offset of a counter-clockwise polygon by `distance`: edges shifted
// along their outward normals, convex corners joined by arcs centered on the
// vertex, reflex corners trimmed to the offset-line intersection. The curve
// starts at the offset image of the boundary point (edge, t in [0, 1)).
// Throws PlanningError if an offset edge collapses.
PlanarCurve offset_polygon(std::span<const Eigen::Vector2d> ccw_poly, double distance,
                           std::size_t start_edge, double start_t);

// Offset of an open polyline to the right of its direction of travel, with
// round joins on the outer side of turns.
PlanarCurve offset_polyline_right(std::span<const Eigen::Vector2d> pts, double distance);

}  // namespace mobileprint
