#include "mobileprint/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mobileprint {

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

Eigen::Vector2d right_normal(const Eigen::Vector2d& dir) { return {dir.y(), -dir.x()}; }

int orientation(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const double v = cross2(b - a, c - a);
  if (std::abs(v) < 1e-14) return 0;
  return v > 0 ? 1 : -1;
}

bool on_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return std::min(a.x(), b.x()) - 1e-14 <= p.x() && p.x() <= std::max(a.x(), b.x()) + 1e-14 &&
         std::min(a.y(), b.y()) - 1e-14 <= p.y() && p.y() <= std::max(a.y(), b.y()) + 1e-14;
}

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                        const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

struct OffsetEdge {
  Eigen::Vector2d origin;  // offset image of the edge start vertex
  Eigen::Vector2d dir;     // unit direction
  double length = 0.0;
  double trim_start = 0.0;  // parameter range kept after reflex trimming
  double trim_end = 0.0;
  Eigen::Vector2d at(double t) const { return origin + t * dir; }
};

// Shared by the closed and open offsets. `closed` adds the wrap-around joint.
std::vector<OffsetEdge> build_offset_edges(std::span<const Eigen::Vector2d> pts, double distance,
                                           bool closed) {
  const std::size_t n = pts.size();
  const std::size_t edge_count = closed ? n : n - 1;
  std::vector<OffsetEdge> edges(edge_count);
  for (std::size_t i = 0; i < edge_count; ++i) {
    const Eigen::Vector2d a = pts[i];
    const Eigen::Vector2d b = pts[(i + 1) % n];
    OffsetEdge e;
    e.length = (b - a).norm();
    if (e.length <= 0.0) throw PlanningError("offset: zero-length edge");
    e.dir = (b - a) / e.length;
    e.origin = a + distance * right_normal(e.dir);
    e.trim_start = 0.0;
    e.trim_end = e.length;
    edges[i] = e;
  }
  // Reflex joints (right turns) trim both adjacent edges to their crossing.
  const std::size_t joint_count = closed ? edge_count : edge_count - 1;
  for (std::size_t j = 0; j < joint_count; ++j) {
    OffsetEdge& in = edges[j];
    OffsetEdge& out = edges[(j + 1) % edge_count];
    const double turn = cross2(in.dir, out.dir);
    if (turn >= -1e-12) continue;
    // Solve in.origin + a*in.dir = out.origin + b*out.dir.
    const Eigen::Vector2d rhs = out.origin - in.origin;
    const double denom = cross2(in.dir, out.dir);
    const double a = cross2(rhs, out.dir) / denom;
    const double b = cross2(rhs, in.dir) / denom;
    in.trim_end = std::min(in.trim_end, a);
    out.trim_start = std::max(out.trim_start, b);
  }
  for (std::size_t i = 0; i < edge_count; ++i) {
    if (edges[i].trim_end < edges[i].trim_start - 1e-12)
      throw PlanningError("offset: edge collapses at this offset distance", i);
  }
  return edges;
}

void append_join(std::vector<CurvePiece>& pieces, const OffsetEdge& in, const OffsetEdge& out,
                 const Eigen::Vector2d& vertex, double distance) {
  const double turn = cross2(in.dir, out.dir);
  if (turn <= 1e-12) return;
  const Eigen::Vector2d n_in = right_normal(in.dir);
  const Eigen::Vector2d n_out = right_normal(out.dir);
  const double a0 = std::atan2(n_in.y(), n_in.x());
  const double sweep = std::atan2(cross2(n_in, n_out), n_in.dot(n_out));
  pieces.push_back(CurvePiece::arc(vertex, distance, a0, sweep));
}

void append_line(std::vector<CurvePiece>& pieces, const Eigen::Vector2d& a,
                 const Eigen::Vector2d& b) {
  if ((b - a).norm() > 1e-12) pieces.push_back(CurvePiece::line(a, b));
}

}  // namespace

double signed_area(std::span<const Eigen::Vector2d> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i)
    a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

Polygon make_ccw(Polygon poly) {
  if (signed_area(poly) < 0.0) std::reverse(poly.begin() + 1, poly.end());
  return poly;
}

bool is_simple(std::span<const Eigen::Vector2d> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

bool is_convex(std::span<const Eigen::Vector2d> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross2(poly[(i + 1) % n] - poly[i], poly[(i + 2) % n] - poly[(i + 1) % n]);
    if (std::abs(c) < 1e-14) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return sign != 0;
}

bool point_in_polygon(const Eigen::Vector2d& p, std::span<const Eigen::Vector2d> poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double distance_to_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                           const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double distance_to_polyline(const Eigen::Vector2d& p, std::span<const Eigen::Vector2d> pts,
                            bool closed) {
  if (pts.size() == 1) return (p - pts[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  const std::size_t edges = closed ? pts.size() : pts.size() - 1;
  for (std::size_t i = 0; i < edges; ++i)
    best = std::min(best, distance_to_segment(p, pts[i], pts[(i + 1) % pts.size()]));
  return best;
}

CurvePiece CurvePiece::line(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  CurvePiece c;
  c.kind = Kind::Line;
  c.start = a;
  c.end = b;
  return c;
}

CurvePiece CurvePiece::arc(const Eigen::Vector2d& center, double radius, double start_angle,
                           double sweep) {
  CurvePiece c;
  c.kind = Kind::Arc;
  c.center = center;
  c.radius = radius;
  c.start_angle = start_angle;
  c.sweep = sweep;
  c.start = center + radius * Eigen::Vector2d(std::cos(start_angle), std::sin(start_angle));
  c.end = center + radius * Eigen::Vector2d(std::cos(start_angle + sweep),
                                            std::sin(start_angle + sweep));
  return c;
}

double CurvePiece::length() const {
  return kind == Kind::Line ? (end - start).norm() : radius * std::abs(sweep);
}

Eigen::Vector2d CurvePiece::point(double s) const {
  if (kind == Kind::Line) {
    const double len = length();
    return len > 0.0 ? Eigen::Vector2d(start + (s / len) * (end - start)) : start;
  }
  const double a = start_angle + std::copysign(s / radius, sweep);
  return center + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
}

double CurvePiece::heading(double s) const {
  if (kind == Kind::Line) {
    const Eigen::Vector2d d = end - start;
    return std::atan2(d.y(), d.x());
  }
  const double a = start_angle + std::copysign(s / radius, sweep);
  return wrap_angle(a + std::copysign(kPi / 2.0, sweep));
}

PlanarCurve::PlanarCurve(std::vector<CurvePiece> pieces, bool closed)
    : pieces_(std::move(pieces)), closed_(closed) {
  cumulative_.reserve(pieces_.size() + 1);
  cumulative_.push_back(0.0);
  for (const auto& p : pieces_) cumulative_.push_back(cumulative_.back() + p.length());
}

std::size_t PlanarCurve::locate(double& s) const {
  const double total = length();
  if (closed_ && total > 0.0) {
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
  } else {
    s = std::clamp(s, 0.0, total);
  }
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t idx = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  idx = std::min(idx, pieces_.size() - 1);
  s -= cumulative_[idx];
  return idx;
}

Eigen::Vector2d PlanarCurve::point_at(double s) const {
  const std::size_t i = locate(s);
  return pieces_[i].point(s);
}

double PlanarCurve::heading_at(double s) const {
  const std::size_t i = locate(s);
  return pieces_[i].heading(s);
}

Pose2 PlanarCurve::pose_at(double s) const {
  const std::size_t i = locate(s);
  const Eigen::Vector2d p = pieces_[i].point(s);
  return {p.x(), p.y(), pieces_[i].heading(s)};
}

double PlanarCurve::distance_to(const Eigen::Vector2d& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& piece : pieces_) {
    if (piece.kind == CurvePiece::Kind::Line) {
      best = std::min(best, distance_to_segment(p, piece.start, piece.end));
      continue;
    }
    const Eigen::Vector2d r = p - piece.center;
    const double ang = std::atan2(r.y(), r.x());
    double rel = wrap_angle(ang - piece.start_angle);
    if (piece.sweep < 0) rel = -rel;
    if (rel < 0) rel += kTwoPi;
    if (rel <= std::abs(piece.sweep)) {
      best = std::min(best, std::abs(r.norm() - piece.radius));
    } else {
      best = std::min({best, (p - piece.start).norm(), (p - piece.end).norm()});
    }
  }
  return best;
}

PlanarCurve polyline_curve(std::span<const Eigen::Vector2d> pts, bool closed) {
  std::vector<CurvePiece> pieces;
  const std::size_t edges = closed ? pts.size() : pts.size() - 1;
  for (std::size_t i = 0; i < edges; ++i) append_line(pieces, pts[i], pts[(i + 1) % pts.size()]);
  return {std::move(pieces), closed};
}

PlanarCurve offset_polygon(std::span<const Eigen::Vector2d> ccw_poly, double distance,
                           std::size_t start_edge, double start_t) {
  const std::size_t n = ccw_poly.size();
  if (n < 3) throw PlanningError("offset_polygon: polygon needs at least 3 vertices");
  const auto edges = build_offset_edges(ccw_poly, distance, true);
  start_edge %= n;
  const OffsetEdge& first = edges[start_edge];
  const double t0 = std::clamp(start_t * first.length, first.trim_start, first.trim_end);
  const Eigen::Vector2d start_pt = first.at(t0);

  std::vector<CurvePiece> pieces;
  append_line(pieces, start_pt, first.at(first.trim_end));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (start_edge + k) % n;
    const std::size_t next = (i + 1) % n;
    append_join(pieces, edges[i], edges[next], ccw_poly[next], distance);
    if (next == start_edge) break;
    append_line(pieces, edges[next].at(edges[next].trim_start), edges[next].at(edges[next].trim_end));
  }
  append_line(pieces, first.at(first.trim_start), start_pt);
  return {std::move(pieces), true};
}

PlanarCurve offset_polyline_right(std::span<const Eigen::Vector2d> pts, double distance) {
  if (pts.size() < 2) throw PlanningError("offset_polyline_right: need at least 2 points");
  const auto edges = build_offset_edges(pts, distance, false);
  std::vector<CurvePiece> pieces;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    append_line(pieces, edges[i].at(edges[i].trim_start), edges[i].at(edges[i].trim_end));
    if (i + 1 < edges.size()) append_join(pieces, edges[i], edges[i + 1], pts[i + 1], distance);
  }
  return {std::move(pieces), false};
}

}  // namespace mobileprint
