#include "mobileprint/toolpath.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mobileprint {

namespace {

double polyline_length(std::span<const Eigen::Vector2d> pts) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  return total;
}

Eigen::Vector2d polyline_point(std::span<const Eigen::Vector2d> pts, double s) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = (pts[i] - pts[i - 1]).norm();
    if (s <= len || i + 1 == pts.size()) {
      if (len <= 0.0) return pts[i];
      const double f = std::clamp(s / len, 0.0, 1.0);
      return pts[i - 1] + f * (pts[i] - pts[i - 1]);
    }
    s -= len;
  }
  return pts.back();
}

void push_distinct(std::vector<Eigen::Vector2d>& pts, const Eigen::Vector2d& p) {
  if (pts.empty() || (pts.back() - p).norm() > 1e-12) pts.push_back(p);
}

// Perimeter parameterization of a closed CCW polygon.
class Boundary {
 public:
  explicit Boundary(const Polygon& poly) : poly_(poly), sigma_(poly.size() + 1, 0.0) {
    for (std::size_t i = 0; i < poly_.size(); ++i)
      sigma_[i + 1] = sigma_[i] + (poly_[(i + 1) % poly_.size()] - poly_[i]).norm();
  }

  double perimeter() const { return sigma_.back(); }
  double vertex_sigma(std::size_t i) const { return sigma_[i]; }

  double sigma_of(std::size_t edge, double t) const {
    return sigma_[edge] + t * (sigma_[edge + 1] - sigma_[edge]);
  }

  Eigen::Vector2d point(double sigma) const {
    sigma = wrap(sigma);
    for (std::size_t i = 0; i < poly_.size(); ++i) {
      if (sigma <= sigma_[i + 1] || i + 1 == poly_.size()) {
        const double len = sigma_[i + 1] - sigma_[i];
        const double f = len > 0.0 ? (sigma - sigma_[i]) / len : 0.0;
        return poly_[i] + f * (poly_[(i + 1) % poly_.size()] - poly_[i]);
      }
    }
    return poly_.front();
  }

  // Forward (CCW) walk; a == b walks the full loop.
  std::vector<Eigen::Vector2d> walk_ccw(double a, double b) const {
    const double span = a == b ? perimeter() : wrap(b - a);
    std::vector<Eigen::Vector2d> out{point(a)};
    // Vertices strictly inside the walk, in order of travel.
    std::vector<std::pair<double, std::size_t>> inner;
    for (std::size_t i = 0; i < poly_.size(); ++i) {
      const double d = wrap(sigma_[i] - a);
      if (d > 1e-12 && d < span - 1e-12) inner.emplace_back(d, i);
    }
    std::sort(inner.begin(), inner.end());
    for (const auto& [d, i] : inner) push_distinct(out, poly_[i]);
    push_distinct(out, point(a + span));
    if (a == b && out.size() > 1 && (out.back() - out.front()).norm() > 1e-12)
      out.push_back(out.front());
    return out;
  }

  std::vector<Eigen::Vector2d> walk_shorter(double a, double b) const {
    const double fwd = wrap(b - a);
    if (fwd <= perimeter() - fwd) return walk_ccw(a, b);
    auto back = walk_ccw(b, a);
    std::reverse(back.begin(), back.end());
    return back;
  }

 private:
  double wrap(double s) const {
    const double p = perimeter();
    s = std::fmod(s, p);
    if (s < 0.0) s += p;
    return s;
  }

  Polygon poly_;
  std::vector<double> sigma_;
};

struct Rung {
  double lo_sigma = 0.0;
  double hi_sigma = 0.0;
};

// Rungs perpendicular to the long bounding-box axis, at the largest count
// whose pitch is at least `spacing`.
std::vector<Rung> place_rungs(const Polygon& poly, const Boundary& boundary, double spacing) {
  Eigen::Vector2d lo = poly.front(), hi = poly.front();
  for (const auto& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Eigen::Vector2d extent = hi - lo;
  const int u = extent.x() >= extent.y() ? 0 : 1;
  const int v = 1 - u;
  const double length = extent[u];
  const long count = static_cast<long>(std::floor(length / spacing + 1e-9)) - 1;
  std::vector<Rung> rungs;
  if (count <= 0) return rungs;
  const double pitch = length / static_cast<double>(count + 1);

  for (long j = 1; j <= count; ++j) {
    const double c = lo[u] + pitch * static_cast<double>(j);
    double best_lo = 0.0, best_hi = 0.0;
    double v_lo = 0.0, v_hi = 0.0;
    bool found = false;
    for (std::size_t e = 0; e < poly.size(); ++e) {
      const Eigen::Vector2d a = poly[e];
      const Eigen::Vector2d b = poly[(e + 1) % poly.size()];
      const double da = a[u] - c, db = b[u] - c;
      if (da * db > 0.0 || a[u] == b[u]) continue;
      const double t = std::clamp(da / (da - db), 0.0, 1.0);
      const double vv = a[v] + t * (b[v] - a[v]);
      const double sig = boundary.sigma_of(e, t);
      if (!found || vv < v_lo) { v_lo = vv; best_lo = sig; }
      if (!found || vv > v_hi) { v_hi = vv; best_hi = sig; }
      found = true;
    }
    if (!found || v_hi - v_lo <= 1e-9) continue;
    rungs.push_back({best_lo, best_hi});
  }
  return rungs;
}

std::vector<Eigen::Vector2d> serpentine(const Boundary& boundary, const std::vector<Rung>& rungs) {
  std::vector<Eigen::Vector2d> out;
  for (std::size_t j = 0; j < rungs.size(); ++j) {
    const bool up = j % 2 == 0;
    const double from = up ? rungs[j].lo_sigma : rungs[j].hi_sigma;
    const double to = up ? rungs[j].hi_sigma : rungs[j].lo_sigma;
    push_distinct(out, boundary.point(from));
    push_distinct(out, boundary.point(to));
    if (j + 1 < rungs.size()) {
      const double next = up ? rungs[j + 1].hi_sigma : rungs[j + 1].lo_sigma;
      for (const auto& p : boundary.walk_shorter(to, next)) push_distinct(out, p);
    }
  }
  return out;
}

void locate_seam(const Polygon& poly, const Boundary& boundary, double sigma, std::size_t& edge,
                 double& t) {
  for (std::size_t e = 0; e < poly.size(); ++e) {
    const double s0 = boundary.vertex_sigma(e), s1 = boundary.vertex_sigma(e + 1);
    if (sigma >= s0 - 1e-12 && sigma < s1 - 1e-12) {
      edge = e;
      t = std::clamp((sigma - s0) / (s1 - s0), 0.0, 1.0);
      return;
    }
  }
  edge = 0;
  t = 0.0;
}

NozzlePath sample_laps(std::vector<Lap> laps, double speed, double dt) {
  if (!(speed > 0.0)) throw InvalidArgumentError("nozzle speed must be positive");
  if (!(dt > 0.0)) throw InvalidArgumentError("dt must be positive");
  double total = 0.0;
  for (auto& lap : laps) {
    lap.start = total;
    lap.length = polyline_length(lap.polyline);
    total += lap.length;
  }
  const double step = speed * dt;
  const auto count = static_cast<std::size_t>(std::floor(total / step + 1e-9));

  NozzlePath out{PointPath(dt, {Eigen::Vector3d::Zero()}), {}, {}, speed, {}, false, 0, 0.0};
  out.laps = std::move(laps);
  std::vector<Eigen::Vector3d> samples;
  samples.reserve(count + 1);
  out.progress.reserve(count + 1);
  for (std::size_t i = 0; i <= count; ++i) {
    const double s = step * static_cast<double>(i);
    const Lap& lap = out.laps[out.lap_index(s)];
    const Eigen::Vector2d p = polyline_point(lap.polyline, s - lap.start);
    samples.emplace_back(p.x(), p.y(), lap.z);
    out.progress.push_back(s);
  }
  out.path = PointPath(dt, std::move(samples));
  return out;
}

NozzlePath build_layers(const StructureSpec& spec, const std::vector<double>& heights,
                        double speed, double dt) {
  spec.validate();
  const Polygon poly = make_ccw(spec.footprint);
  const Boundary boundary(poly);
  std::vector<Rung> rungs;
  if (spec.infill_spacing > 0.0) rungs = place_rungs(poly, boundary, spec.infill_spacing);

  const double seam_sigma = rungs.empty() ? 0.0 : rungs.front().lo_sigma;
  const auto loop = boundary.walk_ccw(seam_sigma, seam_sigma);
  const auto fill = serpentine(boundary, rungs);

  std::vector<Lap> laps;
  laps.reserve(heights.size());
  for (std::size_t layer = 0; layer < heights.size(); ++layer) {
    Lap lap;
    lap.z = heights[layer];
    if (fill.empty()) {
      lap.polyline = loop;
    } else if (layer % 2 == 0) {
      lap.polyline = loop;
      for (const auto& p : fill) push_distinct(lap.polyline, p);
    } else {
      lap.polyline.assign(fill.rbegin(), fill.rend());
      for (const auto& p : loop) push_distinct(lap.polyline, p);
    }
    laps.push_back(std::move(lap));
  }

  NozzlePath out = sample_laps(std::move(laps), speed, dt);
  out.guide = poly;
  out.closed = true;
  locate_seam(poly, boundary, seam_sigma, out.seam_edge, out.seam_t);
  return out;
}

std::vector<Eigen::Vector2d> xy_of(std::span<const Eigen::Vector3d> pts) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& p : pts) push_distinct(out, p.head<2>());
  return out;
}

PosePath sample_base(const NozzlePath& nozzle, const PlanarCurve& circuit) {
  std::vector<Pose2> poses;
  poses.reserve(nozzle.path.size());
  const double circuit_length = circuit.length();
  for (std::size_t k = 0; k < nozzle.path.size(); ++k) {
    const double s = nozzle.progress[k];
    const Lap& lap = nozzle.laps[nozzle.lap_index(s)];
    const double f = lap.length > 0.0 ? (s - lap.start) / lap.length : 0.0;
    poses.push_back(circuit.pose_at(f * circuit_length));
  }
  return {nozzle.path.dt(), std::move(poses)};
}

}  // namespace

StructureSpec StructureSpec::rectangle(double length, double width, double height,
                                       double layer_height, double infill_spacing) {
  StructureSpec spec;
  spec.footprint = {{0.0, 0.0}, {length, 0.0}, {length, width}, {0.0, width}};
  spec.length = length;
  spec.width = width;
  spec.height = height;
  spec.layer_height = layer_height;
  spec.infill_spacing = infill_spacing;
  return spec;
}

std::size_t StructureSpec::layer_count() const {
  if (!(layer_height > 0.0)) return 0;
  return static_cast<std::size_t>(std::llround(height / layer_height));
}

void StructureSpec::validate() const {
  if (footprint.size() < 3) throw InvalidSpecError("footprint needs at least 3 vertices");
  if (std::abs(signed_area(footprint)) <= 1e-12)
    throw InvalidSpecError("footprint has zero area");
  if (!is_simple(footprint)) throw InvalidSpecError("footprint is self-intersecting");
  if (!(height > 0.0)) throw InvalidSpecError("structure height must be positive");
  if (!(layer_height > 0.0)) throw InvalidSpecError("layer height must be positive");
  const double layers = height / layer_height;
  if (std::abs(layers - std::round(layers)) > 1e-9 || std::round(layers) < 1.0)
    throw InvalidSpecError("height is not an integer number of layers");
  if (infill_spacing < 0.0) throw InvalidSpecError("infill spacing must be non-negative");
  if (infill_spacing > 0.0 && !is_convex(footprint))
    throw InvalidSpecError("serpentine infill requires a convex footprint");
}

std::size_t NozzlePath::lap_index(double s) const {
  // First lap whose start is beyond s, minus one.
  auto it = std::upper_bound(laps.begin(), laps.end(), s,
                             [](double value, const Lap& lap) { return value < lap.start; });
  if (it == laps.begin()) return 0;
  return static_cast<std::size_t>(it - laps.begin()) - 1;
}

NozzlePath slice_structure(const StructureSpec& spec, double nozzle_speed, double dt) {
  spec.validate();
  std::vector<double> heights(spec.layer_count());
  for (std::size_t i = 0; i < heights.size(); ++i)
    heights[i] = static_cast<double>(i + 1) * spec.layer_height;
  return build_layers(spec, heights, nozzle_speed, dt);
}

NozzlePath slice_laps(const StructureSpec& spec, std::size_t laps, double z, double nozzle_speed,
                      double dt) {
  if (laps == 0) throw InvalidSpecError("lap count must be positive");
  return build_layers(spec, std::vector<double>(laps, z), nozzle_speed, dt);
}

NozzlePath open_nozzle_path(std::span<const Eigen::Vector3d> vertices, double nozzle_speed,
                            double dt) {
  if (vertices.size() < 2) throw InvalidSpecError("open path needs at least 2 vertices");
  Lap lap;
  lap.z = vertices.front().z();
  lap.polyline = xy_of(vertices);
  if (lap.polyline.size() < 2) throw InvalidSpecError("open path has zero length");
  NozzlePath out = sample_laps({std::move(lap)}, nozzle_speed, dt);
  out.guide = out.laps.front().polyline;
  out.closed = false;
  return out;
}

BasePath prescribe_base_path(const NozzlePath& nozzle, double standoff, double clearance,
                             const ReachBand& reach) {
  if (standoff < clearance) {
    std::ostringstream msg;
    msg << "standoff " << standoff << " m is below the clearance " << clearance << " m";
    throw PlanningError(msg.str());
  }
  if (standoff < reach.min || standoff > reach.max) {
    std::ostringstream msg;
    msg << "standoff " << standoff << " m is outside the reach band [" << reach.min << ", "
        << reach.max << "] m";
    throw PlanningError(msg.str());
  }
  PlanarCurve circuit = nozzle.closed
                            ? offset_polygon(nozzle.guide, standoff, nozzle.seam_edge, nozzle.seam_t)
                            : offset_polyline_right(nozzle.guide, standoff);
  PosePath path = sample_base(nozzle, circuit);

  for (std::size_t k = 0; k < path.size(); ++k) {
    const Eigen::Vector2d p = path[k].translation();
    const bool inside = nozzle.closed && point_in_polygon(p, nozzle.guide);
    const double d = distance_to_polyline(p, nozzle.guide, nozzle.closed);
    if (inside || d < clearance - 1e-9) {
      std::ostringstream msg;
      msg << "base sample " << k << " violates clearance (distance " << d << " m)";
      throw PlanningError(msg.str(), k);
    }
  }
  return {std::move(path), std::move(circuit)};
}

PrintPlan synchronize(const NozzlePath& nozzle, const BasePath& base, const ReachBand& reach) {
  if (std::abs(base.path.dt() - nozzle.path.dt()) > 1e-15)
    throw SynchronizationError("nozzle and base paths have different dt");

  PlanarCurve circuit = base.circuit;
  if (circuit.empty()) {
    std::vector<Eigen::Vector2d> pts;
    for (const auto& p : base.path) push_distinct(pts, p.translation());
    if (pts.size() < 2) throw SynchronizationError("base path has no extent");
    if (nozzle.closed && (pts.back() - pts.front()).norm() < 1e-12) pts.pop_back();
    circuit = polyline_curve(pts, nozzle.closed);
  }

  PosePath aligned = sample_base(nozzle, circuit);
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    const double d = (nozzle.path[k].head<2>() - aligned[k].translation()).norm();
    if (d > reach.max + 1e-12 || d < reach.min - 1e-12) {
      std::ostringstream msg;
      msg << "reach violated at index " << k << ": nozzle-base distance " << d
          << " m outside [" << reach.min << ", " << reach.max << "] m";
      throw SynchronizationError(msg.str(), k);
    }
  }

  PrintPlan plan{nozzle, std::move(aligned), std::move(circuit), nozzle.speed,
                 nozzle.laps.size(), reach};
  return plan;
}

PrintPlan plan_print(const StructureSpec& spec, const PlanningOptions& options) {
  const NozzlePath nozzle = slice_structure(spec, options.nozzle_speed, options.dt);
  const BasePath base = prescribe_base_path(nozzle, options.standoff, options.clearance, options.reach);
  return synchronize(nozzle, base, options.reach);
}

PrintPlan plan_air_laps(const StructureSpec& spec, std::size_t laps,
                        const PlanningOptions& options) {
  const NozzlePath nozzle =
      slice_laps(spec, laps, spec.layer_height, options.nozzle_speed, options.dt);
  const BasePath base = prescribe_base_path(nozzle, options.standoff, options.clearance, options.reach);
  return synchronize(nozzle, base, options.reach);
}

}  // namespace mobileprint
