#include "mobileprint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace mobileprint {

namespace {

// Segment-local coordinates: (independent, dependent).
Eigen::Vector2d local(const Eigen::Vector2d& p, SegmentAxis axis) {
  return axis == SegmentAxis::XParallel ? p : Eigen::Vector2d(p.y(), p.x());
}

SegmentAxis axis_of(double heading) {
  return std::abs(std::cos(heading)) >= std::abs(std::sin(heading)) ? SegmentAxis::XParallel
                                                                    : SegmentAxis::YParallel;
}

std::string label_for(std::size_t i) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('A' + i % 26));
    i /= 26;
  } while (i-- > 0);
  return s;
}

bool same_line(const PathSegment& seg, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d d = (seg.end - seg.start).normalized();
  const Eigen::Vector2d e = (b - a).normalized();
  const auto off = [&](const Eigen::Vector2d& p) {
    const Eigen::Vector2d r = p - seg.start;
    return std::abs(d.x() * r.y() - d.y() * r.x());
  };
  return std::abs(d.x() * e.y() - d.y() * e.x()) < 1e-6 && d.dot(e) > 0 && off(a) < 1e-6 &&
         off(b) < 1e-6;
}

void extend(PathSegment& seg, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d d = (seg.end - seg.start).normalized();
  double lo = 0.0, hi = (seg.end - seg.start).norm();
  const Eigen::Vector2d origin = seg.start;
  lo = std::min({lo, d.dot(a - origin), d.dot(b - origin)});
  hi = std::max({hi, d.dot(a - origin), d.dot(b - origin)});
  seg.start = origin + lo * d;
  seg.end = origin + hi * d;
}

}  // namespace

std::vector<PathSegment> straight_segments(const PosePath& desired, double min_length) {
  std::vector<PathSegment> out;
  const std::size_t n = desired.size();
  std::size_t i = 0;
  while (i + 1 < n) {
    // Grow a run of samples moving in a fixed direction with fixed heading.
    std::size_t j = i + 1;
    const Eigen::Vector2d dir0 = desired[j].translation() - desired[i].translation();
    if (dir0.norm() < 1e-12) {
      ++i;
      continue;
    }
    while (j + 1 < n) {
      const Eigen::Vector2d step = desired[j + 1].translation() - desired[j].translation();
      const bool straight = step.norm() > 1e-12 &&
                            std::abs(dir0.x() * step.y() - dir0.y() * step.x()) <
                                1e-9 * dir0.norm() * step.norm() &&
                            dir0.dot(step) > 0 &&
                            std::abs(wrap_angle(desired[j + 1].theta() - desired[i].theta())) < 1e-9;
      if (!straight) break;
      ++j;
    }
    const Eigen::Vector2d a = desired[i].translation(), b = desired[j].translation();
    if (j > i + 1 && (b - a).norm() > std::max(min_length, 1e-6)) {
      auto it = std::find_if(out.begin(), out.end(), [&](const PathSegment& s) { return same_line(s, a, b); });
      if (it == out.end()) {
        PathSegment s;
        s.label = label_for(out.size());
        s.axis = axis_of(std::atan2(b.y() - a.y(), b.x() - a.x()));
        s.start = a;
        s.end = b;
        out.push_back(std::move(s));
      } else {
        extend(*it, a, b);
      }
    }
    i = j;
  }
  return out;
}

std::vector<PathSegment> segment_points(std::span<const Eigen::Vector2d> measured,
                                        const PosePath& desired, double corner_margin) {
  std::vector<PathSegment> segs = straight_segments(desired, 2.0 * corner_margin);
  if (segs.empty()) throw InsufficientDataError("desired path has no straight segments");
  for (const auto& p : measured) {
    std::size_t best = 0;
    double best_d = 1e300, best_t = 0.0, best_len = 0.0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const Eigen::Vector2d ab = segs[s].end - segs[s].start;
      const double len = ab.norm();
      const double t = std::clamp((p - segs[s].start).dot(ab) / len, 0.0, len);
      const double d = (p - (segs[s].start + t * ab / len)).norm();
      if (d < best_d) {
        best_d = d;
        best = s;
        best_t = t;
        best_len = len;
      }
    }
    if (best_t < corner_margin || best_t > best_len - corner_margin) continue;
    segs[best].points.push_back(p);
  }
  for (const auto& s : segs)
    if (s.points.size() < 10) {
      std::ostringstream msg;
      msg << "segment " << s.label << " has only " << s.points.size() << " points";
      throw InsufficientDataError(msg.str());
    }
  return segs;
}

SegmentFit fit_line(std::span<const Eigen::Vector2d> points, SegmentAxis axis) {
  if (points.size() < 2) throw InsufficientDataError("fit_line needs at least two points");
  double lo = 1e300, hi = -1e300;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector2d q = local(p, axis);
    mean += q;
    lo = std::min(lo, q.x());
    hi = std::max(hi, q.x());
  }
  if (!(hi - lo > 1e-6))
    throw VerticalDegeneracyError("fit_line: no spread in the independent coordinate");
  mean /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& p : points) {
    const Eigen::Vector2d q = local(p, axis) - mean;
    sxy += q.x() * q.y();
    sxx += q.x() * q.x();
  }
  SegmentFit f;
  f.axis = axis;
  f.a = sxy / sxx;
  f.b = mean.y() - f.a * mean.x();
  f.n_points = points.size();
  f.residuals.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector2d q = local(p, axis);
    f.residuals.push_back(q.y() - (f.a * q.x() + f.b));
  }
  return f;
}

PrecisionReport precision(std::span<const SegmentFit> fits) {
  PrecisionReport r;
  r.fits.assign(fits.begin(), fits.end());
  double sq = 0.0, abs_sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : fits)
    for (double e : f.residuals) {
      r.e_max = std::max(r.e_max, std::abs(e));
      sq += e * e;
      abs_sum += std::abs(e);
      ++n;
    }
  if (n > 0) {
    r.e_mean = std::sqrt(sq / static_cast<double>(n));
    r.e_abs_mean = abs_sum / static_cast<double>(n);
  }
  return r;
}

double line_distance(const SegmentFit& fit, const Eigen::Vector2d& p) {
  const Eigen::Vector2d q = local(p, fit.axis);
  return std::abs(q.y() - fit.a * q.x() - fit.b) / std::sqrt(1.0 + fit.a * fit.a);
}

double accuracy(std::span<const SegmentFit> fits, std::span<const PathSegment> segments) {
  if (fits.size() != segments.size())
    throw DimensionError("accuracy: one fit per segment is required");
  double worst = 0.0;
  for (std::size_t i = 0; i < fits.size(); ++i)
    worst = std::max({worst, line_distance(fits[i], segments[i].start),
                      line_distance(fits[i], segments[i].end)});
  return worst;
}

MetricsResult evaluate_path(std::span<const Eigen::Vector2d> measured, const PosePath& desired,
                            double corner_margin) {
  MetricsResult m;
  m.segments = segment_points(measured, desired, corner_margin);
  std::vector<SegmentFit> fits;
  for (const auto& s : m.segments) fits.push_back(fit_line(s.points, s.axis));
  m.precision = precision(fits);
  m.accuracy = accuracy(fits, m.segments);
  return m;
}

void write_metrics_json(std::ostream& out, const MetricsResult& m) {
  nlohmann::json j;
  j["e_max_m"] = m.precision.e_max;
  j["e_mean_m"] = m.precision.e_mean;
  j["e_abs_mean_m"] = m.precision.e_abs_mean;
  j["accuracy_m"] = m.accuracy;
  j["segments"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    const auto& s = m.segments[i];
    const auto& f = m.precision.fits[i];
    const SegmentFit* one = &f;
    const PrecisionReport p = precision(std::span<const SegmentFit>(one, 1));
    j["segments"].push_back({
        {"label", s.label},
        {"axis", s.axis == SegmentAxis::XParallel ? "x" : "y"},
        {"a", f.a},
        {"b", f.b},
        {"n_points", f.n_points},
        {"e_max_m", p.e_max},
        {"e_mean_m", p.e_mean},
        {"accuracy_m", std::max(line_distance(f, s.start), line_distance(f, s.end))},
        {"start", {s.start.x(), s.start.y()}},
        {"end", {s.end.x(), s.end.y()}},
    });
  }
  out << j.dump(2) << '\n';
}

void write_metrics_svg(std::ostream& out, std::span<const Eigen::Vector2d> measured,
                       const PosePath& desired, const MetricsResult& m) {
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(1e300), hi = Eigen::Vector2d::Constant(-1e300);
  for (const auto& p : desired.samples()) {
    lo = lo.cwiseMin(p.translation());
    hi = hi.cwiseMax(p.translation());
  }
  for (const auto& p : measured) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double pad = 0.1, px_per_m = 400.0;
  lo.array() -= pad;
  hi.array() += pad;
  const double w = (hi.x() - lo.x()) * px_per_m, h = (hi.y() - lo.y()) * px_per_m;
  const auto X = [&](double x) { return (x - lo.x()) * px_per_m; };
  const auto Y = [&](double y) { return (hi.y() - y) * px_per_m; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto polyline = [&](auto begin, auto end, auto get, const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    std::size_t i = 0;
    for (auto it = begin; it != end; ++it, ++i) {
      // Thin out long traces; the plot does not need every 25 ms sample.
      if (i % 4 != 0) continue;
      const Eigen::Vector2d p = get(*it);
      out << X(p.x()) << ',' << Y(p.y()) << ' ';
    }
    out << "\"/>\n";
  };
  polyline(measured.begin(), measured.end(), [](const Eigen::Vector2d& p) { return p; },
           "stroke=\"#1f77b4\" stroke-width=\"0.6\" stroke-opacity=\"0.6\"");
  polyline(desired.begin(), desired.end(), [](const Pose2& p) { return p.translation(); },
           "stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6,4\"");
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    const auto& s = m.segments[i];
    const auto& f = m.precision.fits[i];
    Eigen::Vector2d a = local(s.start, s.axis), b = local(s.end, s.axis);
    a.y() = f.a * a.x() + f.b;
    b.y() = f.a * b.x() + f.b;
    a = local(a, s.axis);
    b = local(b, s.axis);
    out << "<line x1=\"" << X(a.x()) << "\" y1=\"" << Y(a.y()) << "\" x2=\"" << X(b.x())
        << "\" y2=\"" << Y(b.y()) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    const Eigen::Vector2d mid = 0.5 * (s.start + s.end);
    out << "<text x=\"" << X(mid.x()) + 6 << "\" y=\"" << Y(mid.y()) - 6
        << "\" font-family=\"sans-serif\" font-size=\"14\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace mobileprint
