#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mobileprint/metrics.hpp"

using namespace mobileprint;

namespace {

// Axis-aligned rectangle loop (w x h, corner at origin, CCW) sampled at
// step ds with quarter-circle corners of radius r.
PosePath rounded_rectangle(double w, double h, double r, double ds, int laps = 1,
                           Eigen::Vector2d shift = Eigen::Vector2d::Zero()) {
  std::vector<Pose2> out;
  const auto straight = [&](Eigen::Vector2d a, Eigen::Vector2d b) {
    const double len = (b - a).norm();
    const int n = static_cast<int>(std::round(len / ds));
    const double th = std::atan2(b.y() - a.y(), b.x() - a.x());
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d p = a + (b - a) * (double(i) / n) + shift;
      out.emplace_back(p.x(), p.y(), th);
    }
  };
  const auto arc = [&](Eigen::Vector2d c, double a0) {
    const int n = std::max(2, static_cast<int>(std::round(0.5 * kPi * r / ds)));
    for (int i = 0; i < n; ++i) {
      const double a = a0 + 0.5 * kPi * i / n;
      const Eigen::Vector2d p = c + r * Eigen::Vector2d(std::cos(a), std::sin(a)) + shift;
      out.emplace_back(p.x(), p.y(), a + 0.5 * kPi);
    }
  };
  for (int l = 0; l < laps; ++l) {
    straight({r, 0}, {w - r, 0});
    arc({w - r, r}, -0.5 * kPi);
    straight({w, r}, {w, h - r});
    arc({w - r, h - r}, 0.0);
    straight({w - r, h}, {r, h});
    arc({r, h - r}, 0.5 * kPi);
    straight({0, h - r}, {0, r});
    arc({r, r}, kPi);
  }
  return PosePath(0.025, out);
}

std::vector<Eigen::Vector2d> translations(const PosePath& p) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& q : p.samples()) out.push_back(q.translation());
  return out;
}

}  // namespace

TEST_CASE("straight_segments: four labelled runs, merged across laps") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01, 3);
  const auto segs = straight_segments(d, 0.2);
  REQUIRE(segs.size() == 4);
  CHECK(segs[0].label == "A");
  CHECK(segs[3].label == "D");
  CHECK(segs[0].axis == SegmentAxis::XParallel);
  CHECK(segs[1].axis == SegmentAxis::YParallel);
  CHECK(segs[2].axis == SegmentAxis::XParallel);
  CHECK(segs[0].start.x() == doctest::Approx(0.2));
  CHECK(segs[0].end.x() == doctest::Approx(1.8).epsilon(0.01));
}

TEST_CASE("segment_points: exact points, corners discarded, constructed labels") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01);
  // Points exactly on segment A and clear of the corners.
  std::vector<Eigen::Vector2d> on_a;
  for (int i = 0; i <= 100; ++i) on_a.emplace_back(0.4 + 1.2 * i / 100.0, 0.0);
  std::vector<Eigen::Vector2d> all = on_a;
  // Padding for the other segments.
  for (int i = 0; i < 20; ++i) {
    all.emplace_back(2.0, 0.4 + 0.01 * i);
    all.emplace_back(0.5 + 0.05 * i, 1.0);
    all.emplace_back(0.0, 0.4 + 0.01 * i);
  }
  // Corner arc midpoint of the lower right corner.
  all.emplace_back(1.8 + 0.2 * std::cos(-kPi / 4), 0.2 + 0.2 * std::sin(-kPi / 4));
  const auto segs = segment_points(all, d, 0.1);
  CHECK(segs[0].points.size() == on_a.size());
  std::size_t kept = 0;
  for (const auto& s : segs) kept += s.points.size();
  CHECK(kept == all.size() - 1);

  // Noisy loop: every non-corner point keeps its constructed label.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.003);
  std::vector<Eigen::Vector2d> noisy;
  std::vector<int> truth;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 50; ++i) {
      const double t = 0.35 + (s % 2 == 0 ? 1.3 : 0.3) * i / 49.0;
      Eigen::Vector2d p;
      if (s == 0) p = {t, n(rng)};
      if (s == 1) p = {2.0 + n(rng), t};
      if (s == 2) p = {2.0 - t, 1.0 + n(rng)};
      if (s == 3) p = {n(rng), 1.0 - t};
      noisy.push_back(p);
      truth.push_back(s);
    }
  const auto labelled = segment_points(noisy, d, 0.1);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const auto& pts = labelled[static_cast<std::size_t>(truth[i])].points;
    CHECK(std::find(pts.begin(), pts.end(), noisy[i]) != pts.end());
  }
}

TEST_CASE("segment_points: too few points is an error") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01);
  std::vector<Eigen::Vector2d> few{{1.0, 0.0}, {1.1, 0.0}};
  CHECK_THROWS_AS(segment_points(few, d), InsufficientDataError);
}

TEST_CASE("fit_line: exact cases and the normal-equation oracle") {
  const std::vector<Eigen::Vector2d> two{{0, 0}, {1, 1}};
  const SegmentFit f2 = fit_line(two);
  CHECK(f2.a == doctest::Approx(1.0));
  CHECK(std::abs(f2.b) < 1e-15);

  std::vector<Eigen::Vector2d> line;
  for (int i = 0; i < 30; ++i) line.emplace_back(0.1 * i, 2.0 * 0.1 * i + 3.0);
  const SegmentFit f = fit_line(line);
  CHECK(std::abs(f.a - 2.0) < 1e-12);
  CHECK(std::abs(f.b - 3.0) < 1e-12);

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 0.01);
  std::vector<Eigen::Vector2d> noisy;
  for (int i = 0; i < 200; ++i) noisy.emplace_back(5.0 + 0.01 * i, -0.3 * (5.0 + 0.01 * i) + 1.0 + n(rng));
  // Normal equations [sum x^2 sum x; sum x n] [a; b] = [sum xy; sum y].
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (const auto& p : noisy) {
    A += Eigen::Vector2d(p.x(), 1.0) * Eigen::RowVector2d(p.x(), 1.0);
    rhs += Eigen::Vector2d(p.x() * p.y(), p.y());
  }
  const Eigen::Vector2d ab = A.fullPivLu().solve(rhs);
  const SegmentFit fn = fit_line(noisy);
  CHECK(std::abs(fn.a - ab[0]) < 1e-10);
  CHECK(std::abs(fn.b - ab[1]) < 1e-10);
  // Residuals are orthogonal to the design columns.
  double rx = 0.0, r1 = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    rx += fn.residuals[i] * noisy[i].x();
    r1 += fn.residuals[i];
  }
  CHECK(std::abs(rx) < 1e-10);
  CHECK(std::abs(r1) < 1e-10);
}

TEST_CASE("fit_line: Y-parallel swaps roles; degenerate spread rejected") {
  std::vector<Eigen::Vector2d> vertical;
  for (int i = 0; i < 10; ++i) vertical.emplace_back(1.5, 0.1 * i);
  CHECK_THROWS_AS(fit_line(vertical, SegmentAxis::XParallel), VerticalDegeneracyError);
  const SegmentFit f = fit_line(vertical, SegmentAxis::YParallel);
  CHECK(std::abs(f.a) < 1e-12);
  CHECK(f.b == doctest::Approx(1.5));
}

TEST_CASE("precision: printed max and RMS formulas") {
  // Residuals {3, 4} mm: four points y = +-r around y = 0 with symmetric x.
  SegmentFit f;
  f.residuals = {0.003, -0.004};
  const PrecisionReport r = precision(std::vector<SegmentFit>{f});
  CHECK(r.e_max == doctest::Approx(0.004));
  CHECK(r.e_mean == doctest::Approx(std::sqrt(12.5) * 1e-3));
  CHECK(r.e_abs_mean == doctest::Approx(0.0035));
  CHECK(r.e_mean <= r.e_max);

  std::vector<Eigen::Vector2d> exact;
  for (int i = 0; i < 20; ++i) exact.emplace_back(0.1 * i, 0.7);
  const PrecisionReport z = precision(std::vector<SegmentFit>{fit_line(exact)});
  CHECK(z.e_max < 1e-15);
  CHECK(z.e_mean < 1e-15);
}

TEST_CASE("accuracy: zero for exact fits, offset for parallel shift") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01, 2);
  const auto exact = evaluate_path(translations(d), d);
  CHECK(exact.accuracy < 1e-12);
  CHECK(exact.precision.e_max < 1e-12);

  // Measured loop shifted 5 mm in +x: Y-parallel fits are off by 5 mm.
  const PosePath shifted = rounded_rectangle(2.0, 1.0, 0.2, 0.01, 2, {0.005, 0.0});
  const auto m = evaluate_path(translations(shifted), d);
  CHECK(m.accuracy == doctest::Approx(0.005).epsilon(1e-9));
  CHECK(m.precision.e_max < 1e-12);
}

TEST_CASE("metrics: hand-built point sets with known residuals") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01);
  // Per segment: alternating +-e about a line offset by c from the desired
  // one, on a symmetric x grid so the fit recovers the offset exactly.
  const double e[4] = {0.002, 0.004, 0.001, 0.003};
  const double c[4] = {0.001, -0.002, 0.0, 0.006};
  std::vector<Eigen::Vector2d> pts;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 40; ++i) {
      const double t = 0.5 + 0.01 * (i / 2);  // pairs share the same abscissa
      const double r = (i % 2 == 0 ? e[s] : -e[s]) + c[s];
      if (s == 0) pts.emplace_back(t, r);
      if (s == 1) pts.emplace_back(2.0 + r, t);
      if (s == 2) pts.emplace_back(t, 1.0 + r);
      if (s == 3) pts.emplace_back(r, t);
    }
  const auto m = evaluate_path(pts, d);
  CHECK(m.precision.e_max == doctest::Approx(0.004).epsilon(1e-9));
  const double rms = std::sqrt((0.002 * 0.002 + 0.004 * 0.004 + 0.001 * 0.001 + 0.003 * 0.003) / 4.0);
  CHECK(m.precision.e_mean == doctest::Approx(rms).epsilon(1e-9));
  CHECK(m.accuracy == doctest::Approx(0.006).epsilon(1e-9));
}

TEST_CASE("metrics: invariant under a common rigid translation") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.002);
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01, 2);
  std::vector<Eigen::Vector2d> pts = translations(d);
  for (auto& p : pts) p += Eigen::Vector2d(n(rng), n(rng));
  const auto m0 = evaluate_path(pts, d);
  const Eigen::Vector2d t(3.5, -1.25);
  const PosePath d2 = rounded_rectangle(2.0, 1.0, 0.2, 0.01, 2, t);
  for (auto& p : pts) p += t;
  const auto m1 = evaluate_path(pts, d2);
  CHECK(m1.precision.e_max == doctest::Approx(m0.precision.e_max).epsilon(1e-9));
  CHECK(m1.precision.e_mean == doctest::Approx(m0.precision.e_mean).epsilon(1e-9));
  CHECK(m1.accuracy == doctest::Approx(m0.accuracy).epsilon(1e-6));
}

TEST_CASE("metrics: JSON keys and SVG output") {
  const PosePath d = rounded_rectangle(2.0, 1.0, 0.2, 0.01);
  const auto pts = translations(d);
  const auto m = evaluate_path(pts, d);
  std::ostringstream js, svg;
  write_metrics_json(js, m);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j.contains("e_max_m"));
  CHECK(j.contains("e_mean_m"));
  CHECK(j.contains("accuracy_m"));
  CHECK(j["segments"].size() == 4);
  CHECK(j["segments"][0]["label"] == "A");
  write_metrics_svg(svg, pts, d, m);
  CHECK(svg.str().find("<svg") == 0);
  CHECK(svg.str().find("stroke-dasharray") != std::string::npos);
}
