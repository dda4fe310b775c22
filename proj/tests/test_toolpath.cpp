#include <cmath>

#include "doctest.h"
#include "mobileprint/toolpath.hpp"

using namespace mobileprint;

namespace {

// Independent point-to-edge distance for the offset oracle.
double nearest_edge_distance(const Eigen::Vector2d& p, const Polygon& poly) {
  double best = 1e300;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d a = poly[i], b = poly[(i + 1) % poly.size()];
    const double len2 = (b - a).squaredNorm();
    double t = (p - a).dot(b - a) / len2;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    best = std::min(best, (p - (a + t * (b - a))).norm());
  }
  return best;
}

void check_constant_progress(const NozzlePath& n) {
  const double step = n.speed * n.path.dt();
  double worst = 0.0;
  for (std::size_t k = 1; k < n.path.size(); ++k)
    worst = std::max(worst, std::abs((n.progress[k] - n.progress[k - 1]) / step - 1.0));
  CHECK(worst < 1e-6);
  // Euclidean steps never exceed the arc-length step (corners are cut).
  for (std::size_t k = 1; k < n.path.size(); ++k)
    CHECK((n.path[k] - n.path[k - 1]).head<2>().norm() <= step * (1 + 1e-9));
}

}  // namespace

TEST_CASE("slice: square footprint, two contour layers") {
  const auto spec = StructureSpec::rectangle(1.0, 1.0, 0.02, 0.01);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  CHECK(n.laps.size() == 2);
  CHECK(n.laps.back().start + n.laps.back().length == doctest::Approx(8.0));
  CHECK(n.path.duration() == doctest::Approx(80.0));
  check_constant_progress(n);
  CHECK(n.path.front().z() == doctest::Approx(0.01));
  CHECK(n.path.back().z() == doctest::Approx(0.02));
}

TEST_CASE("slice: paper structure contour-only and with rung infill") {
  const auto contour = StructureSpec::rectangle(2.1, 0.45, 0.1, 0.01);
  const NozzlePath n = slice_structure(contour, 0.1, 0.025);
  CHECK(n.laps.size() == 10);
  CHECK(n.laps.back().start + n.laps.back().length == doctest::Approx(51.0));
  CHECK(std::abs(n.path.duration() - 510.0) <= 0.025);

  const auto filled = StructureSpec::rectangle(2.1, 0.45, 0.1, 0.01, kDefaultInfillSpacing);
  const NozzlePath f = slice_structure(filled, 0.1, 0.025);
  // One rung across the 0.45 m width per layer.
  CHECK(f.laps.back().start + f.laps.back().length == doctest::Approx(55.5));
  CHECK(f.path.duration() >= 510.0);
  CHECK(f.path.duration() <= 700.0);
  check_constant_progress(f);
}

TEST_CASE("slice: layer monotonicity") {
  const auto spec = StructureSpec::rectangle(1.2, 0.6, 0.05, 0.01, 0.4);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  std::size_t rises = 0;
  for (std::size_t k = 1; k < n.path.size(); ++k) {
    const double dz = n.path[k].z() - n.path[k - 1].z();
    CHECK(dz >= 0.0);
    if (dz > 0.0) {
      ++rises;
      CHECK(std::abs(dz - 0.01) < 1e-12);
      // Rises happen exactly where a new lap begins.
      CHECK(n.lap_index(n.progress[k]) == n.lap_index(n.progress[k - 1]) + 1);
    }
  }
  CHECK(rises == 4);
}

TEST_CASE("slice: consecutive laps join without gaps") {
  const auto spec = StructureSpec::rectangle(2.1, 0.45, 0.04, 0.01, 0.5);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  for (std::size_t j = 1; j < n.laps.size(); ++j)
    CHECK((n.laps[j - 1].polyline.back() - n.laps[j].polyline.front()).norm() < 1e-12);
}

TEST_CASE("slice: invalid specs") {
  StructureSpec flat = StructureSpec::rectangle(1.0, 0.0, 0.1, 0.01);
  CHECK_THROWS_AS(slice_structure(flat, 0.1, 0.025), InvalidSpecError);
  CHECK_THROWS_AS(slice_structure(StructureSpec::rectangle(1, 1, 0.0, 0.01), 0.1, 0.025),
                  InvalidSpecError);
  CHECK_THROWS_AS(slice_structure(StructureSpec::rectangle(1, 1, 0.015, 0.01), 0.1, 0.025),
                  InvalidSpecError);
  StructureSpec bowtie = StructureSpec::rectangle(1, 1, 0.01, 0.01);
  bowtie.footprint = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(slice_structure(bowtie, 0.1, 0.025), InvalidSpecError);
  CHECK_THROWS_AS(slice_structure(StructureSpec::rectangle(1, 1, 0.01, 0.01), 0.0, 0.025),
                  InvalidArgumentError);
}

TEST_CASE("prescribe_base_path: square footprint offset by standoff") {
  const auto spec = StructureSpec::rectangle(1.0, 1.0, 0.01, 0.01);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  const BasePath b = prescribe_base_path(n, 0.6, 0.2);
  CHECK(b.path.size() == n.path.size());
  CHECK(b.path.dt() == n.path.dt());
  for (const auto& pose : b.path)
    CHECK(std::abs(nearest_edge_distance(pose.translation(), spec.footprint) - 0.6) < 1e-6);

  CHECK_THROWS_AS(prescribe_base_path(n, 0.9, 0.2), PlanningError);
  CHECK_THROWS_AS(prescribe_base_path(n, 0.3, 0.4), PlanningError);
}

TEST_CASE("prescribe_base_path: straight line gives a translated line") {
  const std::vector<Eigen::Vector3d> line{{0, 0, 0.01}, {1.0, 0, 0.01}};
  const NozzlePath n = open_nozzle_path(line, 0.1, 0.025);
  const BasePath b = prescribe_base_path(n, 0.4, 0.2);
  for (std::size_t k = 0; k < b.path.size(); ++k) {
    CHECK(std::abs(b.path[k].x() - n.path[k].x()) < 1e-12);
    CHECK(std::abs(b.path[k].y() + 0.4) < 1e-12);
    CHECK(std::abs(b.path[k].theta()) < 1e-12);
  }
}

TEST_CASE("prescribe_base_path: base heading is tangent and clears the footprint") {
  const auto spec = StructureSpec::rectangle(2.1, 0.45, 0.02, 0.01);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  const BasePath b = prescribe_base_path(n, kDefaultStandoff, kDefaultClearance);
  for (std::size_t k = 1; k + 1 < b.path.size(); ++k) {
    const Eigen::Vector2d d = b.path[k + 1].translation() - b.path[k - 1].translation();
    if (d.norm() < 1e-9) continue;
    CHECK(std::abs(wrap_angle(std::atan2(d.y(), d.x()) - b.path[k].theta())) < 0.02);
    CHECK_FALSE(point_in_polygon(b.path[k].translation(), spec.footprint));
    CHECK(nearest_edge_distance(b.path[k].translation(), spec.footprint) >= kDefaultClearance);
  }
}

TEST_CASE("synchronize: idempotent on an aligned base path") {
  const auto spec = StructureSpec::rectangle(1.0, 0.5, 0.02, 0.01);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  const BasePath b = prescribe_base_path(n, 0.3, 0.2);
  const PrintPlan plan = synchronize(n, b);
  REQUIRE(plan.base.size() == b.path.size());
  for (std::size_t k = 0; k < b.path.size(); ++k) CHECK(plan.base[k] == b.path[k]);
}

TEST_CASE("synchronize: shorter base circuit runs proportionally slower") {
  const auto spec = StructureSpec::rectangle(1.0, 1.0, 0.01, 0.01);
  const NozzlePath n = slice_structure(spec, 0.1, 0.025);
  // Circle of radius 0.3 about the centre, sampled uniformly but not aligned.
  const double r = 0.3;
  std::vector<Pose2> samples;
  for (std::size_t k = 0; k < n.path.size(); ++k) {
    const double a = kTwoPi * std::pow(static_cast<double>(k) / (n.path.size() - 1), 2.0);
    samples.emplace_back(0.5 + r * std::cos(a - kPi / 2), 0.5 + r * std::sin(a - kPi / 2), a);
  }
  std::vector<CurvePiece> pieces{CurvePiece::arc({0.5, 0.5}, r, -kPi / 2, kTwoPi)};
  const BasePath base{PosePath(n.path.dt(), samples), PlanarCurve(pieces, true)};
  const PrintPlan plan = synchronize(n, base, ReachBand{0.0, 2.0});

  const double lap = n.laps.front().length;
  const double expected = (kTwoPi * r) / lap * 0.1;
  for (std::size_t k = 1; k < plan.base.size(); ++k) {
    const Eigen::Vector2d a = plan.base[k - 1].translation() - Eigen::Vector2d(0.5, 0.5);
    const Eigen::Vector2d b = plan.base[k].translation() - Eigen::Vector2d(0.5, 0.5);
    const double arc = r * std::abs(std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b)));
    CHECK(std::abs(arc / n.path.dt() - expected) < 1e-9);
  }
  CHECK(expected < 0.1);
}

TEST_CASE("synchronize: unreachable nozzle names the first index") {
  const std::vector<Eigen::Vector3d> line{{0, 0, 0.01}, {0.5, 0, 0.01}};
  const NozzlePath n = open_nozzle_path(line, 0.1, 0.025);
  const std::vector<Eigen::Vector2d> far{{0, -1.0}, {0.5, -1.0}};
  const BasePath base{PosePath(n.path.dt(), std::vector<Pose2>(n.path.size())),
                      polyline_curve(far, false)};
  try {
    synchronize(n, base);
    FAIL("expected a synchronization error");
  } catch (const SynchronizationError& e) {
    REQUIRE(e.index().has_value());
    CHECK(*e.index() == 0);
  }
}

TEST_CASE("plan invariants on the paper structure") {
  for (double infill : {0.0, kDefaultInfillSpacing}) {
    const auto spec = StructureSpec::rectangle(2.1, 0.45, 0.1, 0.01, infill);
    const PrintPlan plan = plan_print(spec, PlanningOptions{});
    CHECK(plan.layer_count == 10);
    CHECK(plan.base.size() == plan.nozzle.path.size());
    for (std::size_t k = 0; k < plan.size(); ++k) {
      const double d = (plan.nozzle.path[k].head<2>() - plan.base[k].translation()).norm();
      CHECK(d <= plan.reach.max);
      CHECK(d >= plan.reach.min);
    }
  }
}

TEST_CASE("widened structure cannot be served within reach") {
  const auto spec = StructureSpec::rectangle(2.1, 1.4, 0.02, 0.01, kDefaultInfillSpacing);
  CHECK_THROWS_AS(plan_print(spec, PlanningOptions{}), SynchronizationError);
}
