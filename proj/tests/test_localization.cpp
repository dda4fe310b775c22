#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mobileprint/localization.hpp"

using namespace mobileprint;

namespace {

Eigen::Matrix4d planar4(double x, double y, double yaw, double z = 0.0) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(yaw);
  m(0, 1) = -std::sin(yaw);
  m(1, 0) = std::sin(yaw);
  m(1, 1) = std::cos(yaw);
  m(0, 3) = x;
  m(1, 3) = y;
  m(2, 3) = z;
  return m;
}

// Rotation by pi about x: camera z axis points down at the ground.
Eigen::Matrix4d flip_x() {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(1, 1) = -1;
  m(2, 2) = -1;
  return m;
}

EkfState make_state(double x, double y, double th, const Eigen::Matrix3d& p) {
  EkfState s;
  s.mean = Pose2(x, y, th);
  s.covariance = p;
  return s;
}

Eigen::Matrix3d random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix3d a;
  for (int i = 0; i < 9; ++i) a(i) = n(rng);
  return 1e-3 * (a * a.transpose() + 0.1 * Eigen::Matrix3d::Identity());
}

bool loewner_leq(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b, double tol) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(b - a);
  return eig.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

TEST_CASE("pose_from_detection: identity chain") {
  MarkerMap map;
  map.add(1, Transform3::identity());
  const MarkerDetection det{1, Transform3::identity(), 0};
  const Pose2 p = pose_from_detection(det, map, Transform3::identity());
  CHECK(p == Pose2());
}

TEST_CASE("pose_from_detection: matches an explicit 4x4 product") {
  MarkerMap map;
  const Eigen::Matrix4d w_m = planar4(2.0, 0.0, 0.0);
  map.add(4, Transform3::from_matrix(w_m));
  // Camera 1 m behind the marker (along -x), 0.5 m up, looking down.
  const Eigen::Matrix4d m_c = planar4(-1.0, 0.0, 0.0, 0.5) * flip_x();
  // Base 0.3 m ahead of the camera along the base x axis, on the ground.
  const Eigen::Matrix4d c_b = flip_x().inverse() * planar4(0.3, 0.0, 0.0, -0.5);
  const MarkerDetection det{4, Transform3::from_matrix(m_c), 0};
  const Pose2 p = pose_from_detection(det, map, Transform3::from_matrix(c_b));
  const Eigen::Matrix4d w_b = w_m * m_c * c_b;
  CHECK(p.x() == doctest::Approx(w_b(0, 3)));
  CHECK(p.y() == doctest::Approx(w_b(1, 3)));
  CHECK(p.theta() == doctest::Approx(std::atan2(w_b(1, 0), w_b(0, 0))));
  CHECK(p.x() == doctest::Approx(1.3));

  // Yawed marker and camera, arbitrary values.
  MarkerMap map2;
  const Eigen::Matrix4d w_m2 = planar4(-1.0, 3.0, 2.5);
  map2.add(9, Transform3::from_matrix(w_m2));
  const Eigen::Matrix4d m_c2 = planar4(0.4, -0.7, -1.1, 0.6) * flip_x();
  const Eigen::Matrix4d c_b2 = (planar4(0.2, 0.1, 0.3, 0.6) * flip_x()).inverse();
  const Pose2 p2 = pose_from_detection({9, Transform3::from_matrix(m_c2), 0}, map2,
                                       Transform3::from_matrix(c_b2));
  const Eigen::Matrix4d w_b2 = w_m2 * m_c2 * c_b2;
  CHECK(p2.x() == doctest::Approx(w_b2(0, 3)));
  CHECK(p2.y() == doctest::Approx(w_b2(1, 3)));
  CHECK(p2.theta() == doctest::Approx(std::atan2(w_b2(1, 0), w_b2(0, 0))));
}

TEST_CASE("pose_from_detection: unknown marker and map invariants") {
  MarkerMap map;
  map.add(1, Transform3::identity());
  CHECK_THROWS_AS(pose_from_detection({99, Transform3::identity(), 0}, map, Transform3::identity()),
                  UnknownMarkerError);
  CHECK_THROWS_AS(map.add(1, Transform3::identity()), InvalidArgumentError);
  CHECK_THROWS_AS(map.add(2, Transform3::from_translation({0, 0, 0.1})), InvalidArgumentError);
  CHECK_THROWS_AS(map.add(3, Transform3::from_rpy(0.2, 0, 0)), InvalidArgumentError);
  // Strongly tilted chain result.
  CHECK_THROWS_AS(pose_from_detection({1, Transform3::from_rpy(0.3, 0, 0), 0}, map,
                                      Transform3::identity()),
                  DegenerateObservationError);
}

TEST_CASE("propagate_delayed: sums controls") {
  const Pose2 x(0.1, -0.2, 3.1);
  CHECK(propagate_delayed(x, {}, 0.025) == x);
  const std::vector<ControlInput> two{{0.1, 0, 0}, {0.1, 0, 0}};
  const Pose2 p = propagate_delayed(Pose2(), two, 0.025);
  CHECK(p.x() == doctest::Approx(0.005));
  CHECK(p.y() == 0.0);
  // Theta wraps through pi.
  const std::vector<ControlInput> spin{{0, 0, 4.0}};
  CHECK(propagate_delayed(x, spin, 0.025).theta() == doctest::Approx(wrap_angle(3.2)));
}

TEST_CASE("propagate_delayed: equals a noiseless integrator of the same controls") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  const double dt = 0.025;
  std::vector<Pose2> truth{Pose2(1.0, 2.0, 0.5)};
  std::vector<ControlInput> controls;
  for (int k = 0; k < 20; ++k) {
    controls.push_back({u(rng), u(rng), u(rng)});
    const Pose2& x = truth.back();
    truth.emplace_back(x.x() + dt * controls.back().vx, x.y() + dt * controls.back().vy,
                       x.theta() + dt * controls.back().omega);
  }
  const Pose2 p = propagate_delayed(truth.front(), controls, dt);
  CHECK(std::abs(p.x() - truth.back().x()) < 1e-12);
  CHECK(std::abs(p.y() - truth.back().y()) < 1e-12);
  CHECK(std::abs(wrap_angle(p.theta() - truth.back().theta())) < 1e-12);
}

TEST_CASE("stack_measurements: layout and empty input") {
  const std::vector<Pose2> one{Pose2(1, 2, 0.3)};
  const auto s1 = stack_measurements(one);
  CHECK(s1.count() == 1);
  CHECK((s1.z - Eigen::Vector3d(1, 2, 0.3)).norm() == 0.0);
  CHECK((s1.H - Eigen::Matrix3d::Identity()).norm() == 0.0);
  const std::vector<Pose2> two{Pose2(1, 2, 0.3), Pose2(4, 5, 0.6)};
  const auto s2 = stack_measurements(two, 2.0 * Eigen::Matrix3d::Identity());
  CHECK(s2.R.rows() == 6);
  CHECK(s2.R(4, 4) == 2.0);
  CHECK(s2.R(1, 4) == 0.0);
  CHECK(s2.z[4] == 5.0);
  CHECK_THROWS_AS(stack_measurements(std::span<const Pose2>{}), NoVisibleMarkerError);
}

TEST_CASE("ekf_predict: additive noise and integrator") {
  const EkfState s = make_state(0.2, 0.1, -0.4, Eigen::Matrix3d::Identity() * 1e-3);
  const EkfState same = ekf_predict(s, {}, 0.025, Eigen::Matrix3d::Zero());
  CHECK(same.mean == s.mean);
  CHECK(same.covariance == s.covariance);
  const Eigen::Matrix3d Q = Eigen::Vector3d(1e-6, 2e-6, 3e-6).asDiagonal();
  CHECK(ekf_predict(s, {}, 0.025, Q).covariance.trace() ==
        doctest::Approx(s.covariance.trace() + Q.trace()).epsilon(1e-14));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  EkfState run = s;
  double x = 0.2, y = 0.1, th = -0.4;
  for (int k = 0; k < 100; ++k) {
    const ControlInput c{u(rng), u(rng), u(rng)};
    run = ekf_predict(run, c, 0.025, Eigen::Matrix3d::Zero());
    x += 0.025 * c.vx;
    y += 0.025 * c.vy;
    th += 0.025 * c.omega;
  }
  CHECK(run.mean.x() == doctest::Approx(x).epsilon(1e-13));
  CHECK(run.mean.y() == doctest::Approx(y).epsilon(1e-13));
  CHECK(run.mean.theta() == doctest::Approx(wrap_angle(th)).epsilon(1e-13));
}

TEST_CASE("ekf_update: zero innovation and uninformative measurement") {
  std::mt19937_64 rng(9);
  const EkfState s = make_state(1.0, -1.0, 0.5, random_spd(rng));
  const std::vector<Pose2> at_mean{s.mean};
  const EkfState post = ekf_update(s, stack_measurements(at_mean));
  CHECK((post.mean.vector() - s.mean.vector()).norm() < 1e-15);
  CHECK(post.covariance.trace() < s.covariance.trace());

  const std::vector<Pose2> far{Pose2(3.0, 2.0, -1.0)};
  const EkfState vague = ekf_update(s, stack_measurements(far, 1e12 * Eigen::Matrix3d::Identity()));
  CHECK((vague.mean.vector() - s.mean.vector()).norm() < 1e-6);
  CHECK((vague.covariance - s.covariance).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ekf_update: scalar closed form on a diagonal problem") {
  const double P = 0.04, R = 0.01;
  const EkfState s = make_state(0.0, 0.0, 0.0, Eigen::Matrix3d::Identity() * P);
  const std::vector<Pose2> z{Pose2(0.1, -0.2, 0.3)};
  const EkfState post = ekf_update(s, stack_measurements(z, Eigen::Matrix3d::Identity() * R));
  const double K = P / (P + R);
  CHECK(post.mean.x() == doctest::Approx(K * 0.1));
  CHECK(post.mean.y() == doctest::Approx(K * -0.2));
  CHECK(post.mean.theta() == doctest::Approx(K * 0.3));
  CHECK(post.covariance(0, 0) == doctest::Approx((1 - K) * P));
  CHECK(std::abs(post.covariance(0, 1)) < 1e-18);
}

TEST_CASE("ekf_update: M identical markers equal one marker with R/M") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const EkfState s = make_state(0.3, 0.2, 1.0, random_spd(rng));
    const Eigen::Matrix3d R = random_spd(rng);
    const Pose2 z(0.35, 0.15, 1.05);
    const std::vector<Pose2> three{z, z, z}, one{z};
    const EkfState a = ekf_update(s, stack_measurements(three, R));
    const EkfState b = ekf_update(s, stack_measurements(one, R / 3.0));
    CHECK((a.mean.vector() - b.mean.vector()).norm() < 1e-12);
    CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("ekf_update: angle innovation wraps across pi") {
  const EkfState s = make_state(0, 0, kPi - 0.01, Eigen::Matrix3d::Identity() * 0.01);
  const std::vector<Pose2> z{Pose2(0, 0, -kPi + 0.01)};
  const EkfState post = ekf_update(s, stack_measurements(z, Eigen::Matrix3d::Identity() * 0.01));
  // Halfway between, i.e. on the pi seam, not near zero.
  CHECK(std::abs(std::abs(post.mean.theta()) - kPi) < 1e-9);
}

TEST_CASE("ekf_update: covariance stays symmetric PD and shrinks in Loewner order") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 0.05);
  EkfState s = make_state(0, 0, 0, random_spd(rng));
  for (int k = 0; k < 500; ++k) {
    s = ekf_predict(s, {0.1, 0.0, 0.05}, 0.025, NoiseModel{}.Q);
    std::vector<Pose2> z;
    const int m = 1 + k % 3;
    for (int i = 0; i < m; ++i)
      z.emplace_back(s.mean.x() + n(rng), s.mean.y() + n(rng), s.mean.theta() + n(rng));
    const EkfState post = ekf_update(s, stack_measurements(z, random_spd(rng)));
    CHECK((post.covariance - post.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(post.covariance);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK(loewner_leq(post.covariance, s.covariance, 1e-10));
    s = post;
  }
}

TEST_CASE("ekf_update: singular innovation covariance diverges") {
  EkfState s = make_state(0, 0, 0, Eigen::Matrix3d::Identity());
  StackedMeasurement z = stack_measurements(std::vector<Pose2>{Pose2()});
  z.R = -2.0 * Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(ekf_update(s, z), FilterDivergenceError);
}

TEST_CASE("NEES: matched-noise Monte Carlo stays in the chi-square band") {
  const NoiseModel noise;
  const double dt = 0.025;
  const int runs = 50, steps = 500;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const Eigen::Matrix3d Lq = noise.Q.llt().matrixL();
  const Eigen::Matrix3d Lr = noise.R.llt().matrixL();
  const Eigen::Matrix3d P0 = Eigen::Matrix3d::Identity() * 1e-4;
  const Eigen::Matrix3d L0 = P0.llt().matrixL();
  auto draw = [&](const Eigen::Matrix3d& L) {
    return Eigen::Vector3d(L * Eigen::Vector3d(std_normal(rng), std_normal(rng), std_normal(rng)));
  };
  double total = 0.0;
  for (int r = 0; r < runs; ++r) {
    Eigen::Vector3d truth(0, 0, 0);
    const Eigen::Vector3d e0 = draw(L0);
    EkfState s = make_state(e0.x(), e0.y(), e0.z(), P0);
    for (int k = 0; k < steps; ++k) {
      const ControlInput u{0.1 * std::cos(0.01 * k), 0.1 * std::sin(0.01 * k), 0.02};
      truth += dt * u.vector() + draw(Lq);
      s = ekf_predict(s, u, dt, noise.Q);
      std::vector<Pose2> z;
      for (int m = 0; m < 2; ++m) {
        const Eigen::Vector3d meas = truth + draw(Lr);
        z.emplace_back(meas.x(), meas.y(), meas.z());
      }
      s = ekf_update(s, stack_measurements(z, noise.R));
      total += nees(s, Pose2(truth.x(), truth.y(), truth.z()));
    }
  }
  const double avg = total / (runs * steps);
  MESSAGE("average NEES " << avg);
  CHECK(avg > 2.35);
  CHECK(avg < 3.72);
}

TEST_CASE("control history and localizer delay compensation") {
  ControlHistory h(4);
  for (int k = 0; k < 10; ++k) h.push(k, {0.01 * k, 0, 0});
  const auto c = h.since(7, 9);
  REQUIRE(c.size() == 2);
  CHECK(c[0].vx == doctest::Approx(0.07));
  CHECK(h.since(9, 9).empty());
  CHECK_THROWS_AS(h.since(2, 9), SimulationFault);
  CHECK_THROWS_AS(h.since(9, 11), SimulationFault);
  CHECK_THROWS_AS(h.push(12, {}), InvalidArgumentError);

  // Noiseless detections two steps old recover the current truth.
  MarkerMap map;
  map.add(0, Transform3::from_matrix(planar4(1.0, 0.5, 0.3)));
  const Transform3 camera_T_base = Transform3::from_matrix((planar4(-0.4, 0.0, 0.0, 0.5) * flip_x()).inverse());
  const double dt = 0.025;
  std::vector<Pose2> truth{Pose2(0.2, 0.1, 0.05)};
  Localizer loc(map, camera_T_base, NoiseModel{}, dt, 4, make_state(0.2, 0.1, 0.05, Eigen::Matrix3d::Identity()));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<ControlInput> sent;
  for (int k = 0; k < 30; ++k) {
    if (k > 0) loc.predict(sent.back());
    if (k >= 2) {
      const std::int64_t c = k - 2;
      const Transform3 world_T_camera = embed_se2(truth[c]) * camera_T_base.inverse();
      const MarkerDetection det{0, map.at(0).inverse() * world_T_camera, c};
      const Pose2 captured = pose_from_detection(det, map, camera_T_base);
      const auto controls = std::vector<ControlInput>(sent.begin() + c, sent.begin() + k);
      const Pose2 p = propagate_delayed(captured, controls, dt);
      CHECK(std::abs(p.x() - truth[k].x()) < 1e-12);
      CHECK(std::abs(p.y() - truth[k].y()) < 1e-12);
      CHECK(std::abs(wrap_angle(p.theta() - truth[k].theta())) < 1e-12);
      const std::vector<MarkerDetection> dets{det};
      CHECK(loc.update(dets, k) == 1);
    }
    sent.push_back({u(rng), u(rng), u(rng)});
    loc.record_control(k, sent.back());
    const Pose2& x = truth.back();
    truth.emplace_back(x.x() + dt * sent.back().vx, x.y() + dt * sent.back().vy,
                       x.theta() + dt * sent.back().omega);
  }
}

TEST_CASE("estimator trace CSV header and row") {
  std::ostringstream out;
  const std::vector<EstimatorTraceRow> rows{{3, make_state(1, 2, 0.5, Eigen::Matrix3d::Identity() * 2), 2}};
  write_estimator_trace(out, rows);
  CHECK(out.str() == "k,mean_x,mean_y,mean_theta,cov_xx,cov_yy,cov_tt,n_markers\n3,1,2,0.5,2,2,2,2\n");
}
