#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cstdio>
#include <cstring>
#include <random>

#include "nautilus/state_estimator.hpp"
#include "oracle_helpers.hpp"

using namespace nautilus;

namespace {

// Wilson-Hilferty approximation of the chi-square quantile, accurate to a
// fraction of a percent at the large dof used here.
double chi2_quantile(double dof, double z) {
  const double a = 2.0 / (9.0 * dof);
  const double c = 1.0 - a + z * std::sqrt(a);
  return dof * c * c * c;
}

Mat3 random_spd(std::mt19937& rng, double scale) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat3 a;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) a(i, k) = n01(rng);
  return scale * (a * a.transpose()) + 1e-6 * Mat3::Identity();
}

bool bitwise_equal(const EstimatorState& a, const EstimatorState& b) {
  return std::memcmp(a.position.data(), b.position.data(), 3 * sizeof(double)) == 0 &&
         std::memcmp(a.velocity.data(), b.velocity.data(), 3 * sizeof(double)) == 0 &&
         std::memcmp(a.covariance.data(), b.covariance.data(),
                     36 * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("predict shifts position by velocity*dt") {
  EstimatorState s;
  s.velocity = Vec3(0.6, 0.0, 0.0);
  const auto out = predict(s, 1.0, 0.0);
  CHECK((out.position - Vec3(0.6, 0.0, 0.0)).norm() == 0.0);
  CHECK((out.velocity - s.velocity).norm() == 0.0);
}

TEST_CASE("predict grows the covariance trace for nonzero process noise") {
  EstimatorState s;
  const auto out = predict(s, 0.1, 0.5);
  CHECK(out.covariance.trace() > s.covariance.trace());
}

TEST_CASE("zero noise and zero velocity leave the state in place") {
  EstimatorState s;
  s.position = Vec3(1, 2, 3);
  s.covariance = 1e-12 * Mat6::Identity();
  const auto out = predict(s, 1.0, 0.0);
  CHECK((out.position - s.position).norm() == 0.0);
  CHECK((out.velocity - s.velocity).norm() == 0.0);
  CHECK(out.covariance.norm() < 1e-10);
}

TEST_CASE("predict validates dt and the process noise sign") {
  EstimatorState s;
  CHECK_THROWS_AS(predict(s, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(predict(s, -0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(predict(s, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("equal-weight velocity fusion halves the innovation") {
  EstimatorState s;  // velocity zero, covariance identity
  VelocityMeasurement m;
  m.v_body = Vec3(1, 0, 0);
  m.cov = Mat3::Identity();
  const auto out = update_velocity(s, m, Quat::Identity());
  CHECK((out.velocity - Vec3(0.5, 0, 0)).norm() < 1e-12);
  CHECK(out.position.norm() < 1e-12);
  // Posterior velocity block is 0.5*I.
  CHECK((out.covariance.block<3, 3>(3, 3) - 0.5 * Mat3::Identity()).norm() <
        1e-12);
}

TEST_CASE("uninformative velocity measurement leaves the state unchanged") {
  EstimatorState s;
  s.velocity = Vec3(0.2, -0.1, 0.05);
  VelocityMeasurement m;
  m.v_body = Vec3(5, 5, 5);
  m.cov = 1e12 * Mat3::Identity();
  const auto out = update_velocity(s, m, Quat::Identity());
  CHECK((out.velocity - s.velocity).norm() < 1e-6);
  CHECK((out.covariance - s.covariance).norm() < 1e-6);
}

TEST_CASE("body-frame measurements are rotated through the attitude") {
  EstimatorState s;
  VelocityMeasurement m;
  m.v_body = Vec3(1, 0, 0);
  m.cov = Mat3::Identity();
  // 90 degree yaw: body x points along world y.
  const Quat att(Eigen::AngleAxisd(M_PI / 2.0, Vec3::UnitZ()));
  const auto out = update_velocity(s, m, att);
  CHECK(out.velocity.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.velocity.y() == doctest::Approx(0.5).epsilon(1e-12));

  // Anisotropic covariance: tight along body x, uninformative elsewhere.
  VelocityMeasurement tight;
  tight.v_body = Vec3(1, 0, 0);
  tight.cov = Vec3(1e-8, 1e8, 1e8).asDiagonal();
  const auto out2 = update_velocity(s, tight, att);
  CHECK(out2.velocity.y() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(out2.velocity.x()) < 1e-4);
  CHECK(std::abs(out2.velocity.z()) < 1e-4);
}

TEST_CASE("velocity update rejects invalid covariance and attitude") {
  EstimatorState s;
  VelocityMeasurement m;
  m.cov = -Mat3::Identity();
  CHECK_THROWS_AS(update_velocity(s, m, Quat::Identity()), std::invalid_argument);
  m.cov = Mat3::Identity();
  m.cov(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(update_velocity(s, m, Quat::Identity()), std::invalid_argument);
  m.cov = Mat3::Identity();
  Quat bad(2.0, 0.0, 0.0, 0.0);
  CHECK_THROWS_AS(update_velocity(s, m, bad), std::invalid_argument);
}

TEST_CASE("posterior velocity covariance never exceeds the prior") {
  std::mt19937 rng(3);
  EstimatorState s;
  s.covariance = Mat6::Identity();
  for (int i = 0; i < 50; ++i) {
    VelocityMeasurement m;
    m.v_body = oracle::random_unit_vector(rng);
    m.cov = random_spd(rng, 0.5);
    const auto out = update_velocity(s, m, Quat::Identity());
    // Loewner order on the velocity block: prior - posterior is PSD.
    const Mat3 diff = s.covariance.block<3, 3>(3, 3) -
                      out.covariance.block<3, 3>(3, 3);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(diff);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10);
    s = out;
  }
}

TEST_CASE("depth update pins z with a tiny variance") {
  EstimatorState s;
  s.position = Vec3(0, 0, 1.0);
  DepthMeasurement d;
  d.depth = 2.5;
  d.variance = 1e-12;
  const auto out = update_depth(s, d);
  CHECK(out.position.z() == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(out.position.x() == 0.0);

  DepthMeasurement loose;
  loose.depth = 99.0;
  loose.variance = 1e12;
  const auto out2 = update_depth(s, loose);
  CHECK(out2.position.z() == doctest::Approx(1.0).epsilon(1e-6));

  DepthMeasurement bad;
  bad.variance = 0.0;
  CHECK_THROWS_AS(update_depth(s, bad), std::invalid_argument);
}

TEST_CASE("exact updates collapse the matching covariance block by 99 percent") {
  EstimatorState s;
  VelocityMeasurement m;
  m.v_body = Vec3(0.1, 0.2, 0.3);
  m.cov = 1e-12 * Mat3::Identity();
  const auto after_vel = update_velocity(s, m, Quat::Identity());
  CHECK(after_vel.covariance.block<3, 3>(3, 3).trace() <=
        0.01 * s.covariance.block<3, 3>(3, 3).trace());

  DepthMeasurement d;
  d.depth = 1.0;
  d.variance = 1e-12;
  const auto after_depth = update_depth(s, d);
  CHECK(after_depth.covariance(2, 2) <= 0.01 * s.covariance(2, 2));
}

TEST_CASE("steady-state depth covariance matches the Riccati fixed point") {
  const double dt = 0.05, q = 0.1, r = 0.01;

  // Independent 2x2 iteration for the (z, vz) subsystem, written out long
  // hand: propagate, then a scalar position update.
  Eigen::Matrix2d p = Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d f = (Eigen::Matrix2d() << 1.0, dt, 0.0, 1.0).finished();
  const Eigen::Matrix2d qm =
      (Eigen::Matrix2d() << q * dt * dt * dt / 3.0, q * dt * dt / 2.0,
       q * dt * dt / 2.0, q * dt)
          .finished();
  for (int i = 0; i < 200000; ++i) {
    p = f * p * f.transpose() + qm;
    const Eigen::Vector2d k = p.col(0) / (p(0, 0) + r);
    const Eigen::Matrix2d ikh =
        Eigen::Matrix2d::Identity() - k * Eigen::RowVector2d(1.0, 0.0);
    p = ikh * p * ikh.transpose() + k * r * k.transpose();
  }

  // The filter under a biased constant depth stream (bias does not affect
  // covariance in a linear filter).
  EstimatorState s;
  for (int i = 0; i < 2000; ++i) {
    s = predict(s, dt, q);
    DepthMeasurement d;
    d.depth = 5.0;
    d.variance = r;
    s = update_depth(s, d);
  }
  CHECK(s.covariance(2, 2) == doctest::Approx(p(0, 0)).epsilon(1e-9));
  CHECK(s.covariance(5, 5) == doctest::Approx(p(1, 1)).epsilon(1e-9));
  CHECK(s.covariance(2, 5) == doctest::Approx(p(0, 1)).epsilon(1e-9));
  CHECK(s.position.z() == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("Monte-Carlo velocity NEES sits in the 95 percent chi-square band") {
  const int runs = 1000, steps = 50;
  const double dt = 0.05, q = 0.1, r = 2.5e-3;

  // Process noise sampler for one axis pair (pos, vel).
  const Eigen::Matrix2d qm =
      (Eigen::Matrix2d() << q * dt * dt * dt / 3.0, q * dt * dt / 2.0,
       q * dt * dt / 2.0, q * dt)
          .finished();
  const Eigen::Matrix2d qs = qm.llt().matrixL();

  std::mt19937 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  double nees_sum = 0.0;

  for (int run = 0; run < runs; ++run) {
    EstimatorState est;
    est.covariance = Mat6::Identity();
    Vec3 true_pos, true_vel;
    for (int i = 0; i < 3; ++i) {
      true_pos[i] = n01(rng);  // matches the identity prior
      true_vel[i] = n01(rng);
    }

    for (int k = 0; k < steps; ++k) {
      // Truth propagates through the same constant-velocity model.
      for (int i = 0; i < 3; ++i) {
        const Eigen::Vector2d w = qs * Eigen::Vector2d(n01(rng), n01(rng));
        true_pos[i] += dt * true_vel[i] + w(0);
        true_vel[i] += w(1);
      }
      est = predict(est, dt, q);

      VelocityMeasurement m;
      for (int i = 0; i < 3; ++i)
        m.v_body[i] = true_vel[i] + std::sqrt(r) * n01(rng);
      m.cov = r * Mat3::Identity();
      est = update_velocity(est, m, Quat::Identity());
    }

    const Vec3 err = est.velocity - true_vel;
    const Mat3 pvv = est.covariance.block<3, 3>(3, 3);
    nees_sum += err.dot(pvv.ldlt().solve(err));
  }

  const double mean_nees = nees_sum / runs;
  const double lo = chi2_quantile(3.0 * runs, -1.959964) / runs;
  const double hi = chi2_quantile(3.0 * runs, 1.959964) / runs;
  INFO("mean NEES ", mean_nees, " band [", lo, ", ", hi, "]");
  CHECK(mean_nees >= lo);
  CHECK(mean_nees <= hi);
}

TEST_CASE("covariance stays symmetric positive-definite over random cycles") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  EstimatorState s;

  for (int i = 0; i < 100000; ++i) {
    const double pick = u01(rng);
    if (pick < 0.4) {
      s = predict(s, 1e-3 + 0.5 * u01(rng), u01(rng));
    } else if (pick < 0.8) {
      VelocityMeasurement m;
      m.v_body = Vec3(n01(rng), n01(rng), n01(rng));
      m.cov = random_spd(rng, 0.05 + u01(rng));
      const Quat att = Quat(Eigen::AngleAxisd(
          2.0 * M_PI * u01(rng), oracle::random_unit_vector(rng)));
      s = update_velocity(s, m, att);
    } else {
      DepthMeasurement d;
      d.depth = 3.0 * u01(rng);
      d.variance = 1e-6 + u01(rng);
      s = update_depth(s, d);
    }
    CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() <=
          1e-12);
    if (i % 200 == 0) {
      Eigen::SelfAdjointEigenSolver<Mat6> eig(s.covariance);
      CHECK(eig.eigenvalues().minCoeff() > 1e-13);
    }
  }
}

TEST_CASE("rpe_rmse is zero for perfect and constant-offset estimates") {
  std::vector<Vec3> truth, est_same, est_shift;
  for (int i = 0; i <= 300; ++i) {
    truth.emplace_back(0.1 * i, 0.0, 0.0);
    est_same.push_back(truth.back());
    est_shift.push_back(truth.back() + Vec3(0.2, 0.0, 0.0));
  }
  CHECK(rpe_rmse(est_same, truth, 10.0) == 0.0);
  CHECK(rpe_rmse(est_shift, truth, 10.0) < 1e-12);
}

TEST_CASE("rpe_rmse measures linear drift exactly") {
  // 0.125 m steps are exactly representable, so every 10 m window spans
  // exactly 80 samples and the drift per window is 80 * 0.0125 = 1.0 m.
  std::vector<Vec3> truth, est;
  for (int i = 0; i <= 300; ++i) {
    truth.emplace_back(0.125 * i, 0.0, 0.0);
    est.push_back(truth.back() + Vec3(0.0, 0.0125 * i, 0.0));
  }
  CHECK(rpe_rmse(est, truth, 10.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rpe_rmse validates its inputs") {
  std::vector<Vec3> a = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  std::vector<Vec3> b = {Vec3(0, 0, 0)};
  CHECK_THROWS_AS(rpe_rmse(a, b, 0.5), std::invalid_argument);
  std::vector<Vec3> c = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK_THROWS_AS(rpe_rmse(a, c, 5.0), std::invalid_argument);  // path too short
}

TEST_CASE("measurement log replay is bit-identical") {
  std::mt19937 rng(13);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<MeasurementRecord> records;
  double t = 0.0;
  for (int i = 0; i < 200; ++i) {
    t += 0.05;
    MeasurementRecord rec;
    rec.stamp = t;
    if (i % 5 == 4) {
      rec.type = MeasurementRecord::Type::kDepth;
      rec.depth.depth = 1.5 + 0.1 * n01(rng);
      rec.depth.variance = 0.01;
      rec.depth.stamp = t;
    } else {
      rec.type = MeasurementRecord::Type::kVelocity;
      rec.velocity.v_body = Vec3(0.5 + 0.05 * n01(rng), 0.05 * n01(rng),
                                 0.05 * n01(rng));
      rec.velocity.cov = 2.5e-3 * Mat3::Identity();
      rec.velocity.stamp = t;
      rec.attitude = Quat(Eigen::AngleAxisd(0.01 * i, Vec3::UnitZ()));
    }
    records.push_back(rec);
  }

  EstimatorState init;
  std::vector<EstimatorState> trace_a, trace_b;
  const auto end_a = replay_measurements(records, init, 0.0, 0.1, &trace_a);
  const auto end_b = replay_measurements(records, init, 0.0, 0.1, &trace_b);
  REQUIRE(trace_a.size() == records.size());
  CHECK(bitwise_equal(end_a, end_b));
  for (size_t i = 0; i < trace_a.size(); ++i)
    CHECK(bitwise_equal(trace_a[i], trace_b[i]));

  // Through the text log: %.17g round trips doubles exactly.
  const std::string path = "tmp_meas_log.txt";
  save_measurement_log(records, path);
  const auto loaded = load_measurement_log(path);
  REQUIRE(loaded.size() == records.size());
  const auto end_c = replay_measurements(loaded, init, 0.0, 0.1);
  CHECK(bitwise_equal(end_a, end_c));
  std::remove(path.c_str());
}

TEST_CASE("replay rejects unsorted logs") {
  std::vector<MeasurementRecord> records(2);
  records[0].stamp = 1.0;
  records[1].stamp = 0.5;
  CHECK_THROWS_AS(replay_measurements(records, EstimatorState{}, 0.0, 0.1),
                  std::invalid_argument);
}

TEST_CASE("non-finite states are rejected") {
  EstimatorState s;
  s.position.x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(predict(s, 0.1, 0.1), std::invalid_argument);
}
