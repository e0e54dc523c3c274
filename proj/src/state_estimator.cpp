#include "nautilus/state_estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nautilus/textio.hpp"

namespace nautilus {
namespace {

// Covariance conditioning: exact symmetrization plus an eigenvalue floor of
// 1e-12 so that long update chains cannot drive the matrix indefinite
// through rounding. The floor only ever raises eigenvalues.
Mat6 condition(const Mat6& p) {
  Mat6 sym = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<Mat6> eig(sym);
  if (eig.eigenvalues().minCoeff() >= 1e-12) return sym;
  Eigen::Matrix<double, 6, 1> vals = eig.eigenvalues().cwiseMax(1e-12);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

void check_finite(const EstimatorState& s) {
  if (!s.position.allFinite() || !s.velocity.allFinite() ||
      !s.covariance.allFinite())
    throw std::invalid_argument("estimator state has non-finite entries");
}

// Joseph-form update for measurement z = H x + v, v ~ N(0, R).
template <int M>
EstimatorState joseph_update(const EstimatorState& state,
                             const Eigen::Matrix<double, M, 6>& H,
                             const Eigen::Matrix<double, M, 1>& z,
                             const Eigen::Matrix<double, M, M>& R) {
  Eigen::Matrix<double, 6, 1> x;
  x << state.position, state.velocity;
  const Eigen::Matrix<double, M, 1> innovation = z - H * x;
  const Eigen::Matrix<double, M, M> S =
      H * state.covariance * H.transpose() + R;
  const Eigen::Matrix<double, 6, M> K =
      state.covariance * H.transpose() * S.inverse();
  x += K * innovation;
  const Mat6 IKH = Mat6::Identity() - K * H;
  EstimatorState out;
  out.position = x.template head<3>();
  out.velocity = x.template tail<3>();
  out.covariance = condition(IKH * state.covariance * IKH.transpose() +
                             K * R * K.transpose());
  return out;
}

}  // namespace

EstimatorState predict(const EstimatorState& state, double dt, double accel_psd) {
  if (!(dt > 0.0)) throw std::invalid_argument("predict requires dt > 0");
  if (accel_psd < 0.0) throw std::invalid_argument("negative process noise");
  check_finite(state);

  Mat6 F = Mat6::Identity();
  F.block<3, 3>(0, 3) = dt * Mat3::Identity();

  const double q = accel_psd;
  Mat6 Q = Mat6::Zero();
  Q.block<3, 3>(0, 0) = (q * dt * dt * dt / 3.0) * Mat3::Identity();
  Q.block<3, 3>(0, 3) = (q * dt * dt / 2.0) * Mat3::Identity();
  Q.block<3, 3>(3, 0) = (q * dt * dt / 2.0) * Mat3::Identity();
  Q.block<3, 3>(3, 3) = (q * dt) * Mat3::Identity();

  EstimatorState out;
  out.position = state.position + dt * state.velocity;
  out.velocity = state.velocity;
  out.covariance = condition(F * state.covariance * F.transpose() + Q);
  return out;
}

EstimatorState update_velocity(const EstimatorState& state,
                               const VelocityMeasurement& meas,
                               const Quat& attitude) {
  check_finite(state);
  if (std::abs(attitude.norm() - 1.0) > 1e-6)
    throw std::invalid_argument("attitude quaternion is not unit norm");
  if ((meas.cov - meas.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("velocity covariance is not symmetric");
  Eigen::LLT<Mat3> llt(meas.cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("velocity covariance is not positive definite");

  const Mat3 Rw = attitude.toRotationMatrix();
  const Vec3 z = Rw * meas.v_body;
  const Mat3 R = Rw * meas.cov * Rw.transpose();

  Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
  H.block<3, 3>(0, 3) = Mat3::Identity();
  return joseph_update<3>(state, H, z, R);
}

EstimatorState update_depth(const EstimatorState& state,
                            const DepthMeasurement& meas) {
  check_finite(state);
  if (!(meas.variance > 0.0))
    throw std::invalid_argument("depth variance must be positive");

  Eigen::Matrix<double, 1, 6> H = Eigen::Matrix<double, 1, 6>::Zero();
  H(0, 2) = 1.0;
  Eigen::Matrix<double, 1, 1> z, R;
  z(0, 0) = meas.depth;
  R(0, 0) = meas.variance;
  return joseph_update<1>(state, H, z, R);
}

double rpe_rmse(const std::vector<Vec3>& estimated,
                const std::vector<Vec3>& truth, double delta) {
  if (estimated.size() != truth.size())
    throw std::invalid_argument("trajectories must be index-aligned");
  if (truth.size() < 2) throw std::invalid_argument("trajectory too short");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");

  const size_t n = truth.size();
  std::vector<double> arc(n, 0.0);
  for (size_t i = 1; i < n; ++i)
    arc[i] = arc[i - 1] + (truth[i] - truth[i - 1]).norm();
  if (arc.back() < delta)
    throw std::invalid_argument("ground-truth path shorter than delta");

  double sum_sq = 0.0;
  size_t count = 0, j = 0;
  for (size_t i = 0; i < n; ++i) {
    if (j < i) j = i;
    while (j < n && arc[j] - arc[i] < delta) ++j;
    if (j >= n) break;
    const Vec3 err =
        (estimated[j] - estimated[i]) - (truth[j] - truth[i]);
    sum_sq += err.squaredNorm();
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no full-length window");
  return std::sqrt(sum_sq / static_cast<double>(count));
}

void save_measurement_log(const std::vector<MeasurementRecord>& records,
                          const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path + " for writing");
  fs << "nautilus_meas 1\n";
  for (const auto& rec : records) {
    if (rec.type == MeasurementRecord::Type::kVelocity) {
      const auto& m = rec.velocity;
      fs << "vel " << fmt_double(rec.stamp);
      for (int i = 0; i < 3; ++i) fs << ' ' << fmt_double(m.v_body[i]);
      for (int i = 0; i < 3; ++i)
        for (int k = i; k < 3; ++k) fs << ' ' << fmt_double(m.cov(i, k));
      fs << ' ' << fmt_double(rec.attitude.w()) << ' '
         << fmt_double(rec.attitude.x()) << ' ' << fmt_double(rec.attitude.y())
         << ' ' << fmt_double(rec.attitude.z()) << '\n';
    } else {
      fs << "depth " << fmt_double(rec.stamp) << ' '
         << fmt_double(rec.depth.depth) << ' ' << fmt_double(rec.depth.variance)
         << '\n';
    }
  }
}

std::vector<MeasurementRecord> load_measurement_log(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path);
  std::string line;
  int lineno = 1;
  if (!std::getline(fs, line) || split_tokens(line) !=
                                     std::vector<std::string>{"nautilus_meas", "1"})
    throw ParseError("bad measurement log header", lineno);

  std::vector<MeasurementRecord> out;
  while (std::getline(fs, line)) {
    ++lineno;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    MeasurementRecord rec;
    if (tok[0] == "vel") {
      if (tok.size() != 15) throw ParseError("vel record needs 14 fields", lineno);
      rec.type = MeasurementRecord::Type::kVelocity;
      rec.stamp = parse_double(tok[1], lineno);
      for (int i = 0; i < 3; ++i)
        rec.velocity.v_body[i] = parse_double(tok[2 + i], lineno);
      int t = 5;
      for (int i = 0; i < 3; ++i)
        for (int k = i; k < 3; ++k) {
          rec.velocity.cov(i, k) = parse_double(tok[t], lineno);
          rec.velocity.cov(k, i) = rec.velocity.cov(i, k);
          ++t;
        }
      rec.attitude = Quat(parse_double(tok[11], lineno), parse_double(tok[12], lineno),
                          parse_double(tok[13], lineno), parse_double(tok[14], lineno));
      rec.velocity.stamp = rec.stamp;
    } else if (tok[0] == "depth") {
      if (tok.size() != 4) throw ParseError("depth record needs 3 fields", lineno);
      rec.type = MeasurementRecord::Type::kDepth;
      rec.stamp = parse_double(tok[1], lineno);
      rec.depth.depth = parse_double(tok[2], lineno);
      rec.depth.variance = parse_double(tok[3], lineno);
      rec.depth.stamp = rec.stamp;
    } else {
      throw ParseError("unknown record type '" + tok[0] + "'", lineno);
    }
    out.push_back(rec);
  }
  return out;
}

EstimatorState replay_measurements(const std::vector<MeasurementRecord>& records,
                                   const EstimatorState& initial,
                                   double start_time, double accel_psd,
                                   std::vector<EstimatorState>* trace) {
  EstimatorState state = initial;
  double t = start_time;
  for (const auto& rec : records) {
    if (rec.stamp < t)
      throw std::invalid_argument("measurement log is not time-sorted");
    if (rec.stamp > t) {
      state = predict(state, rec.stamp - t, accel_psd);
      t = rec.stamp;
    }
    if (rec.type == MeasurementRecord::Type::kVelocity)
      state = update_velocity(state, rec.velocity, rec.attitude);
    else
      state = update_depth(state, rec.depth);
    if (trace) trace->push_back(state);
  }
  return state;
}

}  // namespace nautilus
