#pragma once

#include <string>
#include <vector>

#include "nautilus/geometry.hpp"

namespace nautilus {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat3 = Eigen::Matrix3d;

/// Filter state: world-frame position and velocity with joint covariance
/// (rows/cols 0-2 position, 3-5 velocity). Attitude is supplied externally
/// with each velocity update, so it is not part of the state.
struct EstimatorState {
  Vec3 position{0.0, 0.0, 0.0};
  Vec3 velocity{0.0, 0.0, 0.0};
  Mat6 covariance = Mat6::Identity();
};

/// Body-frame velocity with covariance, as a learned velocity estimator
/// would emit it.
struct VelocityMeasurement {
  Vec3 v_body{0.0, 0.0, 0.0};
  Mat3 cov = Mat3::Identity();
  double stamp = 0.0;
};

/// Barometric depth: world z, positive down.
struct DepthMeasurement {
  double depth = 0.0;
  double variance = 1.0;
  double stamp = 0.0;
};

/// Constant-velocity prediction over dt with white-acceleration process
/// noise of the given power spectral density (m^2/s^3).
/// Throws std::invalid_argument for dt <= 0 or negative PSD.
EstimatorState predict(const EstimatorState& state, double dt, double accel_psd);

/// Measurement update with v_world = attitude * v_body and covariance
/// R_world = attitude * cov * attitude^T, Joseph form.
/// Throws std::invalid_argument when cov is not symmetric positive-definite
/// or the attitude quaternion is not unit norm.
EstimatorState update_velocity(const EstimatorState& state,
                               const VelocityMeasurement& meas,
                               const Quat& attitude);

/// Scalar update on the z position. Throws for variance <= 0.
EstimatorState update_depth(const EstimatorState& state,
                            const DepthMeasurement& meas);

/// Root-mean-square relative translation error: for every window whose
/// ground-truth arc length first reaches `delta`, the error is
/// |(est_j - est_i) - (truth_j - truth_i)|. Trajectories are index-aligned.
/// Throws std::invalid_argument when sizes differ or the ground-truth path
/// is shorter than delta.
double rpe_rmse(const std::vector<Vec3>& estimated,
                const std::vector<Vec3>& truth, double delta);

/// One logged measurement; a stream of these replays the filter exactly.
struct MeasurementRecord {
  enum class Type { kVelocity, kDepth };
  Type type = Type::kVelocity;
  double stamp = 0.0;
  VelocityMeasurement velocity;  // with attitude below when type == kVelocity
  Quat attitude{1.0, 0.0, 0.0, 0.0};
  DepthMeasurement depth;
};

void save_measurement_log(const std::vector<MeasurementRecord>& records,
                          const std::string& path);
std::vector<MeasurementRecord> load_measurement_log(const std::string& path);

/// Runs the filter over a time-sorted record stream: predicts from the
/// previous stamp (or start_time for the first record) and applies each
/// update in order. Optionally captures the posterior after every record.
EstimatorState replay_measurements(const std::vector<MeasurementRecord>& records,
                                   const EstimatorState& initial,
                                   double start_time, double accel_psd,
                                   std::vector<EstimatorState>* trace = nullptr);

}  // namespace nautilus
