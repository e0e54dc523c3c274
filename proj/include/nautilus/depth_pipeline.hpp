#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nautilus/geometry.hpp"
#include "nautilus/refractive_camera.hpp"
#include "nautilus/world.hpp"

namespace nautilus {

/// Per-pixel stereo disparity (pixels). Invalid pixels are NaN; valid
/// disparities are positive and convert to depth as fx * baseline / d.
/// The stereo pair is treated as rectified, so the pipeline is pinhole
/// end to end regardless of the port parameters stored in `intr`.
struct DisparityImage {
  int rows = 0;
  int cols = 0;
  double baseline = 0.0;
  CameraIntrinsics intr;
  std::vector<double> values;

  DisparityImage() = default;
  DisparityImage(const CameraIntrinsics& intr_, double baseline_)
      : rows(intr_.height), cols(intr_.width), baseline(baseline_), intr(intr_),
        values(static_cast<size_t>(intr_.height) * intr_.width,
               std::numeric_limits<double>::quiet_NaN()) {}

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  bool valid(int r, int c) const {
    return std::isfinite(at(r, c)) && at(r, c) > 0.0;
  }
  double depth_at(int r, int c) const { return intr.fx * baseline / at(r, c); }
};

/// Dense per-pixel feature vectors, the stand-in for learned encoder output.
struct FeatureImage {
  int rows = 0;
  int cols = 0;
  int dim = 8;
  std::vector<double> data;

  FeatureImage() = default;
  FeatureImage(int r, int c, int d)
      : rows(r), cols(c), dim(d), data(static_cast<size_t>(r) * c * d, 0.0) {}

  double* at(int r, int c) {
    return data.data() + (static_cast<size_t>(r) * cols + c) * dim;
  }
  const double* at(int r, int c) const {
    return data.data() + (static_cast<size_t>(r) * cols + c) * dim;
  }
};

/// Cosine similarity per pixel, NaN where not evaluated.
struct ConfidenceMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  ConfidenceMap() = default;
  ConfidenceMap(int r, int c)
      : rows(r), cols(c), values(static_cast<size_t>(r) * c,
                                 std::numeric_limits<double>::quiet_NaN()) {}

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

struct StereoFrame {
  DisparityImage disparity;
  FeatureImage left;
  FeatureImage right;
};

/// Synthetic stereo source standing in for a learned matcher. Ground-truth
/// disparity comes from pinhole ray casts (pixels beyond the water
/// visibility are invalid) plus Gaussian pixel noise. When `init` is given
/// the result starts from it and converges toward ground truth by a factor
/// beta per iteration, so better initialization means lower final error;
/// without `init` the matcher converges fully. Features are unit vectors
/// built so left(u, v) equals the right-row interpolation at the true
/// disparity: confidence is exactly 1 where the disparity is right and
/// decorrelates where it is wrong.
StereoFrame synth_disparity(const World& world, const Pose& left_pose,
                            const CameraIntrinsics& intr, double baseline,
                            double noise_sigma, std::mt19937& rng,
                            const DisparityImage* init = nullptr,
                            int iterations = 5, double beta = 0.5);

struct HprResult {
  std::vector<int> visible;  // sorted indices into the input cloud
  bool degenerate = false;   // flipped set did not span 3-D
};

/// Katz spherical-flip visibility: points whose flipped images lie on the
/// convex hull of the flipped cloud plus the viewpoint are visible.
/// R = max distance * 10^gamma. Degenerate (lower-dimensional) clouds get
/// their lower-dimensional hull and the degeneracy flag.
HprResult hidden_point_removal(const PointCloud& cloud, const Vec3& viewpoint,
                               double gamma = 2.0);

/// Warm-start prediction: transforms the previous world-frame cloud into
/// the current camera, removes hidden points, z-buffers the survivors
/// (nearest depth wins per pixel) and converts to disparity.
DisparityImage predict_disparity(const PointCloud& prev_cloud_world,
                                 const Pose& camera_pose,
                                 const CameraIntrinsics& intr, double baseline);

struct FilterResult {
  PointCloud cloud;  // camera frame, one point per retained pixel
  ConfidenceMap confidence;
};

/// Confidence filter: warps the right features by the disparity (sub-pixel
/// row interpolation), keeps pixels with cosine >= conf_threshold and depth
/// <= max_dist.
FilterResult filter_depth(const DisparityImage& disp, const FeatureImage& feat_left,
                          const FeatureImage& feat_right, double conf_threshold,
                          double max_dist);

// ASCII float-map export for golden-file comparisons. Bit-exact round trip.
void save_disparity_ascii(const DisparityImage& img, const std::string& path);
DisparityImage load_disparity_ascii(const std::string& path);

}  // namespace nautilus
