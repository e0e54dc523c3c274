#include "nautilus/depth_pipeline.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "nautilus/convex_hull.hpp"
#include "nautilus/textio.hpp"

namespace nautilus {
namespace {

uint64_t splitmix64(uint64_t& s) {
  s += 0x9E3779B97F4A7C15ULL;
  uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic unit feature for right-image pixel (x, v).
void right_feature(uint64_t seed, int x, int v, int dim, double* out) {
  uint64_t s = seed ^ (static_cast<uint64_t>(static_cast<uint32_t>(x)) *
                       0xD6E8FEB86659FD93ULL) ^
               (static_cast<uint64_t>(static_cast<uint32_t>(v)) *
                0xC2B2AE3D27D4EB4FULL);
  double norm2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double u = static_cast<double>(splitmix64(s) >> 11) * 0x1p-52;
    out[k] = 2.0 * u - 1.0;
    norm2 += out[k] * out[k];
  }
  const double norm = std::sqrt(norm2);
  if (norm < 1e-12) {
    out[0] = 1.0;
    for (int k = 1; k < dim; ++k) out[k] = 0.0;
    return;
  }
  for (int k = 0; k < dim; ++k) out[k] /= norm;
}

// Linear interpolation of right features along a row at continuous column x.
// Returns false when x falls outside [0, cols-1].
bool interp_right_row(const FeatureImage& right, int v, double x, double* out) {
  if (x < 0.0 || x > right.cols - 1) return false;
  int x0 = static_cast<int>(std::floor(x));
  if (x0 > right.cols - 2) x0 = right.cols - 2;
  if (right.cols == 1) {
    const double* f = right.at(v, 0);
    std::copy(f, f + right.dim, out);
    return true;
  }
  const double frac = x - x0;
  const double* f0 = right.at(v, x0);
  const double* f1 = right.at(v, x0 + 1);
  for (int k = 0; k < right.dim; ++k) out[k] = (1.0 - frac) * f0[k] + frac * f1[k];
  return true;
}

double cosine(const double* a, const double* b, int dim) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int k = 0; k < dim; ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na < 1e-24 || nb < 1e-24) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

StereoFrame synth_disparity(const World& world, const Pose& left_pose,
                            const CameraIntrinsics& intr, double baseline,
                            double noise_sigma, std::mt19937& rng,
                            const DisparityImage* init, int iterations,
                            double beta) {
  if (baseline <= 0.0) throw std::invalid_argument("baseline must be positive");
  if (init && (init->rows != intr.height || init->cols != intr.width))
    throw std::invalid_argument("init disparity dimensions mismatch");

  constexpr int kDim = 8;
  StereoFrame frame;
  frame.disparity = DisparityImage(intr, baseline);
  frame.left = FeatureImage(intr.height, intr.width, kDim);
  frame.right = FeatureImage(intr.height, intr.width, kDim);

  const uint64_t frame_seed =
      (static_cast<uint64_t>(rng()) << 32) ^ static_cast<uint64_t>(rng());
  const uint64_t fallback_seed = frame_seed ^ 0x9E3779B97F4A7C15ULL;

  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u)
      right_feature(frame_seed, u, v, kDim, frame.right.at(v, u));

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double shrink = std::pow(beta, iterations);

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      // True depth along the pinhole ray through pixel center (u, v).
      const Vec3 dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const Vec3 dir_world = (left_pose.rotation * dir_cam).normalized();
      const auto hit = ray_cast(world, left_pose.translation, dir_world,
                                world.water_visibility);

      double* fl = frame.left.at(v, u);
      if (!hit) {
        right_feature(fallback_seed, u, v, kDim, fl);
        continue;
      }
      // Depth = z-component in the camera frame; the cast returns range.
      const double z = hit->distance / dir_cam.norm();
      const double d_true = intr.fx * baseline / z;

      double d = d_true;
      if (init) {
        const double start =
            init->valid(v, u) ? init->at(v, u) : 0.0;
        d = d_true + (start - d_true) * shrink;
      }
      if (noise_sigma > 0.0) d += noise_sigma * gauss(rng);
      if (d > 0.0) frame.disparity.at(v, u) = d;

      const double xr = u - d_true;
      if (!interp_right_row(frame.right, v, xr, fl))
        right_feature(fallback_seed, u, v, kDim, fl);
    }
  }
  return frame;
}

HprResult hidden_point_removal(const PointCloud& cloud, const Vec3& viewpoint,
                               double gamma) {
  if (cloud.empty()) throw std::invalid_argument("hidden_point_removal: empty cloud");
  const int n = static_cast<int>(cloud.size());
  double max_norm = 0.0;
  for (const auto& p : cloud) {
    const double d = (p - viewpoint).norm();
    if (d < 1e-12)
      throw std::invalid_argument("hidden_point_removal: point coincides with viewpoint");
    max_norm = std::max(max_norm, d);
  }
  const double radius = max_norm * std::pow(10.0, gamma);

  PointCloud flipped(cloud.size() + 1);
  for (int i = 0; i < n; ++i) {
    const Vec3 q = cloud[i] - viewpoint;
    const double qn = q.norm();
    flipped[i] = q * (2.0 * radius / qn - 1.0);
  }
  flipped[n] = Vec3::Zero();  // the viewpoint itself

  const auto hull = convex_hull_vertices(flipped);
  HprResult out;
  out.degenerate = hull.degenerate;
  out.visible.reserve(hull.vertices.size());
  for (int idx : hull.vertices)
    if (idx != n) out.visible.push_back(idx);
  std::sort(out.visible.begin(), out.visible.end());
  return out;
}

DisparityImage predict_disparity(const PointCloud& prev_cloud_world,
                                 const Pose& camera_pose,
                                 const CameraIntrinsics& intr, double baseline) {
  DisparityImage img(intr, baseline);
  if (prev_cloud_world.empty()) return img;

  const Pose cam_from_world = camera_pose.inverse();
  PointCloud cam;
  cam.reserve(prev_cloud_world.size());
  for (const auto& p : prev_cloud_world) {
    const Vec3 q = cam_from_world.apply(p);
    if (q.norm() < 1e-9) continue;  // coincides with the camera center
    cam.push_back(q);
  }
  if (cam.empty()) return img;

  const auto hpr = hidden_point_removal(cam, Vec3::Zero());

  std::vector<double> zbuf(static_cast<size_t>(intr.height) * intr.width,
                           std::numeric_limits<double>::infinity());
  for (int idx : hpr.visible) {
    const Vec3& q = cam[static_cast<size_t>(idx)];
    if (q.z() < 1e-9) continue;
    const double u = intr.cx + intr.fx * q.x() / q.z();
    const double v = intr.cy + intr.fy * q.y() / q.z();
    const int ui = static_cast<int>(std::lround(u));
    const int vi = static_cast<int>(std::lround(v));
    if (ui < 0 || ui >= intr.width || vi < 0 || vi >= intr.height) continue;
    double& z = zbuf[static_cast<size_t>(vi) * intr.width + ui];
    if (q.z() < z) {
      z = q.z();
      img.at(vi, ui) = intr.fx * baseline / q.z();
    }
  }
  return img;
}

FilterResult filter_depth(const DisparityImage& disp, const FeatureImage& feat_left,
                          const FeatureImage& feat_right, double conf_threshold,
                          double max_dist) {
  if (feat_left.rows != disp.rows || feat_left.cols != disp.cols ||
      feat_right.rows != disp.rows || feat_right.cols != disp.cols ||
      feat_left.dim != feat_right.dim)
    throw std::invalid_argument("filter_depth: image dimensions mismatch");

  FilterResult out;
  out.confidence = ConfidenceMap(disp.rows, disp.cols);
  std::vector<double> warped(static_cast<size_t>(feat_right.dim));

  const CameraIntrinsics& intr = disp.intr;
  for (int v = 0; v < disp.rows; ++v) {
    for (int u = 0; u < disp.cols; ++u) {
      if (!disp.valid(v, u)) continue;
      const double d = disp.at(v, u);
      if (!interp_right_row(feat_right, v, u - d, warped.data())) continue;
      const double conf = cosine(feat_left.at(v, u), warped.data(), feat_left.dim);
      out.confidence.at(v, u) = conf;
      if (conf < conf_threshold) continue;
      const double z = intr.fx * disp.baseline / d;
      if (z > max_dist) continue;
      out.cloud.emplace_back(z * (u - intr.cx) / intr.fx,
                             z * (v - intr.cy) / intr.fy, z);
    }
  }
  return out;
}

void save_disparity_ascii(const DisparityImage& img, const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path + " for writing");
  fs << "nautilus_pfm 1\n";
  fs << img.cols << ' ' << img.rows << '\n';
  fs << fmt_double(img.intr.fx) << ' ' << fmt_double(img.intr.fy) << ' '
     << fmt_double(img.intr.cx) << ' ' << fmt_double(img.intr.cy) << ' '
     << fmt_double(img.intr.port_distance) << ' ' << fmt_double(img.intr.n_ratio)
     << ' ' << fmt_double(img.baseline) << '\n';
  for (int v = 0; v < img.rows; ++v) {
    for (int u = 0; u < img.cols; ++u) {
      if (u) fs << ' ';
      fs << fmt_double(img.at(v, u));
    }
    fs << '\n';
  }
}

DisparityImage load_disparity_ascii(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int version = 0;
  fs >> magic >> version;
  if (!fs || magic != "nautilus_pfm" || version != 1)
    throw ParseError("bad float-map header", 1);
  int cols = 0, rows = 0;
  fs >> cols >> rows;
  CameraIntrinsics intr;
  double baseline = 0;
  fs >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.port_distance >>
      intr.n_ratio >> baseline;
  if (!fs || cols <= 0 || rows <= 0)
    throw ParseError("bad float-map dimensions", 2);
  intr.width = cols;
  intr.height = rows;
  DisparityImage img(intr, baseline);
  for (int v = 0; v < rows; ++v)
    for (int u = 0; u < cols; ++u) {
      std::string tok;
      fs >> tok;
      if (!fs) throw ParseError("truncated float-map data", 4 + v);
      img.at(v, u) = parse_double(tok, 4 + v);
    }
  return img;
}

}  // namespace nautilus
