#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nautilus/geometry.hpp"
#include "nautilus/voxel_map.hpp"

namespace nautilus {

/// Pinhole behind a flat refractive port. The port is the plane
/// z = port_distance in the camera frame (z = optical axis); n_ratio is the
/// external over internal refractive index, so water housings have
/// n_ratio > 1 and the projection takes the index as an explicit input.
struct CameraIntrinsics {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double port_distance = 0.0;
  double n_ratio = 1.0;
};

struct RigCamera {
  CameraIntrinsics intrinsics;
  Pose extrinsic;  // camera pose in the body frame
};

/// Multi-camera arrangement: vio_set drives FOV-retention queries, the
/// inspection camera drives viewpoint coverage.
struct CameraRig {
  std::vector<RigCamera> cameras;
  std::vector<int> vio_set;
  int inspection_index = 0;
};

/// Snell refraction of a unit direction at a surface with unit `normal` on
/// the incident side (incident·normal < 0); sin(out) = sin(in) / n_ratio.
/// Throws std::domain_error on total internal reflection (needs n_ratio < 1).
Vec3 refract_ray(const Vec3& incident, const Vec3& normal, double n_ratio);

/// Camera-frame point to pixel through the flat port. Exact pinhole when
/// n_ratio = 1; otherwise solved by bracketed bisection on the port-plane
/// radius (tolerance 1e-10 m). None when the pixel leaves the image or the
/// point lies outside the refraction cone. Throws when z <= port_distance.
std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intr,
                                       const Vec3& point_cam);

/// Pixel to the refracted ray in the external medium, camera frame. The ray
/// origin sits on the port plane (at the pinhole when port_distance = 0).
Ray back_project(const CameraIntrinsics& intr, const Eigen::Vector2d& pixel);

/// Fraction of a subsampled ray grid over the vio_set cameras that hits an
/// occupied voxel within max_range. Rays are refraction-aware.
double fov_occupied_fraction(const CameraRig& rig, const Pose& body_pose,
                             const VoxelGrid& map, double max_range);

/// Diagnostic: golden-section fit of n_ratio in [1.0, 1.6] from known
/// point/pixel correspondences (camera frame), minimizing squared pixel error.
double fit_n_ratio(CameraIntrinsics intr,
                   const std::vector<std::pair<Vec3, Eigen::Vector2d>>& corr);

// Rig calibration file I/O. Text format, bit-exact round trip.
CameraRig load_rig(const std::string& path);
void save_rig(const CameraRig& rig, const std::string& path);

/// Forward stereo pair in a flat-port housing; camera 0 inspects.
CameraRig make_default_rig();

}  // namespace nautilus
