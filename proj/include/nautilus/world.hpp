#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nautilus/geometry.hpp"

namespace nautilus {

struct Triangle {
  Vec3 a, b, c;
};

/// Triangle soup loaded from a Wavefront OBJ file. Rays treat it exactly
/// like the box solids.
struct TriMesh {
  std::vector<Triangle> triangles;
  std::string source_path;  // kept so world files round-trip
};

/// Ground-truth environment: box solids (plus optional meshes) inside the
/// permitted volume, with an optical range limit.
struct World {
  std::vector<Aabb> boxes;
  std::vector<TriMesh> meshes;
  Aabb bounds;
  double water_visibility = 2.5;

  bool point_in_solid(const Vec3& p) const;
};

struct RayHit {
  double distance = 0.0;
  Vec3 point{0.0, 0.0, 0.0};
};

/// Nearest solid intersection along origin + t*dir, t in [0, max_range].
/// Throws std::invalid_argument when dir is not unit length.
std::optional<RayHit> ray_cast(const World& world, const Vec3& origin,
                               const Vec3& dir, double max_range);

/// Generic ray-grid range sensor. rows x cols rays spanning h_fov x v_fov,
/// z forward, x right, y down in the sensor frame.
struct DepthSensorSpec {
  double h_fov = deg2rad(90.0);
  double v_fov = deg2rad(60.0);
  double range_max = 2.5;
  int rows = 48;
  int cols = 64;
  Pose mount;  // sensor pose in the body frame
};

/// Sensor-frame unit ray direction for one pixel of the grid.
Vec3 sensor_ray_direction(const DepthSensorSpec& spec, int row, int col);

/// Per-pixel range image. Misses are NaN.
struct DepthImage {
  int rows = 0;
  int cols = 0;
  std::vector<double> range;

  DepthImage() = default;
  DepthImage(int r, int c)
      : rows(r), cols(c), range(static_cast<size_t>(r) * c,
                                std::numeric_limits<double>::quiet_NaN()) {}

  double& at(int r, int c) { return range[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return range[static_cast<size_t>(r) * cols + c]; }
  bool valid(int r, int c) const { return std::isfinite(at(r, c)); }
};

struct DepthScan {
  DepthImage image;
  PointCloud cloud;  // sensor frame, one point per valid pixel
};

/// Casts the full ray grid from sensor_pose (world frame). Range is clamped
/// to min(spec.range_max, world.water_visibility).
DepthScan render_depth(const World& world, const DepthSensorSpec& spec,
                       const Pose& sensor_pose);

/// Integrates constant body-frame velocity and yaw rate over dt. Roll and
/// pitch stay zero; the closed-form SE(2) arc is used for x/y.
Pose step_robot(const Pose& pose, const Vec3& body_velocity, double body_yaw_rate,
                double dt);

// World file I/O. Text format, bit-exact round trip.
World load_world(const std::string& path);
void save_world(const World& world, const std::string& path);

TriMesh load_obj_mesh(const std::string& path);

/// Reference 20x20x3 tank with internal structures. +z points down; the
/// water surface is z = 0 and the floor sits at z = 3.
World make_tank_world();

/// Small 8x8x2.5 basin with a single box, for fast scenario tests.
World make_box_world();

}  // namespace nautilus
