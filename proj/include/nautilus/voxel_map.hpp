#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nautilus/geometry.hpp"
#include "nautilus/world.hpp"

namespace nautilus {

enum class VoxelState : uint8_t { kUnknown, kFree, kOccupied };

struct OccupancyParams {
  double l_hit_occ = 0.85;
  double l_hit_free = 0.4;
  double l_occ = 1.0;
  double l_free = -1.0;
  double l_max = 3.5;
};

struct SurfaceVoxel {
  Eigen::Vector3i index;
  Vec3 center;
  Vec3 normal;        // zero when normal_valid is false
  bool normal_valid;  // false for the zero-sum neighbor case
};

struct MapCounts {
  int64_t unknown = 0;
  int64_t free = 0;
  int64_t occupied = 0;
};

/// Dense log-odds occupancy grid. One writer (integrate_cloud); planners
/// work on copies taken via snapshot().
class VoxelGrid {
 public:
  VoxelGrid(const Vec3& origin, double voxel_size, const Eigen::Vector3i& dims,
            OccupancyParams params = {});

  /// Grid covering `bounds`, dims rounded to the nearest voxel count.
  static VoxelGrid for_bounds(const Aabb& bounds, double voxel_size,
                              OccupancyParams params = {});

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const Eigen::Vector3i& dims() const { return dims_; }
  const OccupancyParams& params() const { return params_; }
  int64_t num_voxels() const { return log_odds_.size(); }

  bool in_grid(const Eigen::Vector3i& idx) const {
    return idx.x() >= 0 && idx.x() < dims_.x() && idx.y() >= 0 &&
           idx.y() < dims_.y() && idx.z() >= 0 && idx.z() < dims_.z();
  }
  bool in_grid(const Vec3& p) const { return in_grid(index_of(p)); }

  Eigen::Vector3i index_of(const Vec3& p) const {
    return Eigen::Vector3i(
        static_cast<int>(std::floor((p.x() - origin_.x()) / voxel_size_)),
        static_cast<int>(std::floor((p.y() - origin_.y()) / voxel_size_)),
        static_cast<int>(std::floor((p.z() - origin_.z()) / voxel_size_)));
  }
  Vec3 center_of(const Eigen::Vector3i& idx) const {
    return origin_ + voxel_size_ * (idx.cast<double>() + Vec3::Constant(0.5));
  }
  int64_t linear(const Eigen::Vector3i& idx) const {
    return (static_cast<int64_t>(idx.z()) * dims_.y() + idx.y()) * dims_.x() + idx.x();
  }

  float log_odds(const Eigen::Vector3i& idx) const { return log_odds_[linear(idx)]; }
  /// Direct write, for map construction in tests and imports.
  void set_log_odds(const Eigen::Vector3i& idx, float l) { log_odds_[linear(idx)] = l; }
  VoxelState state(const Eigen::Vector3i& idx) const {
    const float l = log_odds_[linear(idx)];
    if (l >= params_.l_occ) return VoxelState::kOccupied;
    if (l <= params_.l_free) return VoxelState::kFree;
    return VoxelState::kUnknown;
  }
  /// Out-of-grid points report unknown.
  VoxelState state_at(const Vec3& p) const {
    const auto idx = index_of(p);
    return in_grid(idx) ? state(idx) : VoxelState::kUnknown;
  }

  /// Ray-cast integration of a sensor-frame cloud. Per scan, each traversed
  /// voxel takes one free update and each endpoint voxel one occupied
  /// update; endpoint updates win over free updates within the same scan.
  void integrate_cloud(const PointCloud& cloud_sensor, const Pose& sensor_pose,
                       double max_range);

  /// Euclidean distance from `point` to the nearest occupied voxel center,
  /// saturated at d_max.
  double distance_to_occupied(const Vec3& point, double d_max) const;

  /// Same search, also reporting which voxel realized the distance.
  std::optional<Eigen::Vector3i> nearest_occupied(const Vec3& point,
                                                  double d_max) const;

  /// Occupied voxels with at least one free 6-neighbor.
  std::vector<SurfaceVoxel> extract_surface() const;

  /// VolumeGain: distinct unknown voxels touched by the sensor ray grid.
  /// Rays stop at occupied voxels, the range limit, or the grid boundary.
  int unknown_volume_visible(const DepthSensorSpec& spec, const Pose& sensor_pose) const;

  /// Walks voxels pierced by the segment [a, b]. The visitor returns false
  /// to stop the walk early.
  void walk_ray(const Vec3& a, const Vec3& b,
                const std::function<bool(const Eigen::Vector3i&)>& visit) const;

  MapCounts counts() const;
  VoxelGrid snapshot() const { return *this; }

  /// Known voxel centers as ASCII PLY with a uchar `occupied` property.
  void save_ply(const std::string& path) const;
  /// Binary dump: header (origin, voxel_size, dims) + little-endian float32
  /// log odds.
  void save_binary(const std::string& path) const;
  static VoxelGrid load_binary(const std::string& path);

 private:
  Vec3 origin_;
  double voxel_size_;
  Eigen::Vector3i dims_;
  OccupancyParams params_;
  std::vector<float> log_odds_;
};

}  // namespace nautilus
