#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace nautilus {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using PointCloud = std::vector<Vec3>;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Rigid transform, world-from-local unless stated otherwise.
struct Pose {
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  static Pose identity() { return {}; }

  static Pose from_xyz_yaw(double x, double y, double z, double yaw) {
    Pose p;
    p.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    p.translation = Vec3(x, y, z);
    return p;
  }

  Vec3 apply(const Vec3& local) const { return rotation * local + translation; }
  Vec3 rotate(const Vec3& local) const { return rotation * local; }

  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation = (rotation * other.rotation).normalized();
    out.translation = rotation * other.translation + translation;
    return out;
  }

  Pose inverse() const {
    Pose out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
  }

  double yaw() const {
    const Quat& q = rotation;
    return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()),
                      1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
  }

  bool unit_rotation(double tol = 1e-9) const {
    return std::abs(rotation.norm() - 1.0) <= tol;
  }
};

inline Pose operator*(const Pose& a, const Pose& b) { return a.compose(b); }

/// Camera-style pose: local z along `forward`, local y as close to
/// `down_hint` as possible, local x (right) completing the frame.
inline Pose look_at_pose(const Vec3& position, const Vec3& forward,
                         const Vec3& down_hint = Vec3::UnitZ()) {
  const Vec3 z = forward.normalized();
  Vec3 x = down_hint.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Eigen::Matrix3d rot;
  rot.col(0) = x;
  rot.col(1) = y;
  rot.col(2) = z;
  Pose p;
  p.rotation = Quat(rot).normalized();
  p.translation = position;
  return p;
}

struct Ray {
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 dir{0.0, 0.0, 1.0};  // unit
};

/// Axis-aligned box, min <= max on every axis.
struct Aabb {
  Vec3 min{0.0, 0.0, 0.0};
  Vec3 max{0.0, 0.0, 0.0};

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }

  bool contains(const Vec3& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
           p.y() <= max.y() && p.z() >= min.z() && p.z() <= max.z();
  }

  bool overlaps(const Aabb& o) const {
    return min.x() <= o.max.x() && max.x() >= o.min.x() && min.y() <= o.max.y() &&
           max.y() >= o.min.y() && min.z() <= o.max.z() && max.z() >= o.min.z();
  }

  /// True when this box lies entirely inside `o`.
  bool inside(const Aabb& o) const {
    return min.x() >= o.min.x() && max.x() <= o.max.x() && min.y() >= o.min.y() &&
           max.y() <= o.max.y() && min.z() >= o.min.z() && max.z() <= o.max.z();
  }

  Vec3 clamp(const Vec3& p) const {
    return Vec3(std::clamp(p.x(), min.x(), max.x()),
                std::clamp(p.y(), min.y(), max.y()),
                std::clamp(p.z(), min.z(), max.z()));
  }

  double distance_to(const Vec3& p) const {
    return (p - clamp(p)).norm();
  }

  /// Slab test. Returns the parameter interval [t_enter, t_exit] of the ray
  /// origin + t*dir inside the box, or nullopt when the ray misses.
  std::optional<std::pair<double, double>> ray_interval(const Vec3& origin,
                                                        const Vec3& dir) const {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
      if (std::abs(dir[i]) < 1e-15) {
        if (origin[i] < min[i] || origin[i] > max[i]) return std::nullopt;
        continue;
      }
      double ta = (min[i] - origin[i]) / dir[i];
      double tb = (max[i] - origin[i]) / dir[i];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
  }
};

}  // namespace nautilus
