#include "nautilus/voxel_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace nautilus {

VoxelGrid::VoxelGrid(const Vec3& origin, double voxel_size,
                     const Eigen::Vector3i& dims, OccupancyParams params)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims), params_(params) {
  if (voxel_size <= 0.0) throw std::invalid_argument("voxel_size must be positive");
  if (dims.minCoeff() <= 0) throw std::invalid_argument("grid dims must be positive");
  log_odds_.assign(static_cast<size_t>(dims.x()) * dims.y() * dims.z(), 0.0f);
}

VoxelGrid VoxelGrid::for_bounds(const Aabb& bounds, double voxel_size,
                                OccupancyParams params) {
  Eigen::Vector3i dims;
  for (int i = 0; i < 3; ++i) {
    dims[i] = std::max<int>(1, static_cast<int>(std::lround(
                                   (bounds.max[i] - bounds.min[i]) / voxel_size)));
  }
  return VoxelGrid(bounds.min, voxel_size, dims, params);
}

void VoxelGrid::walk_ray(const Vec3& a, const Vec3& b,
                         const std::function<bool(const Eigen::Vector3i&)>& visit) const {
  const Vec3 diff = b - a;
  const double len = diff.norm();
  if (len < 1e-15) {
    const auto idx = index_of(a);
    if (in_grid(idx)) visit(idx);
    return;
  }
  const Vec3 dir = diff / len;
  const Aabb grid_box{origin_, origin_ + voxel_size_ * dims_.cast<double>()};
  const auto iv = grid_box.ray_interval(a, dir);
  if (!iv) return;
  const double t0 = std::max(iv->first, 0.0);
  const double t1 = std::min(iv->second, len);
  if (t0 > t1) return;

  Eigen::Vector3i idx = index_of(a + t0 * dir);
  for (int i = 0; i < 3; ++i) idx[i] = std::clamp(idx[i], 0, dims_[i] - 1);

  Eigen::Vector3i step;
  Vec3 t_max, t_delta;
  for (int i = 0; i < 3; ++i) {
    if (dir[i] > 1e-15) {
      step[i] = 1;
      t_max[i] = ((idx[i] + 1) * voxel_size_ + origin_[i] - a[i]) / dir[i];
      t_delta[i] = voxel_size_ / dir[i];
    } else if (dir[i] < -1e-15) {
      step[i] = -1;
      t_max[i] = (idx[i] * voxel_size_ + origin_[i] - a[i]) / dir[i];
      t_delta[i] = -voxel_size_ / dir[i];
    } else {
      step[i] = 0;
      t_max[i] = std::numeric_limits<double>::infinity();
      t_delta[i] = std::numeric_limits<double>::infinity();
    }
  }

  while (true) {
    if (!visit(idx)) return;
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    if (t_max[ax] > t1) return;
    idx[ax] += step[ax];
    if (idx[ax] < 0 || idx[ax] >= dims_[ax]) return;
    t_max[ax] += t_delta[ax];
  }
}

namespace {

// Reusable generation-stamped scratch, one slot per voxel.
struct StampBuffer {
  std::vector<uint32_t> stamp;
  uint32_t gen = 0;

  void begin(size_t n) {
    if (stamp.size() != n) {
      stamp.assign(n, 0);
      gen = 0;
    }
    if (++gen == 0) {
      std::fill(stamp.begin(), stamp.end(), 0u);
      gen = 1;
    }
  }
  bool mark(int64_t i) {  // true the first time
    if (stamp[i] == gen) return false;
    stamp[i] = gen;
    return true;
  }
  bool marked(int64_t i) const { return stamp[i] == gen; }
};

thread_local StampBuffer t_occ_stamp;
thread_local StampBuffer t_free_stamp;
thread_local StampBuffer t_seen_stamp;

}  // namespace

void VoxelGrid::integrate_cloud(const PointCloud& cloud_sensor,
                                const Pose& sensor_pose, double max_range) {
  if (max_range <= 0.0) throw std::invalid_argument("max_range must be positive");
  t_occ_stamp.begin(log_odds_.size());
  t_free_stamp.begin(log_odds_.size());

  std::vector<int64_t> occ_list;
  std::vector<int64_t> free_list;
  const Vec3 origin_w = sensor_pose.translation;

  // endpoints first, so free updates cannot touch them this scan
  std::vector<Vec3> endpoints;
  endpoints.reserve(cloud_sensor.size());
  for (const auto& p : cloud_sensor) {
    if (!p.allFinite() || p.norm() > max_range) continue;
    const Vec3 pw = sensor_pose.apply(p);
    endpoints.push_back(pw);
    // returns landing exactly on a voxel face belong to the cell the ray was
    // entering; nudge along the ray so floor() picks that cell
    Vec3 probe = pw;
    const Vec3 diff = pw - origin_w;
    if (diff.norm() > 1e-12) probe += 1e-9 * diff.normalized();
    const auto idx = index_of(probe);
    if (in_grid(idx)) {
      const int64_t lin = linear(idx);
      if (t_occ_stamp.mark(lin)) occ_list.push_back(lin);
    }
  }
  for (const auto& pw : endpoints) {
    walk_ray(origin_w, pw, [&](const Eigen::Vector3i& idx) {
      const int64_t lin = linear(idx);
      if (!t_occ_stamp.marked(lin) && t_free_stamp.mark(lin)) free_list.push_back(lin);
      return true;
    });
  }

  const float occ_step = static_cast<float>(params_.l_hit_occ);
  const float free_step = static_cast<float>(params_.l_hit_free);
  const float l_max = static_cast<float>(params_.l_max);
  for (int64_t lin : occ_list) {
    log_odds_[lin] = std::min(log_odds_[lin] + occ_step, l_max);
  }
  for (int64_t lin : free_list) {
    log_odds_[lin] = std::max(log_odds_[lin] - free_step, -l_max);
  }
}

namespace {

struct NearestHit {
  double distance;
  Eigen::Vector3i index;
  bool found;
};

}  // namespace

static NearestHit nearest_occupied_impl(const VoxelGrid& g, const Vec3& point,
                                        double d_max) {
  if (!g.in_grid(point)) {
    throw std::invalid_argument("distance query point outside grid");
  }
  const double vs = g.voxel_size();
  const Eigen::Vector3i c = g.index_of(point);
  const auto& dims = g.dims();

  NearestHit best{std::numeric_limits<double>::infinity(), {}, false};
  const int r_hard = static_cast<int>(std::ceil(d_max / vs)) + 1;
  for (int r = 0; ; ++r) {
    // any voxel in Chebyshev shell r is at least (r - 0.5) * vs away
    if (r > r_hard || (r - 0.5) * vs > std::min(best.distance, d_max)) break;
    for (int dz = -r; dz <= r; ++dz) {
      const int z = c.z() + dz;
      if (z < 0 || z >= dims.z()) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int y = c.y() + dy;
        if (y < 0 || y >= dims.y()) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const int x = c.x() + dx;
          if (x < 0 || x >= dims.x()) continue;
          const Eigen::Vector3i idx(x, y, z);
          if (g.state(idx) != VoxelState::kOccupied) continue;
          const double d = (g.center_of(idx) - point).norm();
          if (d < best.distance) best = {d, idx, true};
        }
      }
    }
  }
  return best;
}

double VoxelGrid::distance_to_occupied(const Vec3& point, double d_max) const {
  const auto hit = nearest_occupied_impl(*this, point, d_max);
  return std::min(hit.distance, d_max);
}

std::optional<Eigen::Vector3i> VoxelGrid::nearest_occupied(const Vec3& point,
                                                           double d_max) const {
  const auto hit = nearest_occupied_impl(*this, point, d_max);
  if (!hit.found || hit.distance > d_max) return std::nullopt;
  return hit.index;
}

std::vector<SurfaceVoxel> VoxelGrid::extract_surface() const {
  static const Eigen::Vector3i kNeighbors[6] = {
      {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<SurfaceVoxel> out;
  for (int z = 0; z < dims_.z(); ++z) {
    for (int y = 0; y < dims_.y(); ++y) {
      for (int x = 0; x < dims_.x(); ++x) {
        const Eigen::Vector3i idx(x, y, z);
        if (state(idx) != VoxelState::kOccupied) continue;
        Vec3 normal = Vec3::Zero();
        int free_neighbors = 0;
        for (const auto& n : kNeighbors) {
          const Eigen::Vector3i nb = idx + n;
          if (!in_grid(nb) || state(nb) != VoxelState::kFree) continue;
          ++free_neighbors;
          normal += n.cast<double>();
        }
        if (free_neighbors == 0) continue;
        SurfaceVoxel sv;
        sv.index = idx;
        sv.center = center_of(idx);
        sv.normal_valid = normal.norm() > 1e-12;
        sv.normal = sv.normal_valid ? Vec3(normal.normalized()) : Vec3::Zero();
        out.push_back(sv);
      }
    }
  }
  return out;
}

int VoxelGrid::unknown_volume_visible(const DepthSensorSpec& spec,
                                      const Pose& sensor_pose) const {
  t_seen_stamp.begin(log_odds_.size());
  int count = 0;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const Vec3 dir = sensor_pose.rotate(sensor_ray_direction(spec, r, c));
      const Vec3 end = sensor_pose.translation + spec.range_max * dir;
      walk_ray(sensor_pose.translation, end, [&](const Eigen::Vector3i& idx) {
        const auto s = state(idx);
        if (s == VoxelState::kOccupied) return false;
        if (s == VoxelState::kUnknown && t_seen_stamp.mark(linear(idx))) ++count;
        return true;
      });
    }
  }
  return count;
}

MapCounts VoxelGrid::counts() const {
  MapCounts c;
  for (float l : log_odds_) {
    if (l >= params_.l_occ) {
      ++c.occupied;
    } else if (l <= params_.l_free) {
      ++c.free;
    } else {
      ++c.unknown;
    }
  }
  return c;
}

void VoxelGrid::save_ply(const std::string& path) const {
  std::vector<std::pair<Vec3, bool>> known;
  for (int z = 0; z < dims_.z(); ++z) {
    for (int y = 0; y < dims_.y(); ++y) {
      for (int x = 0; x < dims_.x(); ++x) {
        const Eigen::Vector3i idx(x, y, z);
        const auto s = state(idx);
        if (s == VoxelState::kUnknown) continue;
        known.emplace_back(center_of(idx), s == VoxelState::kOccupied);
      }
    }
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write ply: " + path);
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << known.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "property uchar occupied\nend_header\n";
  char buf[96];
  for (const auto& [p, occ] : known) {
    std::snprintf(buf, sizeof(buf), "%.6g %.6g %.6g %d\n", p.x(), p.y(), p.z(),
                  occ ? 1 : 0);
    os << buf;
  }
}

namespace {

void write_le_bytes(std::ostream& os, const void* data, size_t n) {
  // on-disk layout is little-endian; this build targets LE hosts
  static_assert(std::endian::native == std::endian::little);
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& is, void* data, size_t n) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("truncated map dump");
}

}  // namespace

void VoxelGrid::save_binary(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write map dump: " + path);
  os.write("NAUTMAP1", 8);
  double header[4] = {origin_.x(), origin_.y(), origin_.z(), voxel_size_};
  write_le_bytes(os, header, sizeof(header));
  int32_t dims[3] = {dims_.x(), dims_.y(), dims_.z()};
  write_le_bytes(os, dims, sizeof(dims));
  write_le_bytes(os, log_odds_.data(), log_odds_.size() * sizeof(float));
}

VoxelGrid VoxelGrid::load_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read map dump: " + path);
  char magic[8];
  read_bytes(is, magic, 8);
  if (std::memcmp(magic, "NAUTMAP1", 8) != 0) {
    throw std::runtime_error("not a map dump: " + path);
  }
  double header[4];
  read_bytes(is, header, sizeof(header));
  int32_t dims[3];
  read_bytes(is, dims, sizeof(dims));
  VoxelGrid grid(Vec3(header[0], header[1], header[2]), header[3],
                 Eigen::Vector3i(dims[0], dims[1], dims[2]));
  read_bytes(is, grid.log_odds_.data(), grid.log_odds_.size() * sizeof(float));
  return grid;
}

}  // namespace nautilus
