#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nautilus/geometry.hpp"
#include "nautilus/refractive_camera.hpp"
#include "nautilus/voxel_map.hpp"
#include "nautilus/world.hpp"

namespace nautilus {

/// The roadmap cannot serve its caller: no traversable edge leaves the root.
class PlannerStuck : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RoadmapVertex {
  Pose pose;
  double gain = 0.0;       // unknown-volume count visible from this pose
  double path_cost = std::numeric_limits<double>::infinity();
  int predecessor = -1;
};

/// Undirected roadmap rooted at vertex 0.
struct RoadmapGraph {
  std::vector<RoadmapVertex> vertices;
  std::vector<std::vector<std::pair<int, double>>> adjacency;  // (vertex, length)

  void add_edge(int a, int b);
  /// Unique edges as (i, j, length) with i < j, sorted.
  std::vector<std::tuple<int, int, double>> edge_list() const;
};

struct ExplorationConfig {
  Vec3 local_half_extents{5.0, 5.0, 1.5};
  int n_samples = 400;
  double d_obs = 2.5;
  double eta = 0.25;
  double robot_radius = 0.45;
  double lambda = 0.2;    // per-metre gain discount
  double fov_range = 2.0; // range for the FOV-occupancy retention check
  int k_neighbors = 8;
};

/// True iff every voxel intersecting the sphere is mapped free (unknown or
/// occupied voxels, or any part outside the grid, fail).
bool sphere_in_free_space(const VoxelGrid& map, const Vec3& center, double radius);

/// True iff the swept sphere along [a, b], sampled every voxel_size/2, stays
/// in mapped free space.
bool is_edge_free(const VoxelGrid& map, const Vec3& a, const Vec3& b,
                  double robot_radius);

/// Uniform samples inside the local box around `root` clipped to `bounds`,
/// retained when (a) the robot sphere fits in free space, (b) the nearest
/// occupied voxel is closer than d_obs, and (c) the camera-rig FOV occupancy
/// at a yaw facing that voxel reaches eta. Retained poses carry that yaw.
std::vector<Pose> sample_vertices(const VoxelGrid& map, const CameraRig& rig,
                                  const Pose& root, const ExplorationConfig& cfg,
                                  const Aabb& bounds, std::mt19937& rng);

/// k-nearest-neighbour roadmap over root + samples with collision-checked
/// edges; vertices unreachable from the root are pruned (root stays index 0).
/// Throws PlannerStuck when no sample survives connected to the root.
RoadmapGraph build_graph(const std::vector<Pose>& samples, const Pose& root,
                         const VoxelGrid& map, int k_neighbors,
                         double robot_radius);

/// Exact single-source shortest paths from vertex `root`; fills path_cost and
/// predecessor on every vertex.
void shortest_paths(RoadmapGraph& graph, int root = 0);

struct PathSelection {
  std::vector<int> vertex_order;  // root ... terminal along the shortest-path tree
  int terminal = -1;
  double score = 0.0;
};

/// Scores every root-to-vertex shortest path as sum over its vertices of
/// gain * exp(-lambda * path_cost(vertex)) using the gains already stored in
/// the graph. Ties break toward smaller terminal path_cost, then smaller
/// terminal index. Returns nullopt iff every vertex gain is zero
/// (exploration complete).
std::optional<PathSelection> select_best_path_from_gains(const RoadmapGraph& graph,
                                                         double lambda);

/// Fills vertex gains with unknown_volume_visible at each pose, runs
/// shortest_paths, and delegates to select_best_path_from_gains.
std::optional<PathSelection> select_best_path(RoadmapGraph& graph,
                                              const VoxelGrid& map,
                                              const DepthSensorSpec& spec,
                                              const ExplorationConfig& cfg);

/// Edge-list text dump: header line, then one "i j length" line per edge.
void save_edge_list(const RoadmapGraph& graph, const std::string& path);

}  // namespace nautilus
