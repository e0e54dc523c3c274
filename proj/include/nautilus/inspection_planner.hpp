#pragma once

#include <random>
#include <string>
#include <vector>

#include "nautilus/exploration_planner.hpp"
#include "nautilus/geometry.hpp"
#include "nautilus/refractive_camera.hpp"
#include "nautilus/voxel_map.hpp"

namespace nautilus {

/// Candidate inspection pose plus the surface voxels it sees. Voxel ids are
/// indices into the extract_surface() list the planner was built from.
struct Viewpoint {
  Pose pose;
  std::vector<int> covered;  // sorted surface-voxel ids
};

struct InspectionConfig {
  double r_max = 1.5;        // maximum viewing distance
  double grid_pitch = 0.5;   // viewpoint lattice pitch (<= r_max)
  double theta_inc_max = deg2rad(70.0);  // incidence limit vs. surface normal
  double robot_radius = 0.45;
  int k_neighbors = 8;          // edges nominated per vertex
  int n_bridge_attempts = 200;  // repair samples per disconnected component
};

/// Lattice of candidate poses offset r_max along surface normals, yaw facing
/// the surface, deduplicated per lattice cell and facing axis, clamped into
/// `bounds`. Covered sets come from refraction-aware checks through the
/// inspection camera: range <= r_max, projects inside the image, incidence
/// within theta_inc_max, and an unobstructed map ray. Candidates that
/// collide or cover nothing are dropped. Throws std::runtime_error when no
/// candidate survives.
std::vector<Viewpoint> generate_viewpoints(const VoxelGrid& map,
                                           const CameraRig& rig,
                                           const InspectionConfig& cfg,
                                           const Aabb& bounds);

/// Connectivity result: graph vertex 0 is the transit roadmap root; every
/// input viewpoint maps to a graph vertex or -1 when dropped as unreachable.
struct InspectionGraph {
  RoadmapGraph graph;
  std::vector<int> viewpoint_vertex;  // per input viewpoint, -1 if dropped
  std::vector<int> dropped;           // input viewpoint indices left unreachable
  std::vector<std::string> warnings;
};

/// Adds the viewpoints to a copy of the transit roadmap (edges re-validated
/// on this map snapshot) with k-nearest collision-free edges. Components cut
/// off from vertex 0 are repaired by rejection-sampling bridge vertices in
/// free space (up to n_bridge_attempts per component); components that stay
/// unreachable are dropped with a warning. Unreachable vertices are pruned.
InspectionGraph connect_viewpoints(const std::vector<Viewpoint>& viewpoints,
                                   const VoxelGrid& map,
                                   const RoadmapGraph& global_roadmap,
                                   const InspectionConfig& cfg,
                                   std::mt19937& rng);

struct CoverSelection {
  std::vector<int> selected;     // viewpoint indices, greedy pick order
  std::vector<int> uncoverable;  // surface-voxel ids no viewpoint sees
  std::vector<int> assignment;   // per surface voxel: covering selected viewpoint, -1
};

/// Greedy set cover over the surface universe {0..n_surface-1}: repeatedly
/// take the viewpoint seeing the most still-uncovered voxels (ties: smaller
/// index) until only uncoverable voxels remain. Each covered voxel is
/// assigned to the viewpoint whose pick first covered it.
CoverSelection select_cover(const std::vector<Viewpoint>& viewpoints,
                            int n_surface);

struct Tour {
  std::vector<int> visit_order;  // selected graph vertices in visit order
  std::vector<int> vertex_path;  // expanded start -> ... vertex chain
  double length = 0.0;           // geodesic length after 2-opt
  double nn_length = 0.0;        // nearest-neighbour length before 2-opt
};

/// Open inspection tour over the selected graph vertices: geodesic cost
/// matrix by exact shortest paths, nearest-neighbour order from the vertex
/// closest to `start`, then 2-opt until no reversal improves. Throws
/// std::runtime_error when a selected vertex is unreachable from the start.
Tour plan_tour(const std::vector<int>& selected_vertices,
               const RoadmapGraph& graph, const Pose& start);

struct CoverageReport {
  int surface_total = 0;
  int covered = 0;
  int uncoverable = 0;
  double tour_length = 0.0;
  // (viewpoint index, covered-voxel count) in selection order.
  std::vector<std::pair<int, int>> per_viewpoint;
};

/// Structured text dump of the coverage totals, per-viewpoint counts and
/// tour length.
void save_coverage_report(const CoverageReport& report, const std::string& path);

}  // namespace nautilus
