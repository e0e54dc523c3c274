#include "nautilus/inspection_planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "nautilus/textio.hpp"

namespace nautilus {

namespace {

void validate(const InspectionConfig& cfg) {
  if (cfg.r_max <= 0.0 || cfg.grid_pitch <= 0.0 || cfg.theta_inc_max <= 0.0 ||
      cfg.robot_radius <= 0.0)
    throw std::invalid_argument("inspection config values must be positive");
  if (cfg.grid_pitch > cfg.r_max)
    throw std::invalid_argument("grid_pitch must not exceed r_max");
}

// Dominant facing axis (0..5) used to keep corner candidates from opposite
// walls in separate clusters.
int axis_code(const Vec3& n) {
  int axis = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(n[i]) > std::abs(n[axis])) axis = i;
  return axis * 2 + (n[axis] < 0.0 ? 1 : 0);
}

std::vector<int> covered_set(const VoxelGrid& map,
                             const std::vector<SurfaceVoxel>& surface,
                             const RigCamera& cam, const Pose& body_pose,
                             const InspectionConfig& cfg) {
  const Pose world_from_cam = body_pose * cam.extrinsic;
  const Pose cam_from_world = world_from_cam.inverse();
  const Vec3 cam_pos = world_from_cam.translation;
  const double cos_inc_max = std::cos(cfg.theta_inc_max);

  std::vector<int> out;
  for (int sid = 0; sid < static_cast<int>(surface.size()); ++sid) {
    const auto& s = surface[static_cast<size_t>(sid)];
    if (!s.normal_valid) continue;
    const Vec3 to_voxel = s.center - cam_pos;
    const double dist = to_voxel.norm();
    if (dist > cfg.r_max || dist < 1e-9) continue;
    if (s.normal.dot(-to_voxel) / dist < cos_inc_max) continue;
    const Vec3 p_cam = cam_from_world.apply(s.center);
    if (p_cam.z() <= cam.intrinsics.port_distance + 1e-9) continue;
    if (!project(cam.intrinsics, p_cam)) continue;

    bool blocked = false;
    map.walk_ray(cam_pos, s.center, [&](const Eigen::Vector3i& idx) {
      if (idx == s.index) return false;  // reached the target voxel
      if (map.state(idx) != VoxelState::kFree) {
        blocked = true;
        return false;
      }
      return true;
    });
    if (!blocked) out.push_back(sid);
  }
  return out;
}

}  // namespace

std::vector<Viewpoint> generate_viewpoints(const VoxelGrid& map,
                                           const CameraRig& rig,
                                           const InspectionConfig& cfg,
                                           const Aabb& bounds) {
  validate(cfg);
  const auto surface = map.extract_surface();
  const auto& cam = rig.cameras.at(static_cast<size_t>(rig.inspection_index));

  struct Cluster {
    Vec3 sum_pos = Vec3::Zero();
    Vec3 sum_dir = Vec3::Zero();
    int n = 0;
  };
  std::map<std::tuple<int, int, int, int>, Cluster> clusters;
  for (const auto& s : surface) {
    if (!s.normal_valid) continue;
    const Vec3 pos = s.center + cfg.r_max * s.normal;
    const std::tuple<int, int, int, int> key(
        static_cast<int>(std::floor(pos.x() / cfg.grid_pitch)),
        static_cast<int>(std::floor(pos.y() / cfg.grid_pitch)),
        static_cast<int>(std::floor(pos.z() / cfg.grid_pitch)), axis_code(s.normal));
    auto& c = clusters[key];
    c.sum_pos += pos;
    c.sum_dir -= s.normal;  // face back toward the generating surface
    ++c.n;
  }

  std::vector<Viewpoint> out;
  for (const auto& [key, c] : clusters) {
    const Vec3 pos = (c.sum_pos / c.n).cwiseMax(bounds.min).cwiseMin(bounds.max);
    const double yaw = c.sum_dir.head<2>().norm() < 1e-9
                           ? 0.0
                           : std::atan2(c.sum_dir.y(), c.sum_dir.x());
    Viewpoint vp;
    vp.pose = Pose::from_xyz_yaw(pos.x(), pos.y(), pos.z(), yaw);
    if (!sphere_in_free_space(map, pos, cfg.robot_radius)) continue;
    vp.covered = covered_set(map, surface, cam, vp.pose, cfg);
    if (vp.covered.empty()) continue;
    out.push_back(std::move(vp));
  }
  if (out.empty())
    throw std::runtime_error(
        "no feasible inspection viewpoints: mapped surfaces too confined for "
        "the viewing distance");
  return out;
}

namespace {

// k-nearest collision-free edges from vertex v into the current graph.
int nominate_edges(RoadmapGraph& g, int v, const VoxelGrid& map,
                   const InspectionConfig& cfg) {
  const int n = static_cast<int>(g.vertices.size());
  std::vector<std::pair<double, int>> order;
  for (int j = 0; j < n; ++j) {
    if (j == v) continue;
    order.emplace_back((g.vertices[static_cast<size_t>(v)].pose.translation -
                        g.vertices[static_cast<size_t>(j)].pose.translation)
                           .norm(),
                       j);
  }
  std::sort(order.begin(), order.end());
  const int kk = std::min<int>(cfg.k_neighbors, static_cast<int>(order.size()));
  int added = 0;
  for (int m = 0; m < kk; ++m) {
    const auto& [len, j] = order[static_cast<size_t>(m)];
    if (len < 1e-12) continue;
    bool dup = false;
    for (const auto& [w, l] : g.adjacency[static_cast<size_t>(v)])
      if (w == j) dup = true;
    if (dup) continue;
    if (is_edge_free(map, g.vertices[static_cast<size_t>(v)].pose.translation,
                     g.vertices[static_cast<size_t>(j)].pose.translation,
                     cfg.robot_radius)) {
      g.add_edge(v, j);
      ++added;
    }
  }
  return added;
}

std::vector<char> reachable_from_root(const RoadmapGraph& g) {
  std::vector<char> reach(g.vertices.size(), 0);
  std::vector<int> stack = {0};
  reach[0] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const auto& [w, len] : g.adjacency[static_cast<size_t>(v)])
      if (!reach[static_cast<size_t>(w)]) {
        reach[static_cast<size_t>(w)] = 1;
        stack.push_back(w);
      }
  }
  return reach;
}

}  // namespace

InspectionGraph connect_viewpoints(const std::vector<Viewpoint>& viewpoints,
                                   const VoxelGrid& map,
                                   const RoadmapGraph& global_roadmap,
                                   const InspectionConfig& cfg,
                                   std::mt19937& rng) {
  validate(cfg);
  if (global_roadmap.vertices.empty())
    throw std::invalid_argument("transit roadmap must contain the robot root");

  RoadmapGraph g;
  for (const auto& v : global_roadmap.vertices) g.vertices.push_back({v.pose});
  g.adjacency.assign(g.vertices.size(), {});
  // Transit edges hold only if they are still free on this map snapshot.
  for (const auto& [i, j, len] : global_roadmap.edge_list())
    if (len > 1e-12 &&
        is_edge_free(map, g.vertices[static_cast<size_t>(i)].pose.translation,
                     g.vertices[static_cast<size_t>(j)].pose.translation,
                     cfg.robot_radius))
      g.add_edge(i, j);

  const int n_transit = static_cast<int>(g.vertices.size());
  for (const auto& vp : viewpoints) {
    g.vertices.push_back({vp.pose});
    g.adjacency.emplace_back();
  }
  for (int v = n_transit; v < static_cast<int>(g.vertices.size()); ++v)
    nominate_edges(g, v, map, cfg);

  InspectionGraph out;

  // Bridge repair per disconnected viewpoint component, in vertex order.
  std::vector<char> reach = reachable_from_root(g);
  const Vec3 dom_lo = map.origin();
  const Vec3 dom_ext = map.voxel_size() * map.dims().cast<double>();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int rep = n_transit; rep < n_transit + static_cast<int>(viewpoints.size());
       ++rep) {
    if (reach[static_cast<size_t>(rep)]) continue;
    for (int attempt = 0; attempt < cfg.n_bridge_attempts; ++attempt) {
      Vec3 p;
      for (int ax = 0; ax < 3; ++ax) p[ax] = dom_lo[ax] + u01(rng) * dom_ext[ax];
      if (!sphere_in_free_space(map, p, cfg.robot_radius)) continue;
      g.vertices.push_back({Pose::from_xyz_yaw(p.x(), p.y(), p.z(), 0.0)});
      g.adjacency.emplace_back();
      const int b = static_cast<int>(g.vertices.size()) - 1;
      if (nominate_edges(g, b, map, cfg) == 0) {
        g.vertices.pop_back();
        g.adjacency.pop_back();
        continue;
      }
      reach = reachable_from_root(g);
      if (reach[static_cast<size_t>(rep)]) break;
    }
    if (!reach[static_cast<size_t>(rep)]) {
      const int vp_index = rep - n_transit;
      out.warnings.push_back("viewpoint " + std::to_string(vp_index) +
                             " unreachable from the robot component; dropped");
    }
  }

  // Prune everything unreachable, preserving order; root stays vertex 0.
  reach = reachable_from_root(g);
  const int n = static_cast<int>(g.vertices.size());
  std::vector<int> remap(static_cast<size_t>(n), -1);
  RoadmapGraph pruned;
  for (int i = 0; i < n; ++i) {
    if (!reach[static_cast<size_t>(i)]) continue;
    remap[static_cast<size_t>(i)] = static_cast<int>(pruned.vertices.size());
    pruned.vertices.push_back(g.vertices[static_cast<size_t>(i)]);
  }
  pruned.adjacency.assign(pruned.vertices.size(), {});
  for (int i = 0; i < n; ++i) {
    if (remap[static_cast<size_t>(i)] < 0) continue;
    for (const auto& [j, len] : g.adjacency[static_cast<size_t>(i)])
      pruned.adjacency[static_cast<size_t>(remap[static_cast<size_t>(i)])]
          .emplace_back(remap[static_cast<size_t>(j)], len);
  }

  out.graph = std::move(pruned);
  out.viewpoint_vertex.assign(viewpoints.size(), -1);
  for (int i = 0; i < static_cast<int>(viewpoints.size()); ++i) {
    const int mapped = remap[static_cast<size_t>(n_transit + i)];
    out.viewpoint_vertex[static_cast<size_t>(i)] = mapped;
    if (mapped < 0) out.dropped.push_back(i);
  }
  return out;
}

CoverSelection select_cover(const std::vector<Viewpoint>& viewpoints,
                            int n_surface) {
  if (n_surface < 0) throw std::invalid_argument("negative surface count");
  for (const auto& vp : viewpoints)
    for (const int s : vp.covered)
      if (s < 0 || s >= n_surface)
        throw std::invalid_argument("covered voxel id outside surface universe");

  CoverSelection out;
  out.assignment.assign(static_cast<size_t>(n_surface), -1);
  std::vector<char> covered(static_cast<size_t>(n_surface), 0);
  for (;;) {
    int best = -1, best_count = 0;
    for (int i = 0; i < static_cast<int>(viewpoints.size()); ++i) {
      int count = 0;
      for (const int s : viewpoints[static_cast<size_t>(i)].covered)
        if (!covered[static_cast<size_t>(s)]) ++count;
      if (count > best_count) {
        best_count = count;
        best = i;
      }
    }
    if (best < 0) break;  // nothing coverable remains
    out.selected.push_back(best);
    for (const int s : viewpoints[static_cast<size_t>(best)].covered)
      if (!covered[static_cast<size_t>(s)]) {
        covered[static_cast<size_t>(s)] = 1;
        out.assignment[static_cast<size_t>(s)] = best;
      }
  }
  for (int s = 0; s < n_surface; ++s)
    if (!covered[static_cast<size_t>(s)]) out.uncoverable.push_back(s);
  return out;
}

namespace {

struct Geodesics {
  std::vector<double> cost;
  std::vector<int> pred;
};

Geodesics geodesics_from(const RoadmapGraph& graph, int source) {
  RoadmapGraph scratch = graph;
  shortest_paths(scratch, source);
  Geodesics out;
  out.cost.reserve(scratch.vertices.size());
  out.pred.reserve(scratch.vertices.size());
  for (const auto& v : scratch.vertices) {
    out.cost.push_back(v.path_cost);
    out.pred.push_back(v.predecessor);
  }
  return out;
}

}  // namespace

Tour plan_tour(const std::vector<int>& selected_vertices,
               const RoadmapGraph& graph, const Pose& start) {
  if (graph.vertices.empty())
    throw std::invalid_argument("tour requires a non-empty graph");

  int start_v = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(graph.vertices.size()); ++i) {
    const double d =
        (graph.vertices[static_cast<size_t>(i)].pose.translation - start.translation)
            .norm();
    if (d < best_d) {
      best_d = d;
      start_v = i;
    }
  }

  // Deduplicated stop list, order-preserving.
  std::vector<int> stops;
  for (const int s : selected_vertices) {
    if (s < 0 || s >= static_cast<int>(graph.vertices.size()))
      throw std::invalid_argument("selected vertex outside the graph");
    if (std::find(stops.begin(), stops.end(), s) == stops.end()) stops.push_back(s);
  }

  std::map<int, Geodesics> geo;
  geo.emplace(start_v, geodesics_from(graph, start_v));
  for (const int s : stops)
    if (!geo.count(s)) geo.emplace(s, geodesics_from(graph, s));
  for (const int s : stops)
    if (!std::isfinite(geo.at(start_v).cost[static_cast<size_t>(s)]))
      throw std::runtime_error("selected viewpoint unreachable from the tour start");

  Tour tour;
  if (stops.empty()) {
    tour.vertex_path = {start_v};
    return tour;
  }

  // Nearest-neighbour construction (ties: smaller vertex id).
  std::vector<int> order = {start_v};
  std::vector<char> used(stops.size(), 0);
  int cur = start_v;
  for (size_t step = 0; step < stops.size(); ++step) {
    int pick = -1;
    double pick_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < stops.size(); ++i) {
      if (used[i]) continue;
      const double d = geo.at(cur).cost[static_cast<size_t>(stops[i])];
      if (d < pick_d || (d == pick_d && (pick < 0 || stops[i] < pick))) {
        pick_d = d;
        pick = stops[i];
      }
    }
    used[static_cast<size_t>(std::find(stops.begin(), stops.end(), pick) -
                             stops.begin())] = 1;
    order.push_back(pick);
    tour.nn_length += pick_d;
    cur = pick;
  }

  // 2-opt over the open tour, start pinned.
  const auto d = [&](int a, int b) { return geo.at(a).cost[static_cast<size_t>(b)]; };
  const int m = static_cast<int>(order.size()) - 1;
  bool improved = true;
  while (improved) {
    improved = false;
    for (int i = 1; i <= m - 1 && !improved; ++i) {
      for (int j = i + 1; j <= m && !improved; ++j) {
        const double before =
            d(order[static_cast<size_t>(i - 1)], order[static_cast<size_t>(i)]) +
            (j < m ? d(order[static_cast<size_t>(j)], order[static_cast<size_t>(j + 1)])
                   : 0.0);
        const double after =
            d(order[static_cast<size_t>(i - 1)], order[static_cast<size_t>(j)]) +
            (j < m ? d(order[static_cast<size_t>(i)], order[static_cast<size_t>(j + 1)])
                   : 0.0);
        if (after < before - 1e-12) {
          std::reverse(order.begin() + i, order.begin() + j + 1);
          improved = true;
        }
      }
    }
  }

  tour.visit_order.assign(order.begin() + 1, order.end());
  for (int i = 0; i + 1 <= m; ++i)
    tour.length += d(order[static_cast<size_t>(i)], order[static_cast<size_t>(i + 1)]);

  // Expand every leg along the source's shortest-path tree.
  tour.vertex_path = {start_v};
  for (int i = 0; i + 1 <= m; ++i) {
    const int a = order[static_cast<size_t>(i)];
    const int b = order[static_cast<size_t>(i + 1)];
    std::vector<int> leg;
    for (int v = b; v != a; v = geo.at(a).pred[static_cast<size_t>(v)]) leg.push_back(v);
    std::reverse(leg.begin(), leg.end());
    tour.vertex_path.insert(tour.vertex_path.end(), leg.begin(), leg.end());
  }
  return tour;
}

void save_coverage_report(const CoverageReport& report, const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path + " for writing");
  fs << "nautilus_coverage 1\n";
  fs << "surface_voxels " << report.surface_total << '\n';
  fs << "covered " << report.covered << '\n';
  fs << "uncoverable " << report.uncoverable << '\n';
  fs << "tour_length " << fmt_double(report.tour_length) << '\n';
  for (const auto& [vp, count] : report.per_viewpoint)
    fs << "viewpoint " << vp << " covers " << count << '\n';
}

}  // namespace nautilus
