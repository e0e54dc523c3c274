#include "nautilus/exploration_planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

#include "nautilus/textio.hpp"

namespace nautilus {

void RoadmapGraph::add_edge(int a, int b) {
  const double len =
      (vertices[static_cast<size_t>(a)].pose.translation -
       vertices[static_cast<size_t>(b)].pose.translation)
          .norm();
  adjacency[static_cast<size_t>(a)].emplace_back(b, len);
  adjacency[static_cast<size_t>(b)].emplace_back(a, len);
}

std::vector<std::tuple<int, int, double>> RoadmapGraph::edge_list() const {
  std::vector<std::tuple<int, int, double>> out;
  for (int i = 0; i < static_cast<int>(adjacency.size()); ++i)
    for (const auto& [j, len] : adjacency[static_cast<size_t>(i)])
      if (i < j) out.emplace_back(i, j, len);
  std::sort(out.begin(), out.end());
  return out;
}

bool sphere_in_free_space(const VoxelGrid& map, const Vec3& center,
                          double radius) {
  const double vs = map.voxel_size();
  const Eigen::Vector3i lo = map.index_of(center - Vec3::Constant(radius));
  const Eigen::Vector3i hi = map.index_of(center + Vec3::Constant(radius));
  const double r2 = radius * radius;
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Eigen::Vector3i idx(x, y, z);
        // Closest point of the voxel box to the sphere centre.
        const Vec3 vmin = map.origin() + vs * idx.cast<double>();
        double d2 = 0.0;
        for (int ax = 0; ax < 3; ++ax) {
          const double lo_ax = vmin[ax], hi_ax = vmin[ax] + vs;
          const double c = center[ax];
          if (c < lo_ax) d2 += (lo_ax - c) * (lo_ax - c);
          else if (c > hi_ax) d2 += (c - hi_ax) * (c - hi_ax);
        }
        if (d2 > r2) continue;
        if (!map.in_grid(idx)) return false;  // outside the map is unknown
        if (map.state(idx) != VoxelState::kFree) return false;
      }
  return true;
}

bool is_edge_free(const VoxelGrid& map, const Vec3& a, const Vec3& b,
                  double robot_radius) {
  const double len = (b - a).norm();
  if (len < 1e-12)
    throw std::invalid_argument("is_edge_free requires distinct endpoints");
  const double step = 0.5 * map.voxel_size();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const Vec3 p = a + (static_cast<double>(i) / n) * (b - a);
    if (!sphere_in_free_space(map, p, robot_radius)) return false;
  }
  return true;
}

std::vector<Pose> sample_vertices(const VoxelGrid& map, const CameraRig& rig,
                                  const Pose& root, const ExplorationConfig& cfg,
                                  const Aabb& bounds, std::mt19937& rng) {
  Aabb box;
  box.min = (root.translation - cfg.local_half_extents).cwiseMax(bounds.min);
  box.max = (root.translation + cfg.local_half_extents).cwiseMin(bounds.max);
  if ((box.max - box.min).minCoeff() <= 0.0) return {};

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Pose> retained;
  for (int s = 0; s < cfg.n_samples; ++s) {
    Vec3 p;
    for (int ax = 0; ax < 3; ++ax)
      p[ax] = box.min[ax] + u01(rng) * (box.max[ax] - box.min[ax]);

    if (!sphere_in_free_space(map, p, cfg.robot_radius)) continue;
    const auto nearest = map.nearest_occupied(p, cfg.d_obs);
    if (!nearest) continue;  // distance >= d_obs
    const Vec3 q = map.center_of(*nearest);
    const double dist = (q - p).norm();
    if (dist >= cfg.d_obs) continue;

    const double yaw = std::atan2(q.y() - p.y(), q.x() - p.x());
    const Pose pose = Pose::from_xyz_yaw(p.x(), p.y(), p.z(), yaw);
    if (fov_occupied_fraction(rig, pose, map, cfg.fov_range) < cfg.eta) continue;
    retained.push_back(pose);
  }
  return retained;
}

RoadmapGraph build_graph(const std::vector<Pose>& samples, const Pose& root,
                         const VoxelGrid& map, int k_neighbors,
                         double robot_radius) {
  RoadmapGraph g;
  g.vertices.push_back({root, 0.0, 0.0, -1});
  for (const auto& s : samples) g.vertices.push_back({s});
  const int n = static_cast<int>(g.vertices.size());
  g.adjacency.assign(static_cast<size_t>(n), {});

  // k nearest neighbours per vertex; an edge exists when either endpoint
  // nominates it and the swept sphere is collision-free.
  std::vector<std::vector<char>> linked(static_cast<size_t>(n),
                                        std::vector<char>(static_cast<size_t>(n), 0));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> order;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      order.emplace_back((g.vertices[static_cast<size_t>(i)].pose.translation -
                          g.vertices[static_cast<size_t>(j)].pose.translation)
                             .norm(),
                         j);
    }
    std::sort(order.begin(), order.end());
    const int kk = std::min<int>(k_neighbors, static_cast<int>(order.size()));
    for (int m = 0; m < kk; ++m) {
      const int j = order[static_cast<size_t>(m)].second;
      const int a = std::min(i, j), b = std::max(i, j);
      if (linked[static_cast<size_t>(a)][static_cast<size_t>(b)]) continue;
      linked[static_cast<size_t>(a)][static_cast<size_t>(b)] = 1;
      if (order[static_cast<size_t>(m)].first < 1e-12) continue;
      if (is_edge_free(map, g.vertices[static_cast<size_t>(a)].pose.translation,
                       g.vertices[static_cast<size_t>(b)].pose.translation,
                       robot_radius))
        g.add_edge(a, b);
    }
  }

  // Prune vertices unreachable from the root, keeping relative order.
  std::vector<char> reach(static_cast<size_t>(n), 0);
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
  if (n > 1 && std::count(reach.begin(), reach.end(), 1) == 1)
    throw PlannerStuck("planner stuck: no traversable edge leaves the root");

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
  return pruned;
}

void shortest_paths(RoadmapGraph& graph, int root) {
  const int n = static_cast<int>(graph.vertices.size());
  for (auto& v : graph.vertices) {
    v.path_cost = std::numeric_limits<double>::infinity();
    v.predecessor = -1;
  }
  graph.vertices[static_cast<size_t>(root)].path_cost = 0.0;

  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  queue.emplace(0.0, root);
  std::vector<char> done(static_cast<size_t>(n), 0);
  while (!queue.empty()) {
    const auto [cost, v] = queue.top();
    queue.pop();
    if (done[static_cast<size_t>(v)]) continue;
    done[static_cast<size_t>(v)] = 1;
    for (const auto& [w, len] : graph.adjacency[static_cast<size_t>(v)]) {
      if (done[static_cast<size_t>(w)]) continue;
      const double next = cost + len;
      auto& vert = graph.vertices[static_cast<size_t>(w)];
      if (next < vert.path_cost - 1e-15 ||
          (std::abs(next - vert.path_cost) <= 1e-15 && v < vert.predecessor)) {
        vert.path_cost = next;
        vert.predecessor = v;
        queue.emplace(next, w);
      }
    }
  }
}

std::optional<PathSelection> select_best_path_from_gains(const RoadmapGraph& graph,
                                                         double lambda) {
  const int n = static_cast<int>(graph.vertices.size());
  bool any_gain = false;
  for (const auto& v : graph.vertices)
    if (v.gain > 0.0) any_gain = true;
  if (!any_gain) return std::nullopt;  // exploration complete

  // Discounted gain of each vertex along its shortest path from the root.
  std::vector<double> discounted(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    discounted[static_cast<size_t>(i)] =
        graph.vertices[static_cast<size_t>(i)].gain *
        std::exp(-lambda * graph.vertices[static_cast<size_t>(i)].path_cost);

  PathSelection best;
  best.score = -1.0;
  for (int t = 0; t < n; ++t) {
    const auto& vt = graph.vertices[static_cast<size_t>(t)];
    if (!std::isfinite(vt.path_cost)) continue;
    double score = 0.0;
    for (int v = t; v != -1; v = graph.vertices[static_cast<size_t>(v)].predecessor)
      score += discounted[static_cast<size_t>(v)];
    const bool better =
        score > best.score ||
        (score == best.score && best.terminal >= 0 &&
         (vt.path_cost < graph.vertices[static_cast<size_t>(best.terminal)].path_cost ||
          (vt.path_cost ==
               graph.vertices[static_cast<size_t>(best.terminal)].path_cost &&
           t < best.terminal)));
    if (better) {
      best.score = score;
      best.terminal = t;
    }
  }

  best.vertex_order.clear();
  for (int v = best.terminal; v != -1;
       v = graph.vertices[static_cast<size_t>(v)].predecessor)
    best.vertex_order.push_back(v);
  std::reverse(best.vertex_order.begin(), best.vertex_order.end());
  return best;
}

std::optional<PathSelection> select_best_path(RoadmapGraph& graph,
                                              const VoxelGrid& map,
                                              const DepthSensorSpec& spec,
                                              const ExplorationConfig& cfg) {
  shortest_paths(graph, 0);
  for (auto& v : graph.vertices)
    v.gain = static_cast<double>(
        map.unknown_volume_visible(spec, v.pose.compose(spec.mount)));
  return select_best_path_from_gains(graph, cfg.lambda);
}

void save_edge_list(const RoadmapGraph& graph, const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw std::runtime_error("cannot open " + path + " for writing");
  fs << "nautilus_graph 1 " << graph.vertices.size() << '\n';
  for (const auto& v : graph.vertices)
    fs << "v " << fmt_double(v.pose.translation.x()) << ' '
       << fmt_double(v.pose.translation.y()) << ' '
       << fmt_double(v.pose.translation.z()) << ' ' << fmt_double(v.pose.yaw())
       << ' ' << fmt_double(v.gain) << '\n';
  for (const auto& [i, j, len] : graph.edge_list())
    fs << "e " << i << ' ' << j << ' ' << fmt_double(len) << '\n';
}

}  // namespace nautilus
