#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <vector>
#include "nautilus/exploration_planner.hpp"
#include "nautilus/refractive_camera.hpp"
#include "nautilus/textio.hpp"
#include "nautilus/voxel_map.hpp"
#include "oracle_helpers.hpp"

using namespace nautilus;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VoxelGrid make_free_grid(const Vec3& origin, const Eigen::Vector3i& dims,
                         double vs = 0.2) {
  VoxelGrid g(origin, vs, dims);
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x)
        g.set_log_odds({x, y, z}, -g.params().l_max);
  return g;
}

// Mark every voxel whose index lies in [lo, hi] (inclusive) with log odds l.
void set_region(VoxelGrid& g, const Eigen::Vector3i& lo, const Eigen::Vector3i& hi,
                float l) {
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) g.set_log_odds({x, y, z}, l);
}

// Sensor z-forward axis mapped onto the body x-forward axis.
Pose forward_mount() {
  Eigen::Matrix3d rot;
  rot.col(0) = Vec3::UnitY();
  rot.col(1) = Vec3::UnitZ();
  rot.col(2) = Vec3::UnitX();
  Pose p;
  p.rotation = Quat(rot).normalized();
  return p;
}

void add_manual_edge(RoadmapGraph& g, int a, int b, double len) {
  g.adjacency[static_cast<size_t>(a)].emplace_back(b, len);
  g.adjacency[static_cast<size_t>(b)].emplace_back(a, len);
}

// Random connected graph with quarter-unit edge lengths, so every path cost
// is exact in doubles and ties are exact rather than rounding artifacts.
RoadmapGraph quarter_graph(std::mt19937& rng, int n) {
  RoadmapGraph g;
  g.vertices.resize(static_cast<size_t>(n));
  g.adjacency.assign(static_cast<size_t>(n), {});
  auto qlen = [&rng] { return 0.25 * static_cast<double>(1 + rng() % 12); };
  for (int v = 1; v < n; ++v)
    add_manual_edge(g, v, static_cast<int>(rng() % static_cast<uint32_t>(v)), qlen());
  const int extras = static_cast<int>(rng() % 4);
  for (int e = 0; e < extras; ++e) {
    const int a = static_cast<int>(rng() % static_cast<uint32_t>(n));
    const int b = static_cast<int>(rng() % static_cast<uint32_t>(n));
    if (a == b) continue;
    bool dup = false;
    for (const auto& [w, len] : g.adjacency[static_cast<size_t>(a)])
      if (w == b) dup = true;
    if (!dup) add_manual_edge(g, a, b, qlen());
  }
  return g;
}

// Exhaustive simple-path enumeration from the root: exact minimum cost per
// vertex, and the canonical predecessor (smallest optimal neighbour).
void oracle_shortest(const RoadmapGraph& g, std::vector<double>& cost,
                     std::vector<int>& pred) {
  const int n = static_cast<int>(g.vertices.size());
  cost.assign(static_cast<size_t>(n), kInf);
  pred.assign(static_cast<size_t>(n), -1);
  std::vector<char> onpath(static_cast<size_t>(n), 0);
  std::function<void(int, double)> dfs = [&](int v, double c) {
    if (c < cost[static_cast<size_t>(v)]) cost[static_cast<size_t>(v)] = c;
    onpath[static_cast<size_t>(v)] = 1;
    for (const auto& [w, len] : g.adjacency[static_cast<size_t>(v)])
      if (!onpath[static_cast<size_t>(w)]) dfs(w, c + len);
    onpath[static_cast<size_t>(v)] = 0;
  };
  dfs(0, 0.0);
  for (int v = 0; v < n; ++v) {
    if (v == 0 || !std::isfinite(cost[static_cast<size_t>(v)])) continue;
    int best = -1;
    for (const auto& [u, len] : g.adjacency[static_cast<size_t>(v)])
      if (cost[static_cast<size_t>(u)] + len == cost[static_cast<size_t>(v)] &&
          (best == -1 || u < best))
        best = u;
    pred[static_cast<size_t>(v)] = best;
  }
}

// Exhaustive path-score selection with the documented tie-breaks, evaluated
// on the canonical shortest-path tree.
std::optional<PathSelection> oracle_select(const RoadmapGraph& g, double lambda) {
  bool any_gain = false;
  for (const auto& v : g.vertices)
    if (v.gain > 0.0) any_gain = true;
  if (!any_gain) return std::nullopt;

  std::vector<double> cost;
  std::vector<int> pred;
  oracle_shortest(g, cost, pred);

  const int n = static_cast<int>(g.vertices.size());
  std::vector<double> disc(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v)
    disc[static_cast<size_t>(v)] = g.vertices[static_cast<size_t>(v)].gain *
                                   std::exp(-lambda * cost[static_cast<size_t>(v)]);

  PathSelection best;
  best.score = -1.0;
  for (int t = 0; t < n; ++t) {
    if (!std::isfinite(cost[static_cast<size_t>(t)])) continue;
    double score = 0.0;
    for (int v = t; v != -1; v = pred[static_cast<size_t>(v)])
      score += disc[static_cast<size_t>(v)];
    const bool better =
        score > best.score ||
        (score == best.score &&
         (cost[static_cast<size_t>(t)] < cost[static_cast<size_t>(best.terminal)] ||
          (cost[static_cast<size_t>(t)] == cost[static_cast<size_t>(best.terminal)] &&
           t < best.terminal)));
    if (better) {
      best.score = score;
      best.terminal = t;
    }
  }
  best.vertex_order.clear();
  for (int v = best.terminal; v != -1; v = pred[static_cast<size_t>(v)])
    best.vertex_order.push_back(v);
  std::reverse(best.vertex_order.begin(), best.vertex_order.end());
  return best;
}

}  // namespace

TEST_CASE("sphere free space: clear, occupied, unknown, boundary") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {20, 20, 20});  // 4 m cube
  CHECK(sphere_in_free_space(g, Vec3(2.0, 2.0, 2.0), 0.45));

  // One occupied voxel at [1.0,1.2]^3.
  g.set_log_odds({5, 5, 5}, g.params().l_max);
  CHECK_FALSE(sphere_in_free_space(g, Vec3(1.1, 1.1, 1.1), 0.3));
  CHECK(sphere_in_free_space(g, Vec3(3.0, 3.0, 3.0), 0.3));

  // Contact at exactly the radius counts as a collision.
  CHECK_FALSE(sphere_in_free_space(g, Vec3(0.5, 1.1, 1.1), 0.5));
  CHECK(sphere_in_free_space(g, Vec3(0.5, 1.1, 1.1), 0.49));

  // An unknown voxel blocks like an occupied one.
  g.set_log_odds({5, 5, 5}, -g.params().l_max);
  g.set_log_odds({10, 10, 10}, 0.0f);
  CHECK_FALSE(sphere_in_free_space(g, Vec3(2.1, 2.1, 2.1), 0.3));

  // Poking past the grid boundary fails even with all-free contents.
  g.set_log_odds({10, 10, 10}, -g.params().l_max);
  CHECK_FALSE(sphere_in_free_space(g, Vec3(0.3, 2.0, 2.0), 0.45));
  CHECK(sphere_in_free_space(g, Vec3(0.5, 2.0, 2.0), 0.45));
}

TEST_CASE("edge freedom: corridor, wall, clearance, unknown, errors") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});  // 12 x 12 x 4 m
  const double r = 0.3;
  CHECK(is_edge_free(g, Vec3(1, 5, 1.5), Vec3(10, 5, 1.5), r));

  // Full-height wall at x in [6.0, 6.2] blocks any crossing edge.
  set_region(g, {30, 0, 0}, {30, 59, 19}, g.params().l_max);
  CHECK_FALSE(is_edge_free(g, Vec3(1, 5, 1.5), Vec3(10, 5, 1.5), r));

  // Parallel edges: clearance to the wall face decides.
  CHECK(is_edge_free(g, Vec3(5.5, 2, 1.5), Vec3(5.5, 10, 1.5), r));   // 0.5 m away
  CHECK_FALSE(is_edge_free(g, Vec3(5.8, 2, 1.5), Vec3(5.8, 10, 1.5), r));  // 0.2 m

  // An unknown strip is as impassable as the wall.
  set_region(g, {30, 0, 0}, {30, 59, 19}, 0.0f);
  CHECK_FALSE(is_edge_free(g, Vec3(1, 5, 1.5), Vec3(10, 5, 1.5), r));

  CHECK_THROWS_AS(is_edge_free(g, Vec3(1, 5, 1.5), Vec3(1, 5, 1.5), r),
                  std::invalid_argument);
}

TEST_CASE("vertex retention: near-wall accepted, far and embedded rejected") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  set_region(g, {25, 0, 0}, {25, 59, 19}, g.params().l_max);  // wall x in [5.0,5.2]
  const CameraRig rig = make_default_rig();
  const Aabb bounds{Vec3::Zero(), Vec3(12.0, 12.0, 4.0)};

  ExplorationConfig cfg;
  cfg.local_half_extents = Vec3::Constant(1e-9);  // pin samples to the root
  cfg.n_samples = 50;
  cfg.d_obs = 1.0;
  cfg.eta = 0.25;
  cfg.robot_radius = 0.2;
  cfg.fov_range = 2.0;

  SUBCASE("0.4 m from the wall: free, observing, in range -> all retained") {
    std::mt19937 rng(7);
    const Pose root = Pose::from_xyz_yaw(4.7, 5.1, 1.5, 0.0);
    const auto v = sample_vertices(g, rig, root, cfg, bounds, rng);
    REQUIRE(static_cast<int>(v.size()) == cfg.n_samples);
    for (const auto& p : v) {
      CHECK((p.translation - root.translation).norm() < 1e-8);
      CHECK(std::abs(p.yaw()) < 1e-6);  // yaw faces the nearest occupied voxel
    }
  }
  SUBCASE("beyond d_obs from every surface -> rejected") {
    std::mt19937 rng(7);
    const Pose root = Pose::from_xyz_yaw(2.0, 5.1, 1.5, 0.0);
    CHECK(sample_vertices(g, rig, root, cfg, bounds, rng).empty());
  }
  SUBCASE("sample inside the wall -> rejected") {
    std::mt19937 rng(7);
    const Pose root = Pose::from_xyz_yaw(5.1, 5.1, 1.5, 0.0);
    CHECK(sample_vertices(g, rig, root, cfg, bounds, rng).empty());
  }
  SUBCASE("surface within d_obs but outside camera range -> FOV check rejects") {
    std::mt19937 rng(7);
    ExplorationConfig far = cfg;
    far.d_obs = 2.6;
    const Pose root = Pose::from_xyz_yaw(2.7, 5.1, 1.5, 0.0);
    CHECK(sample_vertices(g, rig, root, far, bounds, rng).empty());
  }
}

TEST_CASE("build_graph: complete triangle in the open") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  const Pose root = Pose::from_xyz_yaw(1.0, 1.0, 1.0, 0.0);
  const std::vector<Pose> samples = {Pose::from_xyz_yaw(2.0, 1.0, 1.0, 0.0),
                                     Pose::from_xyz_yaw(1.0, 2.0, 1.0, 0.0)};
  RoadmapGraph graph = build_graph(samples, root, g, 8, 0.2);
  REQUIRE(graph.vertices.size() == 3);
  const auto edges = graph.edge_list();
  REQUIRE(edges.size() == 3);
  CHECK(std::get<2>(edges[0]) == 1.0);
  CHECK(std::get<2>(edges[1]) == 1.0);
  CHECK(std::get<2>(edges[2]) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  shortest_paths(graph);
  CHECK(graph.vertices[0].path_cost == 0.0);
  CHECK(graph.vertices[1].path_cost == 1.0);
  CHECK(graph.vertices[2].path_cost == 1.0);
  CHECK(graph.vertices[1].predecessor == 0);
  CHECK(graph.vertices[2].predecessor == 0);
}

TEST_CASE("build_graph: occupied slab separates components, far side pruned") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  set_region(g, {30, 0, 0}, {30, 59, 19}, g.params().l_max);  // x in [6.0,6.2]
  const Pose root = Pose::from_xyz_yaw(2.0, 5.0, 1.5, 0.0);
  const std::vector<Pose> samples = {
      Pose::from_xyz_yaw(3.0, 5.0, 1.5, 0.0), Pose::from_xyz_yaw(4.0, 6.0, 1.5, 0.0),
      Pose::from_xyz_yaw(2.5, 3.0, 1.5, 0.0), Pose::from_xyz_yaw(8.0, 5.0, 1.5, 0.0),
      Pose::from_xyz_yaw(9.0, 6.0, 1.5, 0.0), Pose::from_xyz_yaw(8.5, 3.0, 1.5, 0.0)};
  RoadmapGraph graph = build_graph(samples, root, g, 8, 0.3);
  REQUIRE(graph.vertices.size() == 4);  // root + the three near-side samples
  for (const auto& v : graph.vertices) CHECK(v.pose.translation.x() < 6.0);
  CHECK(graph.edge_list().size() == 6);  // complete K4 on the near side

  // Root index stays 0 after pruning.
  CHECK(graph.vertices[0].pose.translation == root.translation);
}

TEST_CASE("build_graph: no traversable edge at the root raises PlannerStuck") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  set_region(g, {30, 0, 0}, {30, 59, 19}, g.params().l_max);
  const Pose root = Pose::from_xyz_yaw(2.0, 5.0, 1.5, 0.0);
  const std::vector<Pose> samples = {Pose::from_xyz_yaw(8.0, 5.0, 1.5, 0.0),
                                     Pose::from_xyz_yaw(9.0, 6.0, 1.5, 0.0)};
  CHECK_THROWS_AS(build_graph(samples, root, g, 8, 0.3), PlannerStuck);
}

TEST_CASE("build_graph: degenerate inputs") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  const Pose root = Pose::from_xyz_yaw(2.0, 5.0, 1.5, 0.0);

  // No samples: a root-only graph, not a failure.
  RoadmapGraph lone = build_graph({}, root, g, 8, 0.3);
  CHECK(lone.vertices.size() == 1);
  CHECK(lone.edge_list().empty());

  // A sample coincident with the root gets no zero-length edge but can hang
  // off another sample.
  const std::vector<Pose> samples = {root, Pose::from_xyz_yaw(3.0, 5.0, 1.5, 0.0)};
  RoadmapGraph graph = build_graph(samples, root, g, 8, 0.3);
  REQUIRE(graph.vertices.size() == 3);
  const auto edges = graph.edge_list();
  REQUIRE(edges.size() == 2);
  CHECK(std::get<0>(edges[0]) == 0);
  CHECK(std::get<1>(edges[0]) == 2);
  CHECK(std::get<0>(edges[1]) == 1);
  CHECK(std::get<1>(edges[1]) == 2);
}

TEST_CASE("build_graph on cluttered map: reachability and edge recomputation") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {40, 40, 15});  // 8 x 8 x 3 m
  std::mt19937 rng(99);
  for (int i = 0; i < 25; ++i) {
    const Eigen::Vector3i lo(static_cast<int>(rng() % 38),
                             static_cast<int>(rng() % 38),
                             static_cast<int>(rng() % 13));
    set_region(g, lo, lo + Eigen::Vector3i::Ones(), g.params().l_max);
  }
  const Vec3 root_pos(4.0, 4.0, 1.5);
  for (int z = 0; z < 15; ++z)
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        if ((g.center_of({x, y, z}) - root_pos).norm() < 0.9)
          g.set_log_odds({x, y, z}, -g.params().l_max);

  std::uniform_real_distribution<double> ux(0.4, 7.6), uz(0.4, 2.6);
  std::vector<Pose> samples;
  for (int i = 0; i < 120; ++i)
    samples.push_back(Pose::from_xyz_yaw(ux(rng), ux(rng), uz(rng), 0.0));

  const double r = 0.3;
  RoadmapGraph graph =
      build_graph(samples, Pose::from_xyz_yaw(4.0, 4.0, 1.5, 0.0), g, 6, r);
  const int n = static_cast<int>(graph.vertices.size());
  REQUIRE(n >= 2);

  // Every surviving vertex is reachable from the root (independent BFS).
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<int> queue = {0};
  seen[0] = 1;
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    for (const auto& [w, len] : graph.adjacency[static_cast<size_t>(v)])
      if (!seen[static_cast<size_t>(w)]) {
        seen[static_cast<size_t>(w)] = 1;
        queue.push_back(w);
      }
  }
  CHECK(std::count(seen.begin(), seen.end(), 1) == n);

  // Edge lengths are the Euclidean gap, and a sample of the accepted edges
  // passes an independent recomputation of the swept-sphere predicate.
  const auto edges = graph.edge_list();
  REQUIRE(!edges.empty());
  for (const auto& [i, j, len] : edges)
    CHECK(len == (graph.vertices[static_cast<size_t>(i)].pose.translation -
                  graph.vertices[static_cast<size_t>(j)].pose.translation)
                     .norm());
  std::vector<size_t> pick;
  for (size_t e = 0; e < edges.size(); ++e) pick.push_back(e);
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(std::min<size_t>(pick.size(), 15));
  for (const size_t e : pick) {
    const auto& [i, j, len] = edges[e];
    CHECK(oracle::edge_free(g, graph.vertices[static_cast<size_t>(i)].pose.translation,
                           graph.vertices[static_cast<size_t>(j)].pose.translation, r));
  }

  // And every vertex centre itself fits in free space.
  for (const auto& v : graph.vertices)
    CHECK(oracle::sphere_free(g, v.pose.translation, r));
}

TEST_CASE("shortest paths: detour beats long direct edge") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 5.0);
  add_manual_edge(g, 0, 2, 1.0);
  add_manual_edge(g, 2, 1, 1.0);
  shortest_paths(g);
  CHECK(g.vertices[1].path_cost == 2.0);
  CHECK(g.vertices[1].predecessor == 2);
  CHECK(g.vertices[2].path_cost == 1.0);
  CHECK(g.vertices[2].predecessor == 0);
}

TEST_CASE("shortest paths: equal-cost tie resolves to the smaller predecessor") {
  RoadmapGraph g;
  g.vertices.resize(4);
  g.adjacency.assign(4, {});
  add_manual_edge(g, 0, 1, 1.0);
  add_manual_edge(g, 0, 2, 1.0);
  add_manual_edge(g, 1, 3, 1.0);
  add_manual_edge(g, 2, 3, 1.0);
  shortest_paths(g);
  CHECK(g.vertices[3].path_cost == 2.0);
  CHECK(g.vertices[3].predecessor == 1);
}

TEST_CASE("shortest paths: unreachable vertices stay at infinity") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 1.0);
  shortest_paths(g);
  CHECK(g.vertices[1].path_cost == 1.0);
  CHECK(g.vertices[2].path_cost == kInf);
  CHECK(g.vertices[2].predecessor == -1);
}

TEST_CASE("shortest paths match exhaustive enumeration on 100 random graphs") {
  std::mt19937 rng(4242);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 2 + static_cast<int>(rng() % 9);
    RoadmapGraph g = quarter_graph(rng, n);

    std::vector<double> cost;
    std::vector<int> pred;
    oracle_shortest(g, cost, pred);

    shortest_paths(g);
    for (int v = 0; v < n; ++v) {
      CAPTURE(inst);
      CAPTURE(v);
      CHECK(g.vertices[static_cast<size_t>(v)].path_cost == cost[static_cast<size_t>(v)]);
      CHECK(g.vertices[static_cast<size_t>(v)].predecessor == pred[static_cast<size_t>(v)]);
    }
  }
}

TEST_CASE("path selection: gain 500 beats gain 0") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 1.0);
  add_manual_edge(g, 0, 2, 1.0);
  g.vertices[1].gain = 500.0;
  g.vertices[2].gain = 0.0;
  shortest_paths(g);
  const auto sel = select_best_path_from_gains(g, 0.2);
  REQUIRE(sel.has_value());
  CHECK(sel->terminal == 1);
  CHECK(sel->vertex_order == std::vector<int>{0, 1});
  CHECK(sel->score == doctest::Approx(500.0 * std::exp(-0.2)).epsilon(1e-15));
}

TEST_CASE("path selection: equal gains prefer the cheaper 2 m vertex over 8 m") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 2.0);
  add_manual_edge(g, 0, 2, 8.0);
  g.vertices[1].gain = 10.0;
  g.vertices[2].gain = 10.0;
  shortest_paths(g);
  const auto sel = select_best_path_from_gains(g, 0.2);
  REQUIRE(sel.has_value());
  CHECK(sel->terminal == 1);
  CHECK(sel->score == doctest::Approx(10.0 * std::exp(-0.4)).epsilon(1e-15));
}

TEST_CASE("path selection: all gains zero signals completion") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 1.0);
  add_manual_edge(g, 0, 2, 1.0);
  shortest_paths(g);
  CHECK_FALSE(select_best_path_from_gains(g, 0.2).has_value());
}

TEST_CASE("path selection: root gain counts and a pure-root tie stays home") {
  RoadmapGraph g;
  g.vertices.resize(2);
  g.adjacency.assign(2, {});
  add_manual_edge(g, 0, 1, 1.0);
  g.vertices[0].gain = 7.0;
  shortest_paths(g);
  const auto sel = select_best_path_from_gains(g, 0.2);
  REQUIRE(sel.has_value());
  // Terminal 1 scores the same 7.0 (its own gain is zero); the cheaper
  // terminal wins the tie.
  CHECK(sel->terminal == 0);
  CHECK(sel->vertex_order == std::vector<int>{0});
  CHECK(sel->score == 7.0);

  g.vertices[1].gain = 2.0;
  const auto sel2 = select_best_path_from_gains(g, 0.2);
  REQUIRE(sel2.has_value());
  CHECK(sel2->terminal == 1);
  CHECK(sel2->score == doctest::Approx(7.0 + 2.0 * std::exp(-0.2)).epsilon(1e-15));
}

TEST_CASE("path selection: symmetric tie falls to the smaller terminal index") {
  RoadmapGraph g;
  g.vertices.resize(3);
  g.adjacency.assign(3, {});
  add_manual_edge(g, 0, 1, 1.0);
  add_manual_edge(g, 0, 2, 1.0);
  g.vertices[1].gain = 5.0;
  g.vertices[2].gain = 5.0;
  shortest_paths(g);
  const auto sel = select_best_path_from_gains(g, 0.2);
  REQUIRE(sel.has_value());
  CHECK(sel->terminal == 1);
}

TEST_CASE("path selection matches brute force on 100 random instances") {
  std::mt19937 rng(31337);
  const double lambda = 0.2;
  int complete = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 2 + static_cast<int>(rng() % 9);
    RoadmapGraph g = quarter_graph(rng, n);
    for (auto& v : g.vertices)
      v.gain = static_cast<double>(rng() % 4);
    if (inst == 0)
      for (auto& v : g.vertices) v.gain = 0.0;  // force one completion case

    const auto expected = oracle_select(g, lambda);
    shortest_paths(g);
    const auto got = select_best_path_from_gains(g, lambda);

    CAPTURE(inst);
    REQUIRE(got.has_value() == expected.has_value());
    if (!expected) {
      ++complete;
      continue;
    }
    CHECK(got->terminal == expected->terminal);
    CHECK(got->vertex_order == expected->vertex_order);
    CHECK(got->score == expected->score);
  }
  CHECK(complete >= 1);
}

TEST_CASE("live-map selection: the vertex facing unmapped volume wins") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  set_region(g, {40, 0, 0}, {59, 59, 19}, 0.0f);  // x >= 8 m unexplored

  DepthSensorSpec spec;
  spec.mount = forward_mount();
  ExplorationConfig cfg;
  cfg.robot_radius = 0.3;

  const Pose root = Pose::from_xyz_yaw(4.0, 5.0, 1.5, 0.0);
  const std::vector<Pose> samples = {
      Pose::from_xyz_yaw(6.5, 5.0, 1.5, 0.0),          // stares into the unknown
      Pose::from_xyz_yaw(2.0, 5.0, 1.5, kPi)};         // fully mapped view
  RoadmapGraph graph = build_graph(samples, root, g, 8, cfg.robot_radius);
  REQUIRE(graph.vertices.size() == 3);

  const auto sel = select_best_path(graph, g, spec, cfg);
  REQUIRE(sel.has_value());
  CHECK(graph.vertices[0].gain == 0.0);
  CHECK(graph.vertices[1].gain > 0.0);
  CHECK(graph.vertices[2].gain == 0.0);
  CHECK(sel->terminal == 1);
  CHECK(sel->vertex_order == std::vector<int>{0, 1});
  CHECK(sel->score ==
        doctest::Approx(graph.vertices[1].gain * std::exp(-0.2 * 2.5)).epsilon(1e-12));

  SUBCASE("an occupied curtain in front of the unknown removes all gain") {
    set_region(g, {38, 0, 0}, {39, 59, 19}, g.params().l_max);
    CHECK_FALSE(select_best_path(graph, g, spec, cfg).has_value());
  }
  SUBCASE("mapping the region free completes exploration") {
    set_region(g, {40, 0, 0}, {59, 59, 19}, -g.params().l_max);
    CHECK_FALSE(select_best_path(graph, g, spec, cfg).has_value());
  }
}

TEST_CASE("edge list dump: header, vertex and edge lines round-trip") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  const Pose root = Pose::from_xyz_yaw(1.0, 1.0, 1.0, 0.25);
  const std::vector<Pose> samples = {Pose::from_xyz_yaw(2.0, 1.0, 1.0, -0.5),
                                     Pose::from_xyz_yaw(1.0, 2.5, 1.0, 0.0)};
  RoadmapGraph graph = build_graph(samples, root, g, 8, 0.2);
  graph.vertices[1].gain = 42.0;

  const std::string path = "tmp_edge_list.txt";
  save_edge_list(graph, path);

  std::ifstream fs(path);
  REQUIRE(fs.good());
  std::string line;
  REQUIRE(std::getline(fs, line));
  CHECK(line == "nautilus_graph 1 3");
  int v_lines = 0, e_lines = 0;
  std::vector<std::vector<std::string>> vs, es;
  while (std::getline(fs, line)) {
    const auto tok = split_tokens(line);
    REQUIRE(!tok.empty());
    if (tok[0] == "v") {
      ++v_lines;
      REQUIRE(tok.size() == 6);
      vs.push_back(tok);
    } else {
      REQUIRE(tok[0] == "e");
      ++e_lines;
      REQUIRE(tok.size() == 4);
      es.push_back(tok);
    }
  }
  CHECK(v_lines == 3);
  CHECK(e_lines == static_cast<int>(graph.edge_list().size()));
  for (int i = 0; i < 3; ++i) {
    const auto& v = graph.vertices[static_cast<size_t>(i)];
    CHECK(parse_double(vs[static_cast<size_t>(i)][1], 0) == v.pose.translation.x());
    CHECK(parse_double(vs[static_cast<size_t>(i)][2], 0) == v.pose.translation.y());
    CHECK(parse_double(vs[static_cast<size_t>(i)][3], 0) == v.pose.translation.z());
    CHECK(parse_double(vs[static_cast<size_t>(i)][4], 0) == v.pose.yaw());
    CHECK(parse_double(vs[static_cast<size_t>(i)][5], 0) == v.gain);
  }
  const auto edges = graph.edge_list();
  for (size_t e = 0; e < es.size(); ++e) {
    CHECK(parse_int(es[e][1], 0) == std::get<0>(edges[e]));
    CHECK(parse_int(es[e][2], 0) == std::get<1>(edges[e]));
    CHECK(parse_double(es[e][3], 0) == std::get<2>(edges[e]));
  }
  std::remove(path.c_str());
}

TEST_CASE("sampling, graph build and selection are seed-deterministic") {
  VoxelGrid g = make_free_grid(Vec3::Zero(), {60, 60, 20});
  set_region(g, {25, 0, 0}, {25, 59, 19}, g.params().l_max);
  const CameraRig rig = make_default_rig();
  const Aabb bounds{Vec3::Zero(), Vec3(12.0, 12.0, 4.0)};
  const Pose root = Pose::from_xyz_yaw(4.0, 5.0, 1.5, 0.0);

  ExplorationConfig cfg;
  cfg.local_half_extents = Vec3(2.0, 2.0, 1.0);
  cfg.n_samples = 150;
  cfg.robot_radius = 0.3;

  DepthSensorSpec spec;
  spec.mount = forward_mount();

  auto run = [&] {
    std::mt19937 rng(2024);
    const auto poses = sample_vertices(g, rig, root, cfg, bounds, rng);
    RoadmapGraph graph = build_graph(poses, root, g, cfg.k_neighbors, cfg.robot_radius);
    const auto sel = select_best_path(graph, g, spec, cfg);
    return std::tuple(poses, graph.edge_list(), sel);
  };
  const auto [poses_a, edges_a, sel_a] = run();
  const auto [poses_b, edges_b, sel_b] = run();

  REQUIRE(!poses_a.empty());
  REQUIRE(poses_a.size() == poses_b.size());
  for (size_t i = 0; i < poses_a.size(); ++i) {
    CHECK(poses_a[i].translation == poses_b[i].translation);
    CHECK(poses_a[i].rotation.coeffs() == poses_b[i].rotation.coeffs());
  }
  CHECK(edges_a == edges_b);
  REQUIRE(sel_a.has_value() == sel_b.has_value());
  if (sel_a) {
    CHECK(sel_a->terminal == sel_b->terminal);
    CHECK(sel_a->vertex_order == sel_b->vertex_order);
    CHECK(sel_a->score == sel_b->score);
  }
}
