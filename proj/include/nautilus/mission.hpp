#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nautilus/exploration_planner.hpp"
#include "nautilus/geometry.hpp"
#include "nautilus/inspection_planner.hpp"
#include "nautilus/refractive_camera.hpp"
#include "nautilus/state_estimator.hpp"
#include "nautilus/voxel_map.hpp"
#include "nautilus/world.hpp"

namespace nautilus {

/// Rejected mission configuration: unreadable file, out-of-range value,
/// unresolvable world/rig reference, or a start pose inside a solid.
class MissionConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Body-velocity aiding sensor: white noise per axis, plus periodic dropout
/// windows where both the emitted covariance and the injected noise grow by
/// the same factor (the filter stays consistent through the window).
struct VelocitySensorConfig {
  double sigma = 0.01;              // m/s, 1-sigma per body axis
  double depth_sigma = 0.01;        // m, barometer 1-sigma
  double blackout_period = 0.0;     // s between window starts, 0 = never
  double blackout_duration = 1.5;   // s per window
  double blackout_inflation = 3.0;  // sigma multiplier inside a window
};

struct MissionConfig {
  std::string world = "tank";  // "tank", "box", or a world file path
  std::string rig = "default"; // "default" or a rig calibration file path
  uint64_t seed = 1;

  double tick_rate = 20.0;         // Hz
  double speed = 0.6;              // m/s commanded travel speed
  double acceptance_radius = 0.3;  // m, waypoint acceptance
  double yaw_rate_max = 0.9;       // rad/s
  double yaw_accept = 0.15;        // rad, alignment gate at view waypoints
  double voxel_size = 0.2;
  double accel_psd = 0.05;         // estimator process noise (m^2/s^3)
  int sensor_decimation = 1;       // integrate every k-th tick

  Pose start = Pose::from_xyz_yaw(2.0, 2.0, 1.0, 0.0);
  double survey_z = 2.0;  // depth reached before exploration starts

  int max_ve_iterations = 60;
  int ve_retries = 3;        // sampling-box expansions on a stuck planner
  double ve_expansion = 1.5; // half-extent multiplier per retry

  DepthSensorSpec sensor;  // mount defaults to body x-forward
  ExplorationConfig exploration;
  InspectionConfig inspection;
  VelocitySensorConfig velocity_sensor;
};

/// Ready-to-run configuration for a bundled world ("tank" or "box").
/// Throws MissionConfigError for any other name.
MissionConfig default_mission_config(const std::string& world_name);

/// Reads a JSON mission file; missing keys keep the defaults for its world.
/// Validates ranges and resolves world/rig references (file paths must load).
/// Throws MissionConfigError with a human-readable reason.
MissionConfig load_mission_config(const std::string& path);

/// Writes the configuration as JSON (stable key order, exact doubles).
void save_mission_config(const MissionConfig& cfg, const std::string& path);

/// Hooks into the mission loop for evaluation harnesses. Callbacks observe
/// planner inputs/outputs right where decisions are made; the mission owns
/// all passed objects.
struct MissionObserver {
  virtual ~MissionObserver() = default;
  virtual void on_ve_iteration(int /*iteration*/, const VoxelGrid& /*map*/,
                               const RoadmapGraph& /*graph*/,
                               const PathSelection* /*selection_or_null*/) {}
  virtual void on_gvi_plan(const VoxelGrid& /*map*/,
                           const std::vector<Viewpoint>& /*viewpoints*/,
                           const InspectionGraph& /*inspection_graph*/,
                           const CoverSelection& /*cover*/, const Tour& /*tour*/) {}
  virtual void on_tick(double /*t*/, const Pose& /*true_pose*/,
                       const Pose& /*estimated_pose*/) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPlannerStuck = 3;
inline constexpr int kExitHomingUnreachable = 4;
inline constexpr int kExitTickBudget = 5;
inline constexpr int kExitCollision = 6;

/// Run exploration only (descend + explore + home) or the full mission with
/// the inspection phase between exploration and homing.
enum class MissionPhases { kFull, kExploreOnly };

struct MissionOutcome {
  int exit_code = kExitOk;
  std::string failure;  // empty on success
  long ticks = 0;
  double duration = 0.0;  // simulated seconds
  int ve_iterations = 0;
  MapCounts final_map;
  double homing_error_est = 0.0;   // |estimated final position - start|
  double homing_error_true = 0.0;  // |true final position - start|
  double rpe10 = std::numeric_limits<double>::quiet_NaN();  // NaN if path < 10 m
  double total_gain = 0.0;         // summed selected-path gains
  // Inspection results; empty when the phase did not run.
  CoverSelection cover;
  Tour tour;
  int surface_total = 0;
};

/// Executes the mission state machine (INIT -> VE -> GVI -> HOMING -> DONE)
/// and writes mission.log, trajectory.csv, map.ply, map.bin, roadmap.txt and
/// coverage.txt (full missions) under out_dir. Aborts still write the log and
/// partial exports. max_ticks < 0 means unlimited.
MissionOutcome run_mission(const MissionConfig& cfg, const std::string& out_dir,
                           MissionObserver* observer = nullptr,
                           long max_ticks = -1,
                           MissionPhases phases = MissionPhases::kFull);

/// Shortest return route over the traversal roadmap: attaches `current` and
/// `start` to their nearest vertices (throws std::invalid_argument when
/// either lies farther than 1 m from every vertex), drops edges that fail
/// re-validation against `final_map`, and returns the vertex poses from the
/// current end to the start end. Empty when both attach to the same vertex.
/// Throws std::runtime_error when no valid route exists.
std::vector<Pose> homing_path(const RoadmapGraph& global_roadmap,
                              const Pose& current, const Pose& start,
                              const VoxelGrid& final_map, double robot_radius);

/// Everything replay recomputes from a mission log, with the logged values
/// alongside for comparison. Doubles compare by their exact text form.
struct ReplayStats {
  double delta = 10.0;
  double rpe = std::numeric_limits<double>::quiet_NaN();
  double homing_error_est = 0.0;
  double total_gain = 0.0;
  std::vector<double> plan_scores;  // recomputed discounted-gain path scores
  long covered = -1;                // -1 when no inspection phase was logged
  long uncoverable = -1;
  double tour_length = std::numeric_limits<double>::quiet_NaN();
  long pose_records = 0;
  bool matches_log = false;  // recomputed values equal the logged stats block
  std::vector<std::string> summary;  // printable report lines
};

/// Re-derives scores, gain totals, coverage numbers, the homing error and
/// RPE at `delta` from a mission log alone. Corrupt records raise ParseError
/// with the offending line number; truncated files name the last valid line.
ReplayStats replay_log(const std::string& path, double delta = 10.0);

/// Plans inspection over a saved occupancy grid (map.bin) without running a
/// mission: viewpoints, greedy cover, tour, coverage report + edge list under
/// out_dir. Returns a process exit code (kExitOk / kExitPlannerStuck).
int plan_inspection(const MissionConfig& cfg, const std::string& map_path,
                    const std::string& out_dir);

/// Share of ground-truth free voxels reachable from `start` (6-connected
/// flood fill over free cell centers) that `map` has confirmed free.
/// The map must have the same dims/origin as for_bounds(world.bounds, ...).
double mapped_reachable_fraction(const World& world, const VoxelGrid& map,
                                 const Vec3& start);

}  // namespace nautilus
