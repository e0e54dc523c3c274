#include "nautilus/mission.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nautilus/textio.hpp"

namespace nautilus {
namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
// Smallest timestamp bump that keeps log records strictly increasing.
constexpr double kTimeBump = 9.5367431640625e-07;  // 2^-20
constexpr double kAttachRadius = 1.0;
constexpr double kLeafOffset = 0.7;
constexpr long kLegTickLimit = 8000;
constexpr const char* kLogHeader = "nautilus_mission_log 1";

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

void ensure(bool ok, const std::string& msg) {
  if (!ok) throw MissionConfigError(msg);
}

World resolve_world(const std::string& name) {
  if (name == "tank") return make_tank_world();
  if (name == "box") return make_box_world();
  try {
    return load_world(name);
  } catch (const std::exception& e) {
    throw MissionConfigError("world '" + name + "': " + e.what());
  }
}

CameraRig resolve_rig(const std::string& name) {
  if (name == "default") return make_default_rig();
  try {
    return load_rig(name);
  } catch (const std::exception& e) {
    throw MissionConfigError("rig '" + name + "': " + e.what());
  }
}

MissionConfig defaults_for(const std::string& world_name) {
  MissionConfig cfg;
  cfg.world = world_name;
  cfg.sensor.mount = forward_mount();
  if (world_name == "box") {
    cfg.start = Pose::from_xyz_yaw(1.5, 1.5, 0.7, 0.0);
    cfg.survey_z = 1.2;
    cfg.max_ve_iterations = 40;
    cfg.exploration.local_half_extents = Vec3(2.5, 2.5, 0.8);
    cfg.exploration.n_samples = 300;
    cfg.inspection.grid_pitch = 0.5;
  } else {
    cfg.start = Pose::from_xyz_yaw(2.0, 2.0, 1.0, 0.0);
    cfg.survey_z = 2.0;
    cfg.max_ve_iterations = 60;
    cfg.exploration.local_half_extents = Vec3(5.0, 5.0, 1.2);
    cfg.exploration.n_samples = 400;
    cfg.inspection.grid_pitch = 0.75;
  }
  return cfg;
}

void validate_numeric(const MissionConfig& cfg) {
  ensure(cfg.tick_rate > 0.0 && cfg.tick_rate <= 1000.0, "tick_rate out of range");
  ensure(cfg.speed > 0.0, "speed must be positive");
  ensure(cfg.acceptance_radius > 0.0, "acceptance_radius must be positive");
  ensure(cfg.yaw_rate_max > 0.0, "yaw_rate_max must be positive");
  ensure(cfg.yaw_accept > 0.0, "yaw_accept must be positive");
  ensure(cfg.voxel_size > 0.0, "voxel_size must be positive");
  ensure(cfg.accel_psd > 0.0, "accel_psd must be positive");
  ensure(cfg.sensor_decimation >= 1, "sensor_decimation must be >= 1");
  ensure(cfg.max_ve_iterations >= 1, "max_ve_iterations must be >= 1");
  ensure(cfg.ve_retries >= 0, "ve_retries must be >= 0");
  ensure(cfg.ve_expansion >= 1.0, "ve_expansion must be >= 1");
  ensure(cfg.sensor.rows >= 2 && cfg.sensor.cols >= 2, "sensor grid too small");
  ensure(cfg.sensor.h_fov > 0.0 && cfg.sensor.h_fov < kPi, "sensor h_fov out of range");
  ensure(cfg.sensor.v_fov > 0.0 && cfg.sensor.v_fov < kPi, "sensor v_fov out of range");
  ensure(cfg.sensor.range_max > 0.0, "sensor range_max must be positive");
  const ExplorationConfig& e = cfg.exploration;
  ensure(e.local_half_extents.minCoeff() > 0.0, "exploration half_extents must be positive");
  ensure(e.n_samples >= 1, "exploration n_samples must be >= 1");
  ensure(e.d_obs > 0.0, "exploration d_obs must be positive");
  ensure(e.eta >= 0.0 && e.eta <= 1.0, "exploration eta must lie in [0, 1]");
  ensure(e.robot_radius > 0.0, "exploration robot_radius must be positive");
  ensure(e.lambda >= 0.0, "exploration lambda must be >= 0");
  ensure(e.fov_range > 0.0, "exploration fov_range must be positive");
  ensure(e.k_neighbors >= 1, "exploration k_neighbors must be >= 1");
  const InspectionConfig& i = cfg.inspection;
  ensure(i.r_max > 0.0, "inspection r_max must be positive");
  ensure(i.grid_pitch > 0.0 && i.grid_pitch <= i.r_max,
         "inspection grid_pitch must lie in (0, r_max]");
  ensure(i.theta_inc_max > 0.0 && i.theta_inc_max <= kPi / 2,
         "inspection theta_inc_max must lie in (0, pi/2]");
  ensure(i.robot_radius > 0.0, "inspection robot_radius must be positive");
  ensure(i.k_neighbors >= 1, "inspection k_neighbors must be >= 1");
  ensure(i.n_bridge_attempts >= 0, "inspection n_bridge_attempts must be >= 0");
  const VelocitySensorConfig& v = cfg.velocity_sensor;
  ensure(v.sigma >= 0.0, "velocity sigma must be >= 0");
  ensure(v.depth_sigma >= 0.0, "depth_sigma must be >= 0");
  ensure(v.blackout_period >= 0.0, "blackout_period must be >= 0");
  ensure(v.blackout_duration >= 0.0, "blackout_duration must be >= 0");
  ensure(v.blackout_inflation >= 1.0, "blackout_inflation must be >= 1");
}

bool sphere_free_in_world(const World& w, const Vec3& c, double r) {
  const int n = 2;
  for (int ix = -n; ix <= n; ++ix)
    for (int iy = -n; iy <= n; ++iy)
      for (int iz = -n; iz <= n; ++iz) {
        const Vec3 o(ix * r / n, iy * r / n, iz * r / n);
        if (o.norm() > r + 1e-12) continue;
        if (w.point_in_solid(c + o)) return false;
      }
  return true;
}

/// Scripted initial survey: a clover of four offset points around the dive
/// target, each visited with a full turn so the surroundings of the start
/// column become mapped from off-axis poses.
std::vector<Vec3> init_pattern(const MissionConfig& cfg) {
  const Vec3 s = cfg.start.translation;
  const Vec3 sv(s.x(), s.y(), cfg.survey_z);
  return {sv,
          sv + Vec3(kLeafOffset, 0, 0),
          sv + Vec3(0, kLeafOffset, 0),
          sv + Vec3(-kLeafOffset, 0, 0),
          sv + Vec3(0, -kLeafOffset, 0)};
}

void validate_scenario(const MissionConfig& cfg, const World& world) {
  const double r = cfg.exploration.robot_radius;
  const Vec3 s = cfg.start.translation;
  ensure(world.bounds.contains(s), "start pose outside the world bounds");
  ensure(!world.point_in_solid(s), "start pose inside a solid");
  ensure(cfg.survey_z > world.bounds.min.z() && cfg.survey_z < world.bounds.max.z(),
         "survey_z outside the world bounds");
  std::vector<Vec3> pts = init_pattern(cfg);
  pts.insert(pts.begin(), s);
  for (const Vec3& p : pts) {
    ensure(world.bounds.contains(p), "initial survey pattern leaves the world bounds");
    ensure(sphere_free_in_world(world, p, r),
           "start area too close to structure for the initial survey pattern");
  }
  // legs: start -> dive point -> leaves -> back to the dive point
  std::vector<std::pair<Vec3, Vec3>> legs;
  legs.emplace_back(pts[0], pts[1]);
  for (size_t k = 2; k < pts.size(); ++k) legs.emplace_back(pts[k - 1], pts[k]);
  legs.emplace_back(pts.back(), pts[1]);
  for (const auto& [a, b] : legs) {
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.1)));
    for (int k = 0; k <= steps; ++k) {
      const Vec3 p = a + (b - a) * (static_cast<double>(k) / steps);
      ensure(sphere_free_in_world(world, p, r),
             "initial survey pattern crosses a structure");
    }
  }
}

// ---------------------------------------------------------------------------
// config file I/O

void check_keys(const ojson& j, const std::vector<std::string>& allowed,
                const std::string& scope) {
  for (const auto& it : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw MissionConfigError("unknown config key '" + scope + it.key() + "'");
  }
}

Vec3 parse_vec3(const ojson& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw MissionConfigError(what + " must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

MissionConfig default_mission_config(const std::string& world_name) {
  ensure(world_name == "tank" || world_name == "box",
         "no default configuration for world '" + world_name + "'");
  return defaults_for(world_name);
}

MissionConfig load_mission_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissionConfigError("cannot open config '" + path + "'");
  ojson j;
  try {
    j = ojson::parse(is);
  } catch (const std::exception& e) {
    throw MissionConfigError("config parse: " + std::string(e.what()));
  }
  MissionConfig cfg;
  try {
    check_keys(j, {"world", "rig", "seed", "tick_rate", "speed", "acceptance_radius",
                   "yaw_rate_max", "yaw_accept", "voxel_size", "accel_psd",
                   "sensor_decimation", "start", "survey_z", "max_ve_iterations",
                   "ve_retries", "ve_expansion", "sensor", "exploration",
                   "inspection", "velocity_sensor"},
               "");
    cfg = defaults_for(j.value("world", std::string("tank")));
    cfg.rig = j.value("rig", cfg.rig);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.tick_rate = j.value("tick_rate", cfg.tick_rate);
    cfg.speed = j.value("speed", cfg.speed);
    cfg.acceptance_radius = j.value("acceptance_radius", cfg.acceptance_radius);
    cfg.yaw_rate_max = j.value("yaw_rate_max", cfg.yaw_rate_max);
    cfg.yaw_accept = j.value("yaw_accept", cfg.yaw_accept);
    cfg.voxel_size = j.value("voxel_size", cfg.voxel_size);
    cfg.accel_psd = j.value("accel_psd", cfg.accel_psd);
    cfg.sensor_decimation = j.value("sensor_decimation", cfg.sensor_decimation);
    cfg.survey_z = j.value("survey_z", cfg.survey_z);
    cfg.max_ve_iterations = j.value("max_ve_iterations", cfg.max_ve_iterations);
    cfg.ve_retries = j.value("ve_retries", cfg.ve_retries);
    cfg.ve_expansion = j.value("ve_expansion", cfg.ve_expansion);
    if (j.contains("start")) {
      const auto& a = j.at("start");
      if (!a.is_array() || a.size() != 4)
        throw MissionConfigError("start must be [x, y, z, yaw]");
      cfg.start = Pose::from_xyz_yaw(a[0].get<double>(), a[1].get<double>(),
                                     a[2].get<double>(), a[3].get<double>());
    }
    if (j.contains("sensor")) {
      const auto& s = j.at("sensor");
      check_keys(s, {"h_fov_deg", "v_fov_deg", "range_max", "rows", "cols"}, "sensor.");
      if (s.contains("h_fov_deg")) cfg.sensor.h_fov = deg2rad(s.at("h_fov_deg").get<double>());
      if (s.contains("v_fov_deg")) cfg.sensor.v_fov = deg2rad(s.at("v_fov_deg").get<double>());
      cfg.sensor.range_max = s.value("range_max", cfg.sensor.range_max);
      cfg.sensor.rows = s.value("rows", cfg.sensor.rows);
      cfg.sensor.cols = s.value("cols", cfg.sensor.cols);
    }
    if (j.contains("exploration")) {
      const auto& e = j.at("exploration");
      check_keys(e, {"half_extents", "n_samples", "d_obs", "eta", "robot_radius",
                     "lambda", "fov_range", "k_neighbors"},
                 "exploration.");
      if (e.contains("half_extents"))
        cfg.exploration.local_half_extents = parse_vec3(e.at("half_extents"),
                                                        "exploration.half_extents");
      cfg.exploration.n_samples = e.value("n_samples", cfg.exploration.n_samples);
      cfg.exploration.d_obs = e.value("d_obs", cfg.exploration.d_obs);
      cfg.exploration.eta = e.value("eta", cfg.exploration.eta);
      cfg.exploration.robot_radius = e.value("robot_radius", cfg.exploration.robot_radius);
      cfg.exploration.lambda = e.value("lambda", cfg.exploration.lambda);
      cfg.exploration.fov_range = e.value("fov_range", cfg.exploration.fov_range);
      cfg.exploration.k_neighbors = e.value("k_neighbors", cfg.exploration.k_neighbors);
    }
    if (j.contains("inspection")) {
      const auto& i = j.at("inspection");
      check_keys(i, {"r_max", "grid_pitch", "theta_inc_max_deg", "robot_radius",
                     "k_neighbors", "n_bridge_attempts"},
                 "inspection.");
      cfg.inspection.r_max = i.value("r_max", cfg.inspection.r_max);
      cfg.inspection.grid_pitch = i.value("grid_pitch", cfg.inspection.grid_pitch);
      if (i.contains("theta_inc_max_deg"))
        cfg.inspection.theta_inc_max = deg2rad(i.at("theta_inc_max_deg").get<double>());
      cfg.inspection.robot_radius = i.value("robot_radius", cfg.inspection.robot_radius);
      cfg.inspection.k_neighbors = i.value("k_neighbors", cfg.inspection.k_neighbors);
      cfg.inspection.n_bridge_attempts =
          i.value("n_bridge_attempts", cfg.inspection.n_bridge_attempts);
    }
    if (j.contains("velocity_sensor")) {
      const auto& v = j.at("velocity_sensor");
      check_keys(v, {"sigma", "depth_sigma", "blackout_period", "blackout_duration",
                     "blackout_inflation"},
                 "velocity_sensor.");
      cfg.velocity_sensor.sigma = v.value("sigma", cfg.velocity_sensor.sigma);
      cfg.velocity_sensor.depth_sigma = v.value("depth_sigma", cfg.velocity_sensor.depth_sigma);
      cfg.velocity_sensor.blackout_period =
          v.value("blackout_period", cfg.velocity_sensor.blackout_period);
      cfg.velocity_sensor.blackout_duration =
          v.value("blackout_duration", cfg.velocity_sensor.blackout_duration);
      cfg.velocity_sensor.blackout_inflation =
          v.value("blackout_inflation", cfg.velocity_sensor.blackout_inflation);
    }
  } catch (const MissionConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw MissionConfigError("config: " + std::string(e.what()));
  }
  validate_numeric(cfg);
  const World world = resolve_world(cfg.world);
  resolve_rig(cfg.rig);
  validate_scenario(cfg, world);
  return cfg;
}

void save_mission_config(const MissionConfig& cfg, const std::string& path) {
  ojson j;
  j["world"] = cfg.world;
  j["rig"] = cfg.rig;
  j["seed"] = cfg.seed;
  j["tick_rate"] = cfg.tick_rate;
  j["speed"] = cfg.speed;
  j["acceptance_radius"] = cfg.acceptance_radius;
  j["yaw_rate_max"] = cfg.yaw_rate_max;
  j["yaw_accept"] = cfg.yaw_accept;
  j["voxel_size"] = cfg.voxel_size;
  j["accel_psd"] = cfg.accel_psd;
  j["sensor_decimation"] = cfg.sensor_decimation;
  j["start"] = {cfg.start.translation.x(), cfg.start.translation.y(),
                cfg.start.translation.z(), cfg.start.yaw()};
  j["survey_z"] = cfg.survey_z;
  j["max_ve_iterations"] = cfg.max_ve_iterations;
  j["ve_retries"] = cfg.ve_retries;
  j["ve_expansion"] = cfg.ve_expansion;
  j["sensor"] = {{"h_fov_deg", cfg.sensor.h_fov * 180.0 / kPi},
                 {"v_fov_deg", cfg.sensor.v_fov * 180.0 / kPi},
                 {"range_max", cfg.sensor.range_max},
                 {"rows", cfg.sensor.rows},
                 {"cols", cfg.sensor.cols}};
  j["exploration"] = {{"half_extents",
                       {cfg.exploration.local_half_extents.x(),
                        cfg.exploration.local_half_extents.y(),
                        cfg.exploration.local_half_extents.z()}},
                      {"n_samples", cfg.exploration.n_samples},
                      {"d_obs", cfg.exploration.d_obs},
                      {"eta", cfg.exploration.eta},
                      {"robot_radius", cfg.exploration.robot_radius},
                      {"lambda", cfg.exploration.lambda},
                      {"fov_range", cfg.exploration.fov_range},
                      {"k_neighbors", cfg.exploration.k_neighbors}};
  j["inspection"] = {{"r_max", cfg.inspection.r_max},
                     {"grid_pitch", cfg.inspection.grid_pitch},
                     {"theta_inc_max_deg", cfg.inspection.theta_inc_max * 180.0 / kPi},
                     {"robot_radius", cfg.inspection.robot_radius},
                     {"k_neighbors", cfg.inspection.k_neighbors},
                     {"n_bridge_attempts", cfg.inspection.n_bridge_attempts}};
  j["velocity_sensor"] = {{"sigma", cfg.velocity_sensor.sigma},
                          {"depth_sigma", cfg.velocity_sensor.depth_sigma},
                          {"blackout_period", cfg.velocity_sensor.blackout_period},
                          {"blackout_duration", cfg.velocity_sensor.blackout_duration},
                          {"blackout_inflation", cfg.velocity_sensor.blackout_inflation}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissionConfigError("cannot write config '" + path + "'");
  os << j.dump(2) << "\n";
}

namespace {

// ---------------------------------------------------------------------------
// mission runtime

struct AbortMission {
  int code;
  std::string reason;
};

class MissionLogger {
 public:
  void put(double t, const std::string& type, const std::string& payload) {
    if (has_last_ && t <= last_t_) t = last_t_ + kTimeBump;
    last_t_ = t;
    has_last_ = true;
    buf_ << type << ' ' << fmt_double(t);
    if (!payload.empty()) buf_ << ' ' << payload;
    buf_ << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    os << kLogHeader << '\n' << buf_.str();
  }

 private:
  std::ostringstream buf_;
  double last_t_ = 0.0;
  bool has_last_ = false;
};

std::string pose_fields(const Pose& p) {
  return fmt_double(p.translation.x()) + " " + fmt_double(p.translation.y()) + " " +
         fmt_double(p.translation.z()) + " " + fmt_double(p.yaw());
}

struct Runtime {
  const MissionConfig& cfg;
  World world;
  CameraRig rig;
  VoxelGrid map;
  Aabb grid_box;
  double dt;
  long max_ticks;
  MissionObserver* obs;
  std::mt19937 plan_rng;
  std::mt19937 meas_rng;
  std::normal_distribution<double> gauss{0.0, 1.0};
  Pose true_pose;
  EstimatorState est;
  double t = 0.0;
  long tick = 0;
  std::string mode = "INIT";
  RoadmapGraph roadmap;
  int current_vertex = 0;
  std::vector<Vec3> traj_true, traj_est;
  MissionLogger log;
  std::ostringstream csv;
  double total_gain = 0.0;
  int ve_iterations = 0;
  bool verbose = false;

  Runtime(const MissionConfig& c, World w, CameraRig r, MissionObserver* o, long mt)
      : cfg(c),
        world(std::move(w)),
        rig(std::move(r)),
        map(VoxelGrid::for_bounds(world.bounds, c.voxel_size)),
        dt(1.0 / c.tick_rate),
        max_ticks(mt),
        obs(o),
        plan_rng(static_cast<uint32_t>(c.seed)),
        meas_rng(static_cast<uint32_t>(c.seed) ^ 0x9e3779b9u),
        true_pose(c.start) {
    grid_box = Aabb{map.origin(),
                    map.origin() + map.voxel_size() * map.dims().cast<double>()};
    est.position = c.start.translation;
    est.velocity = Vec3::Zero();
    est.covariance = 1e-4 * Mat6::Identity();
  }

  Pose est_pose() const {
    Pose p;
    p.rotation = true_pose.rotation;
    p.translation = est.position;
    return p;
  }
};

void set_mode(Runtime& rt, const std::string& to, const std::string& cause) {
  rt.log.put(rt.t, "mode", to + " " + cause);
  rt.mode = to;
  if (rt.verbose)
    std::cerr << "[nautilus] t=" << rt.t << " mode " << to << " (" << cause << ")\n";
}

double velocity_sigma(const Runtime& rt) {
  const auto& vs = rt.cfg.velocity_sensor;
  if (vs.blackout_period > 0.0) {
    const double phase = std::fmod(rt.t, vs.blackout_period);
    if (phase >= vs.blackout_period - vs.blackout_duration)
      return vs.sigma * vs.blackout_inflation;
  }
  return vs.sigma;
}

void do_tick(Runtime& rt, const Pose& wp, bool align_yaw) {
  const MissionConfig& cfg = rt.cfg;

  // controller works in the estimated frame
  const Vec3 to_wp = wp.translation - rt.est.position;
  const double dist = to_wp.norm();
  Vec3 v_world = Vec3::Zero();
  if (dist > 1e-12) v_world = std::min(cfg.speed, dist / rt.dt) * (to_wp / dist);
  const double yaw_now = rt.true_pose.yaw();
  double yaw_cmd = yaw_now;
  if (align_yaw && dist <= 2.0 * cfg.acceptance_radius) {
    yaw_cmd = wp.yaw();
  } else if (std::hypot(to_wp.x(), to_wp.y()) > 0.05) {
    yaw_cmd = std::atan2(to_wp.y(), to_wp.x());
  } else if (align_yaw) {
    yaw_cmd = wp.yaw();
  }
  const double yaw_err = wrap_angle(yaw_cmd - yaw_now);
  const double yaw_rate = std::clamp(yaw_err / rt.dt, -cfg.yaw_rate_max, cfg.yaw_rate_max);
  const Vec3 v_body_cmd = rt.true_pose.rotation.inverse() * v_world;

  // physics
  const Vec3 p_before = rt.true_pose.translation;
  rt.true_pose = step_robot(rt.true_pose, v_body_cmd, yaw_rate, rt.dt);
  rt.true_pose.rotation.normalize();
  ++rt.tick;
  rt.t = rt.tick * rt.dt;

  // aiding measurements: realized mean velocity in the new body frame
  const Vec3 v_mean_world = (rt.true_pose.translation - p_before) / rt.dt;
  const double sig = velocity_sigma(rt);
  Vec3 noise;
  noise.x() = rt.gauss(rt.meas_rng);
  noise.y() = rt.gauss(rt.meas_rng);
  noise.z() = rt.gauss(rt.meas_rng);
  VelocityMeasurement vm;
  vm.v_body = rt.true_pose.rotation.inverse() * v_mean_world + sig * noise;
  vm.cov = std::max(sig * sig, 1e-12) * Mat3::Identity();
  vm.stamp = rt.t;
  DepthMeasurement dm;
  const double dsig = cfg.velocity_sensor.depth_sigma;
  dm.depth = rt.true_pose.translation.z() + dsig * rt.gauss(rt.meas_rng);
  dm.variance = std::max(dsig * dsig, 1e-12);
  dm.stamp = rt.t;
  rt.est = predict(rt.est, rt.dt, cfg.accel_psd);
  rt.est = update_velocity(rt.est, vm, rt.true_pose.rotation);
  rt.est = update_depth(rt.est, dm);

  // sense at the true pose, integrate at the estimated pose
  if (rt.tick % cfg.sensor_decimation == 0) {
    const auto scan = render_depth(rt.world, cfg.sensor, rt.true_pose.compose(cfg.sensor.mount));
    rt.map.integrate_cloud(scan.cloud, rt.est_pose().compose(cfg.sensor.mount),
                           cfg.sensor.range_max);
  }

  const Pose ep = rt.est_pose();
  rt.log.put(rt.t, "pose", pose_fields(rt.true_pose) + " " + pose_fields(ep));
  rt.traj_true.push_back(rt.true_pose.translation);
  rt.traj_est.push_back(rt.est.position);
  rt.csv << fmt_double(rt.t) << ',' << fmt_double(rt.true_pose.translation.x()) << ','
         << fmt_double(rt.true_pose.translation.y()) << ','
         << fmt_double(rt.true_pose.translation.z()) << ','
         << fmt_double(rt.true_pose.yaw()) << ',' << fmt_double(rt.est.position.x())
         << ',' << fmt_double(rt.est.position.y()) << ','
         << fmt_double(rt.est.position.z()) << ',' << fmt_double(ep.yaw()) << '\n';
  if (rt.obs) rt.obs->on_tick(rt.t, rt.true_pose, ep);

  // invariants against ground truth
  if (!rt.world.bounds.contains(rt.true_pose.translation))
    throw AbortMission{kExitCollision, "true position left the permitted volume"};
  if (rt.world.point_in_solid(rt.true_pose.translation))
    throw AbortMission{kExitCollision, "true position entered a solid"};
  if (rt.max_ticks >= 0 && rt.tick >= rt.max_ticks)
    throw AbortMission{kExitTickBudget, "tick budget exhausted"};
}

void drive_to(Runtime& rt, const Pose& wp, bool align_yaw, double accept = -1.0) {
  const double acc = accept > 0.0 ? accept : rt.cfg.acceptance_radius;
  const long leg_start = rt.tick;
  while (true) {
    const double dist = (wp.translation - rt.est.position).norm();
    const bool pos_ok = dist <= acc;
    const bool yaw_ok =
        !align_yaw ||
        std::abs(wrap_angle(wp.yaw() - rt.true_pose.yaw())) <= rt.cfg.yaw_accept;
    if (pos_ok && yaw_ok) return;
    if (rt.tick - leg_start > kLegTickLimit)
      throw AbortMission{kExitTickBudget, "waypoint not reached within the leg tick limit"};
    do_tick(rt, wp, align_yaw);
  }
}

void spin_in_place(Runtime& rt) {
  const Vec3 p = rt.est.position;
  double yaw = rt.true_pose.yaw();
  for (int k = 0; k < 4; ++k) {
    yaw = wrap_angle(yaw + kPi / 2);
    drive_to(rt, Pose::from_xyz_yaw(p.x(), p.y(), p.z(), yaw), true);
  }
}

int add_roadmap_vertex(Runtime& rt, const Pose& pose, int link_to) {
  if (link_to >= 0) {
    const double d =
        (pose.translation - rt.roadmap.vertices[link_to].pose.translation).norm();
    if (d < 1e-6) return link_to;
  }
  RoadmapVertex v;
  v.pose = pose;
  rt.roadmap.vertices.push_back(v);
  rt.roadmap.adjacency.emplace_back();
  const int idx = static_cast<int>(rt.roadmap.vertices.size()) - 1;
  if (link_to >= 0) rt.roadmap.add_edge(link_to, idx);
  return idx;
}

void run_init(Runtime& rt) {
  rt.log.put(rt.t, "mode", "INIT start");
  RoadmapVertex v0;
  v0.pose = rt.cfg.start;
  rt.roadmap.vertices.push_back(v0);
  rt.roadmap.adjacency.emplace_back();
  rt.current_vertex = 0;

  // scripted legs use a tight acceptance so the spins happen where planned;
  // the off-axis leaves exist to see under/over the survey column
  const double acc = std::min(0.05, rt.cfg.acceptance_radius);
  const auto pts = init_pattern(rt.cfg);
  const double yaw0 = rt.cfg.start.yaw();
  const Pose survey = Pose::from_xyz_yaw(pts[0].x(), pts[0].y(), pts[0].z(), yaw0);
  drive_to(rt, survey, false, acc);
  const int sv = add_roadmap_vertex(rt, survey, 0);
  int prev = sv;
  for (size_t k = 1; k < pts.size(); ++k) {
    const Pose leaf = Pose::from_xyz_yaw(pts[k].x(), pts[k].y(), pts[k].z(), yaw0);
    drive_to(rt, leaf, false, acc);
    prev = add_roadmap_vertex(rt, leaf, prev);
    spin_in_place(rt);
  }
  drive_to(rt, survey, false, acc);
  rt.roadmap.add_edge(prev, sv);
  rt.current_vertex = sv;
}

void run_ve(Runtime& rt) {
  set_mode(rt, "VE", "descent_complete");
  const MissionConfig& cfg = rt.cfg;
  int zero_streak = 0;
  bool completed = false;
  for (int iter = 1; iter <= cfg.max_ve_iterations; ++iter) {
    const VoxelGrid snap = rt.map.snapshot();
    // plan from the roadmap vertex the robot is parked at: its clearance ball
    // is already mapped free, unlike the ball around the raw estimate
    const Pose root = rt.roadmap.vertices[static_cast<size_t>(rt.current_vertex)].pose;
    ExplorationConfig ec = cfg.exploration;
    RoadmapGraph graph;
    bool have_graph = false;
    for (int attempt = 0; attempt <= cfg.ve_retries && !have_graph; ++attempt) {
      if (attempt > 0) {
        ec.local_half_extents *= cfg.ve_expansion;
        rt.log.put(rt.t, "warn",
                   "exploration retry " + std::to_string(attempt) +
                       " with an expanded sampling box");
      }
      const auto samples = sample_vertices(snap, rt.rig, root, ec, rt.grid_box, rt.plan_rng);
      if (samples.empty()) continue;
      try {
        graph = build_graph(samples, root, snap, ec.k_neighbors, ec.robot_radius);
        have_graph = true;
      } catch (const PlannerStuck&) {
      }
    }
    if (!have_graph)
      throw AbortMission{kExitPlannerStuck,
                         "exploration roadmap construction failed after retries"};
    const auto sel = select_best_path(graph, snap, cfg.sensor, ec);
    ++rt.ve_iterations;
    if (rt.obs) rt.obs->on_ve_iteration(iter, snap, graph, sel ? &*sel : nullptr);
    const long terminal = sel ? sel->terminal : -1;
    const double score = sel ? sel->score : 0.0;
    rt.log.put(rt.t, "ve_plan",
               std::to_string(iter) + " " + std::to_string(terminal) + " " +
                   fmt_double(score) + " " + std::to_string(graph.vertices.size()));
    if (sel) {
      for (size_t k = 0; k < sel->vertex_order.size(); ++k) {
        const auto& v = graph.vertices[static_cast<size_t>(sel->vertex_order[k])];
        rt.log.put(rt.t, "ve_vertex",
                   std::to_string(iter) + " " + std::to_string(k) + " " +
                       fmt_double(v.gain) + " " + fmt_double(v.path_cost) + " " +
                       pose_fields(v.pose));
        rt.total_gain += v.gain;
      }
    }
    const auto mc = rt.map.counts();
    rt.log.put(rt.t, "map",
               std::to_string(mc.unknown) + " " + std::to_string(mc.free) + " " +
                   std::to_string(mc.occupied));
    if (rt.verbose)
      std::cerr << "[nautilus] ve iteration " << iter << " terminal " << terminal
                << " score " << score << "\n";

    if (!sel) {
      // all gains zero; completion needs two such iterations in a row
      if (++zero_streak >= 2) {
        completed = true;
        break;
      }
      // a full turn can expose gain at yaws never sensed from this vertex
      spin_in_place(rt);
      continue;
    }
    zero_streak = 0;
    if (sel->terminal == 0) {
      // staying put is the best plan: harvest the root's own frustum
      spin_in_place(rt);
      continue;
    }
    int prev = add_roadmap_vertex(rt, root, rt.current_vertex);
    for (size_t k = 1; k < sel->vertex_order.size(); ++k) {
      const Pose& p = graph.vertices[static_cast<size_t>(sel->vertex_order[k])].pose;
      const int g_idx = add_roadmap_vertex(rt, p, prev);
      drive_to(rt, p, k + 1 == sel->vertex_order.size());
      prev = g_idx;
    }
    rt.current_vertex = prev;
    // a full turn at the new vertex thickens the mapped shell around it,
    // which keeps the next sampling round supplied with clearance balls
    spin_in_place(rt);
  }
  if (!completed) rt.log.put(rt.t, "warn", "exploration iteration budget reached");
  rt.log.put(rt.t, "ve_done", std::to_string(rt.ve_iterations));
}

struct InspectionPlan {
  std::vector<Viewpoint> viewpoints;
  InspectionGraph ig;
  CoverSelection cover;  // indices refer to `viewpoints`
  Tour tour;
  int surface_total = 0;
  CoverageReport report;
};

/// Shared inspection pipeline: viewpoints, reachability, greedy cover over
/// the reachable ones, tour. Throws std::runtime_error when planning cannot
/// proceed (no viewpoints, none reachable, unreachable tour stop).
InspectionPlan plan_inspection_impl(const VoxelGrid& map, const CameraRig& rig,
                                    const InspectionConfig& icfg, const Aabb& bounds,
                                    const RoadmapGraph& transit, const Pose& tour_start,
                                    std::mt19937& rng) {
  InspectionPlan out;
  out.viewpoints = generate_viewpoints(map, rig, icfg, bounds);
  out.ig = connect_viewpoints(out.viewpoints, map, transit, icfg, rng);
  const auto surface = map.extract_surface();
  out.surface_total = static_cast<int>(surface.size());

  // only reachable viewpoints can contribute coverage
  std::vector<Viewpoint> usable;
  std::vector<int> usable_idx;
  for (size_t i = 0; i < out.viewpoints.size(); ++i) {
    if (out.ig.viewpoint_vertex[i] >= 0) {
      usable.push_back(out.viewpoints[i]);
      usable_idx.push_back(static_cast<int>(i));
    }
  }
  if (usable.empty()) throw std::runtime_error("no reachable inspection viewpoint");
  out.cover = select_cover(usable, out.surface_total);
  for (int& s : out.cover.selected) s = usable_idx[static_cast<size_t>(s)];
  for (int& a : out.cover.assignment)
    if (a >= 0) a = usable_idx[static_cast<size_t>(a)];

  std::vector<int> stops;
  for (int vp : out.cover.selected)
    stops.push_back(out.ig.viewpoint_vertex[static_cast<size_t>(vp)]);
  out.tour = plan_tour(stops, out.ig.graph, tour_start);

  out.report.surface_total = out.surface_total;
  out.report.covered = 0;
  for (int a : out.cover.assignment)
    if (a >= 0) ++out.report.covered;
  out.report.uncoverable = static_cast<int>(out.cover.uncoverable.size());
  out.report.tour_length = out.tour.length;
  for (int vp : out.cover.selected) {
    int n = 0;
    for (int a : out.cover.assignment)
      if (a == vp) ++n;
    out.report.per_viewpoint.emplace_back(vp, n);
  }
  return out;
}

struct GviResult {
  bool ran = false;
  InspectionPlan plan;
};

void run_gvi(Runtime& rt, GviResult& gr) {
  set_mode(rt, "GVI", "exploration_complete");
  const VoxelGrid snap = rt.map.snapshot();
  InspectionPlan plan;
  try {
    plan = plan_inspection_impl(snap, rt.rig, rt.cfg.inspection, rt.grid_box,
                                rt.roadmap, rt.est_pose(), rt.plan_rng);
  } catch (const std::exception& e) {
    throw AbortMission{kExitPlannerStuck, std::string("inspection planning: ") + e.what()};
  }
  for (const auto& w : plan.ig.warnings) rt.log.put(rt.t, "warn", w);
  if (rt.obs) rt.obs->on_gvi_plan(snap, plan.viewpoints, plan.ig, plan.cover, plan.tour);
  rt.log.put(rt.t, "gvi_plan",
             std::to_string(plan.surface_total) + " " +
                 std::to_string(plan.report.covered) + " " +
                 std::to_string(plan.report.uncoverable) + " " +
                 std::to_string(plan.cover.selected.size()) + " " +
                 fmt_double(plan.tour.length) + " " + fmt_double(plan.tour.nn_length));
  if (rt.verbose)
    std::cerr << "[nautilus] gvi: " << plan.cover.selected.size() << " stops, tour "
              << plan.tour.length << " m\n";

  std::map<int, int> vertex_to_vp;
  for (size_t i = 0; i < plan.ig.viewpoint_vertex.size(); ++i)
    if (plan.ig.viewpoint_vertex[i] >= 0)
      vertex_to_vp[plan.ig.viewpoint_vertex[i]] = static_cast<int>(i);
  for (size_t k = 0; k < plan.tour.visit_order.size(); ++k) {
    const int vtx = plan.tour.visit_order[k];
    rt.log.put(rt.t, "gvi_stop",
               std::to_string(k) + " " + std::to_string(vertex_to_vp.at(vtx)) + " " +
                   std::to_string(vtx) + " " +
                   pose_fields(plan.ig.graph.vertices[static_cast<size_t>(vtx)].pose));
  }

  std::vector<char> is_stop(plan.ig.graph.vertices.size(), 0);
  for (int v : plan.tour.visit_order) is_stop[static_cast<size_t>(v)] = 1;
  if (!plan.tour.vertex_path.empty()) {
    const Pose& first =
        plan.ig.graph.vertices[static_cast<size_t>(plan.tour.vertex_path[0])].pose;
    if ((first.translation - rt.est.position).norm() > 2.0 * rt.cfg.acceptance_radius)
      rt.log.put(rt.t, "warn", "tour start vertex lies off the current pose");
    int prev = rt.current_vertex;
    for (int v : plan.tour.vertex_path) {
      const Pose& p = plan.ig.graph.vertices[static_cast<size_t>(v)].pose;
      const int g_idx = add_roadmap_vertex(rt, p, prev);
      drive_to(rt, p, is_stop[static_cast<size_t>(v)] != 0);
      prev = g_idx;
    }
    rt.current_vertex = prev;
  }
  gr.ran = true;
  gr.plan = std::move(plan);
}

void run_homing(Runtime& rt, MissionPhases phases) {
  set_mode(rt, "HOMING",
           phases == MissionPhases::kFull ? "inspection_complete" : "exploration_complete");
  const VoxelGrid snap = rt.map.snapshot();
  std::vector<Pose> path;
  try {
    path = homing_path(rt.roadmap, rt.est_pose(), rt.cfg.start, snap,
                       rt.cfg.exploration.robot_radius);
  } catch (const std::exception& e) {
    throw AbortMission{kExitHomingUnreachable, std::string("homing: ") + e.what()};
  }
  double plan_len = 0.0;
  for (size_t k = 1; k < path.size(); ++k)
    plan_len += (path[k].translation - path[k - 1].translation).norm();
  rt.log.put(rt.t, "home_plan",
             std::to_string(path.size()) + " " + fmt_double(plan_len));
  for (const Pose& p : path) drive_to(rt, p, false);
  drive_to(rt, rt.cfg.start, true);
  set_mode(rt, "DONE", "homing_complete");
}

}  // namespace

MissionOutcome run_mission(const MissionConfig& cfg, const std::string& out_dir,
                           MissionObserver* observer, long max_ticks,
                           MissionPhases phases) {
  MissionOutcome out;
  World world;
  CameraRig rig;
  try {
    validate_numeric(cfg);
    world = resolve_world(cfg.world);
    rig = resolve_rig(cfg.rig);
    validate_scenario(cfg, world);
  } catch (const MissionConfigError& e) {
    out.exit_code = kExitConfig;
    out.failure = e.what();
    return out;
  }

  fs::create_directories(out_dir);
  Runtime rt(cfg, std::move(world), std::move(rig), observer, max_ticks);
  rt.verbose = std::getenv("NAUTILUS_VERBOSE") != nullptr;

  rt.log.put(0.0, "meta", "seed " + std::to_string(cfg.seed));
  rt.log.put(0.0, "meta", "world " + cfg.world);
  rt.log.put(0.0, "meta", "rig " + cfg.rig);
  rt.log.put(0.0, "meta", "tick_rate " + fmt_double(cfg.tick_rate));
  rt.log.put(0.0, "meta", "speed " + fmt_double(cfg.speed));
  rt.log.put(0.0, "meta", "lambda " + fmt_double(cfg.exploration.lambda));
  rt.log.put(0.0, "meta", "voxel_size " + fmt_double(cfg.voxel_size));
  rt.log.put(0.0, "meta", "start " + pose_fields(cfg.start));
  rt.csv << "t,true_x,true_y,true_z,true_yaw,est_x,est_y,est_z,est_yaw\n";

  GviResult gvi;
  try {
    run_init(rt);
    run_ve(rt);
    if (phases == MissionPhases::kFull) run_gvi(rt, gvi);
    run_homing(rt, phases);
  } catch (const AbortMission& a) {
    out.exit_code = a.code;
    out.failure = a.reason;
    rt.log.put(rt.t, "warn", "abort: " + a.reason);
  }

  out.ticks = rt.tick;
  out.duration = rt.t;
  out.ve_iterations = rt.ve_iterations;
  out.final_map = rt.map.counts();
  out.total_gain = rt.total_gain;
  out.homing_error_est = (rt.est.position - cfg.start.translation).norm();
  out.homing_error_true = (rt.true_pose.translation - cfg.start.translation).norm();
  out.rpe10 = kNaN;
  double arc = 0.0;
  for (size_t k = 1; k < rt.traj_true.size(); ++k)
    arc += (rt.traj_true[k] - rt.traj_true[k - 1]).norm();
  if (arc >= 10.0) out.rpe10 = rpe_rmse(rt.traj_est, rt.traj_true, 10.0);

  rt.log.put(rt.t, "stats",
             std::to_string(rt.tick) + " " + fmt_double(out.homing_error_est) + " " +
                 fmt_double(out.homing_error_true) + " " + fmt_double(out.rpe10) +
                 " " + fmt_double(out.total_gain));
  rt.log.put(rt.t, "end",
             std::to_string(out.exit_code) + " " +
                 (out.failure.empty() ? std::string("ok") : std::string("aborted")));

  rt.log.save((fs::path(out_dir) / "mission.log").string());
  {
    std::ofstream os(fs::path(out_dir) / "trajectory.csv", std::ios::binary);
    os << rt.csv.str();
  }
  rt.map.save_ply((fs::path(out_dir) / "map.ply").string());
  rt.map.save_binary((fs::path(out_dir) / "map.bin").string());
  save_edge_list(rt.roadmap, (fs::path(out_dir) / "roadmap.txt").string());
  if (gvi.ran) {
    save_coverage_report(gvi.plan.report, (fs::path(out_dir) / "coverage.txt").string());
    out.cover = gvi.plan.cover;
    out.tour = gvi.plan.tour;
    out.surface_total = gvi.plan.surface_total;
  }
  return out;
}

namespace {

/// Sphere fully inside the grid and free of occupied voxels; unknown space is
/// allowed because roadmap edges were collision-free when traversed.
bool sphere_clear_of_occupied(const VoxelGrid& map, const Vec3& center, double radius) {
  const Vec3 r3 = Vec3::Constant(radius);
  const auto lo = map.index_of(center - r3);
  const auto hi = map.index_of(center + r3);
  const double r2 = radius * radius;
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Eigen::Vector3i idx(x, y, z);
        const Vec3 c = map.center_of(idx);
        const Vec3 h = Vec3::Constant(map.voxel_size() / 2.0);
        const Vec3 d = (center - c).cwiseAbs().cwiseMax(h) - h;
        if (d.squaredNorm() > r2) continue;
        if (!map.in_grid(idx)) return false;
        if (map.state(idx) == VoxelState::kOccupied) return false;
      }
  return true;
}

bool edge_clear_of_occupied(const VoxelGrid& map, const Vec3& a, const Vec3& b,
                            double robot_radius) {
  const double len = (b - a).norm();
  if (len < 1e-12) return true;
  const int steps = std::max(1, static_cast<int>(std::ceil(len / (map.voxel_size() / 2.0))));
  for (int k = 0; k <= steps; ++k) {
    const Vec3 p = a + (b - a) * (static_cast<double>(k) / steps);
    if (!sphere_clear_of_occupied(map, p, robot_radius)) return false;
  }
  return true;
}

}  // namespace

std::vector<Pose> homing_path(const RoadmapGraph& global_roadmap, const Pose& current,
                              const Pose& start, const VoxelGrid& final_map,
                              double robot_radius) {
  if (global_roadmap.vertices.empty())
    throw std::invalid_argument("homing roadmap is empty");
  const auto attach = [&](const Vec3& p, const char* what) {
    int best = -1;
    double best_d = kInf;
    for (size_t i = 0; i < global_roadmap.vertices.size(); ++i) {
      const double d = (global_roadmap.vertices[i].pose.translation - p).norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best_d > kAttachRadius)
      throw std::invalid_argument(std::string(what) + " pose not attached to the roadmap");
    return best;
  };
  const int cur_v = attach(current.translation, "current");
  const int start_v = attach(start.translation, "start");
  if (cur_v == start_v) return {};

  RoadmapGraph g;
  g.vertices = global_roadmap.vertices;
  g.adjacency.assign(g.vertices.size(), {});
  for (const auto& [i, j, len] : global_roadmap.edge_list()) {
    const Vec3& a = g.vertices[static_cast<size_t>(i)].pose.translation;
    const Vec3& b = g.vertices[static_cast<size_t>(j)].pose.translation;
    if (!edge_clear_of_occupied(final_map, a, b, robot_radius)) continue;
    g.adjacency[static_cast<size_t>(i)].emplace_back(j, len);
    g.adjacency[static_cast<size_t>(j)].emplace_back(i, len);
  }
  shortest_paths(g, cur_v);
  if (!std::isfinite(g.vertices[static_cast<size_t>(start_v)].path_cost))
    throw std::runtime_error("no valid route to the start on the final map");
  std::vector<Pose> rev;
  for (int v = start_v; v != -1; v = g.vertices[static_cast<size_t>(v)].predecessor)
    rev.push_back(g.vertices[static_cast<size_t>(v)].pose);
  std::reverse(rev.begin(), rev.end());
  return rev;
}

int plan_inspection(const MissionConfig& cfg, const std::string& map_path,
                    const std::string& out_dir) {
  validate_numeric(cfg);
  const CameraRig rig = resolve_rig(cfg.rig);
  VoxelGrid map = [&] {
    try {
      return VoxelGrid::load_binary(map_path);
    } catch (const std::exception& e) {
      throw MissionConfigError("map '" + map_path + "': " + e.what());
    }
  }();
  const Aabb box{map.origin(), map.origin() + map.voxel_size() * map.dims().cast<double>()};
  const Pose root = Pose::from_xyz_yaw(cfg.start.translation.x(), cfg.start.translation.y(),
                                       cfg.survey_z, cfg.start.yaw());
  RoadmapGraph transit;
  RoadmapVertex v0;
  v0.pose = root;
  transit.vertices.push_back(v0);
  transit.adjacency.emplace_back();
  std::mt19937 rng(static_cast<uint32_t>(cfg.seed));
  InspectionPlan plan;
  try {
    plan = plan_inspection_impl(map, rig, cfg.inspection, box, transit, root, rng);
  } catch (const std::exception& e) {
    std::cerr << "inspection planning failed: " << e.what() << "\n";
    return kExitPlannerStuck;
  }
  fs::create_directories(out_dir);
  save_coverage_report(plan.report, (fs::path(out_dir) / "coverage.txt").string());
  save_edge_list(plan.ig.graph, (fs::path(out_dir) / "inspection_graph.txt").string());
  return kExitOk;
}

double mapped_reachable_fraction(const World& world, const VoxelGrid& map,
                                 const Vec3& start) {
  const VoxelGrid ref = VoxelGrid::for_bounds(world.bounds, map.voxel_size());
  if ((ref.dims() - map.dims()).cwiseAbs().sum() != 0 ||
      (ref.origin() - map.origin()).norm() > 1e-9)
    throw std::invalid_argument("map grid does not match the world bounds grid");
  const auto& dims = map.dims();
  const auto lin = [&](int x, int y, int z) {
    return (static_cast<int64_t>(z) * dims.y() + y) * dims.x() + x;
  };
  std::vector<char> free_truth(static_cast<size_t>(map.num_voxels()), 0);
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x)
        free_truth[static_cast<size_t>(lin(x, y, z))] =
            !world.point_in_solid(map.center_of({x, y, z}));
  const auto s_idx = map.index_of(start);
  if (!map.in_grid(s_idx) ||
      !free_truth[static_cast<size_t>(lin(s_idx.x(), s_idx.y(), s_idx.z()))])
    throw std::invalid_argument("start does not lie in truth-free space");
  std::vector<char> seen(free_truth.size(), 0);
  std::deque<Eigen::Vector3i> queue{s_idx};
  seen[static_cast<size_t>(lin(s_idx.x(), s_idx.y(), s_idx.z()))] = 1;
  int64_t reachable = 0;
  int64_t mapped = 0;
  const int dx[6] = {1, -1, 0, 0, 0, 0};
  const int dy[6] = {0, 0, 1, -1, 0, 0};
  const int dz[6] = {0, 0, 0, 0, 1, -1};
  while (!queue.empty()) {
    const auto idx = queue.front();
    queue.pop_front();
    ++reachable;
    if (map.state(idx) == VoxelState::kFree) ++mapped;
    for (int n = 0; n < 6; ++n) {
      const Eigen::Vector3i nb(idx.x() + dx[n], idx.y() + dy[n], idx.z() + dz[n]);
      if (!map.in_grid(nb)) continue;
      const auto l = static_cast<size_t>(lin(nb.x(), nb.y(), nb.z()));
      if (seen[l] || !free_truth[l]) continue;
      seen[l] = 1;
      queue.push_back(nb);
    }
  }
  return static_cast<double>(mapped) / static_cast<double>(reachable);
}

// ---------------------------------------------------------------------------
// log replay

namespace {

struct PlanRecord {
  long iteration = 0;
  long terminal = -1;
  std::string score_tok;
  std::vector<std::pair<double, double>> gain_cost;  // per path vertex, in log order
};

}  // namespace

ReplayStats replay_log(const std::string& path, double delta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open '" + path + "'", 0);
  std::string line;
  int lineno = 1;
  if (!std::getline(is, line) || line != kLogHeader)
    throw ParseError("missing log header", 1);

  std::map<std::string, std::vector<std::string>> meta;
  std::vector<Vec3> est_pts, true_pts;
  std::vector<PlanRecord> plans;
  std::map<long, size_t> plan_by_iter;
  bool has_gvi = false;
  long gvi_covered = -1, gvi_uncoverable = -1;
  std::string gvi_len_tok;
  bool has_stats = false;
  std::string stats_herr_tok, stats_rpe_tok, stats_gain_tok;
  double last_t = -kInf;

  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = split_tokens(line);
    const auto need = [&](size_t n) {
      if (tok.size() != n)
        throw ParseError("truncated or malformed record (last valid line " +
                             std::to_string(lineno - 1) + ")",
                         lineno);
    };
    if (tok.empty())
      throw ParseError("blank record (last valid line " + std::to_string(lineno - 1) + ")",
                       lineno);
    if (tok.size() < 2)
      throw ParseError("truncated record (last valid line " + std::to_string(lineno - 1) + ")",
                       lineno);
    const std::string& type = tok[0];
    const double t = parse_double(tok[1], lineno);
    if (!(t > last_t)) throw ParseError("non-increasing timestamp", lineno);
    last_t = t;

    if (type == "meta") {
      if (tok.size() < 4) throw ParseError("meta record needs a key and a value", lineno);
      meta[tok[2]] = std::vector<std::string>(tok.begin() + 3, tok.end());
    } else if (type == "mode") {
      if (tok.size() != 4) throw ParseError("mode record needs a state and a cause", lineno);
    } else if (type == "pose") {
      need(10);
      double v[8];
      for (int k = 0; k < 8; ++k) v[k] = parse_double(tok[static_cast<size_t>(k) + 2], lineno);
      true_pts.emplace_back(v[0], v[1], v[2]);
      est_pts.emplace_back(v[4], v[5], v[6]);
    } else if (type == "map") {
      need(5);
      for (int k = 2; k < 5; ++k) parse_int(tok[static_cast<size_t>(k)], lineno);
    } else if (type == "ve_plan") {
      need(6);
      PlanRecord pr;
      pr.iteration = parse_int(tok[2], lineno);
      pr.terminal = parse_int(tok[3], lineno);
      parse_double(tok[4], lineno);
      pr.score_tok = tok[4];
      parse_int(tok[5], lineno);
      if (plan_by_iter.count(pr.iteration))
        throw ParseError("duplicate plan for iteration " + std::to_string(pr.iteration),
                         lineno);
      plan_by_iter[pr.iteration] = plans.size();
      plans.push_back(pr);
    } else if (type == "ve_vertex") {
      need(10);
      const long iter = parse_int(tok[2], lineno);
      const long k = parse_int(tok[3], lineno);
      const double gain = parse_double(tok[4], lineno);
      const double cost = parse_double(tok[5], lineno);
      for (int f = 6; f < 10; ++f) parse_double(tok[static_cast<size_t>(f)], lineno);
      const auto it = plan_by_iter.find(iter);
      if (it == plan_by_iter.end())
        throw ParseError("path vertex before its plan record", lineno);
      auto& pr = plans[it->second];
      if (k != static_cast<long>(pr.gain_cost.size()))
        throw ParseError("path vertex out of order", lineno);
      pr.gain_cost.emplace_back(gain, cost);
    } else if (type == "ve_done") {
      need(3);
      parse_int(tok[2], lineno);
    } else if (type == "gvi_plan") {
      need(8);
      parse_int(tok[2], lineno);
      gvi_covered = parse_int(tok[3], lineno);
      gvi_uncoverable = parse_int(tok[4], lineno);
      parse_int(tok[5], lineno);
      parse_double(tok[6], lineno);
      gvi_len_tok = tok[6];
      parse_double(tok[7], lineno);
      has_gvi = true;
    } else if (type == "gvi_stop") {
      need(9);
      for (int f = 2; f < 5; ++f) parse_int(tok[static_cast<size_t>(f)], lineno);
      for (int f = 5; f < 9; ++f) parse_double(tok[static_cast<size_t>(f)], lineno);
    } else if (type == "home_plan") {
      need(4);
      parse_int(tok[2], lineno);
      parse_double(tok[3], lineno);
    } else if (type == "warn") {
      if (tok.size() < 3) throw ParseError("warn record needs a message", lineno);
    } else if (type == "stats") {
      need(7);
      parse_int(tok[2], lineno);
      for (int f = 3; f < 7; ++f) parse_double(tok[static_cast<size_t>(f)], lineno);
      stats_herr_tok = tok[3];
      stats_rpe_tok = tok[5];
      stats_gain_tok = tok[6];
      has_stats = true;
    } else if (type == "end") {
      need(4);
      parse_int(tok[2], lineno);
    } else {
      throw ParseError("unknown record type '" + type + "'", lineno);
    }
  }

  ReplayStats rs;
  rs.delta = delta;
  rs.pose_records = static_cast<long>(est_pts.size());
  double lambda = 0.0;
  if (!plans.empty()) {
    const auto it = meta.find("lambda");
    if (it == meta.end() || it->second.empty())
      throw ParseError("log has plans but no lambda metadata", lineno);
    lambda = parse_double(it->second[0], lineno);
  }

  bool matches = has_stats;
  for (const auto& pr : plans) {
    // mirror the planner: scores sum terminal-to-root
    double s = 0.0;
    for (size_t k = pr.gain_cost.size(); k-- > 0;)
      s += pr.gain_cost[k].first * std::exp(-lambda * pr.gain_cost[k].second);
    rs.plan_scores.push_back(s);
    if (fmt_double(s) != pr.score_tok) matches = false;
  }
  double tg = 0.0;
  for (const auto& pr : plans)
    for (const auto& gc : pr.gain_cost) tg += gc.first;
  rs.total_gain = tg;

  Vec3 start_xyz = Vec3::Zero();
  const auto ms = meta.find("start");
  if (ms != meta.end() && ms->second.size() >= 3) {
    start_xyz = Vec3(parse_double(ms->second[0], lineno), parse_double(ms->second[1], lineno),
                     parse_double(ms->second[2], lineno));
  }
  const Vec3 last_est = est_pts.empty() ? start_xyz : est_pts.back();
  rs.homing_error_est = (last_est - start_xyz).norm();

  rs.rpe = kNaN;
  double arc = 0.0;
  for (size_t k = 1; k < true_pts.size(); ++k) arc += (true_pts[k] - true_pts[k - 1]).norm();
  if (arc >= delta && delta > 0.0) rs.rpe = rpe_rmse(est_pts, true_pts, delta);

  if (has_stats) {
    if (fmt_double(rs.total_gain) != stats_gain_tok) matches = false;
    if (fmt_double(rs.homing_error_est) != stats_herr_tok) matches = false;
    if (delta == 10.0 && fmt_double(rs.rpe) != stats_rpe_tok) matches = false;
  }
  rs.matches_log = matches;
  if (has_gvi) {
    rs.covered = gvi_covered;
    rs.uncoverable = gvi_uncoverable;
    rs.tour_length = parse_double(gvi_len_tok, lineno);
  }

  rs.summary.push_back("pose records: " + std::to_string(rs.pose_records));
  rs.summary.push_back("plans: " + std::to_string(plans.size()) +
                       ", total gain " + fmt_double(rs.total_gain));
  rs.summary.push_back("homing error (est): " + fmt_double(rs.homing_error_est) + " m");
  rs.summary.push_back("rpe(delta=" + fmt_double(delta) + "): " + fmt_double(rs.rpe));
  if (has_gvi)
    rs.summary.push_back("coverage: " + std::to_string(rs.covered) + " covered, " +
                         std::to_string(rs.uncoverable) + " uncoverable, tour " +
                         fmt_double(rs.tour_length) + " m");
  rs.summary.push_back(std::string("recomputation matches log: ") +
                       (rs.matches_log ? "yes" : "no"));
  return rs;
}

}  // namespace nautilus
