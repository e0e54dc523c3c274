// Command-line front end for the nautilus autonomy stack: full missions,
// single-mode runs, log replay, the bundled-scenario evaluation suite and
// scenario export. Set NAUTILUS_VERBOSE=1 for progress output on stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nautilus/mission.hpp"
#include "nautilus/textio.hpp"

namespace fs = std::filesystem;
using namespace nautilus;

namespace {

struct CommonOpts {
  std::string config;
  std::string world = "tank";
  std::string out = "out";
  uint64_t seed = 0;
  bool seed_set = false;
  long max_ticks = -1;
};

void add_config_opts(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "mission configuration JSON")
      ->check(CLI::ExistingFile);
  cmd->add_option("--world", o.world, "bundled world when no --config is given")
      ->check(CLI::IsMember({"tank", "box"}));
  cmd->add_option("--seed", o.seed, "override the configured RNG seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--max-ticks", o.max_ticks, "abort after this many ticks (<0: unlimited)");
}

MissionConfig make_config(const CommonOpts& o) {
  MissionConfig cfg = o.config.empty() ? default_mission_config(o.world)
                                       : load_mission_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  return cfg;
}

void print_outcome(const MissionOutcome& r, const std::string& out_dir) {
  std::cout << "exit: " << r.exit_code
            << (r.failure.empty() ? "" : " (" + r.failure + ")") << "\n"
            << "ticks: " << r.ticks << " (" << r.duration << " s simulated)\n"
            << "exploration iterations: " << r.ve_iterations << "\n"
            << "map: " << r.final_map.free << " free, " << r.final_map.occupied
            << " occupied, " << r.final_map.unknown << " unknown\n"
            << "homing error: " << r.homing_error_est << " m (est), "
            << r.homing_error_true << " m (true)\n"
            << "rpe(10 m): " << r.rpe10 << "\n"
            << "total gain: " << r.total_gain << "\n";
  if (r.surface_total > 0) {
    const int coverable = r.surface_total - static_cast<int>(r.cover.uncoverable.size());
    int covered = 0;
    for (int a : r.cover.assignment)
      if (a >= 0) ++covered;
    std::cout << "coverage: " << covered << "/" << coverable << " coverable ("
              << r.surface_total << " surface), tour " << r.tour.length << " m\n";
  }
  std::cout << "outputs: " << out_dir << "\n";
}

int run_mission_cmd(const CommonOpts& o, MissionPhases phases) {
  MissionConfig cfg;
  try {
    cfg = make_config(o);
  } catch (const MissionConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const MissionOutcome r = run_mission(cfg, o.out, nullptr, o.max_ticks, phases);
  if (r.exit_code == kExitConfig) {
    std::cerr << "config error: " << r.failure << "\n";
    return r.exit_code;
  }
  print_outcome(r, o.out);
  return r.exit_code;
}

int replay_cmd(const std::string& log, double delta) {
  ReplayStats rs;
  try {
    rs = replay_log(log, delta);
  } catch (const ParseError& e) {
    std::cerr << "replay error: " << e.what() << "\n";
    return kExitConfig;
  }
  for (const auto& line : rs.summary) std::cout << line << "\n";
  return rs.matches_log ? 0 : 1;
}

int inspect_cmd(const CommonOpts& o, const std::string& map_path) {
  MissionConfig cfg;
  try {
    cfg = make_config(o);
    return plan_inspection(cfg, map_path, o.out);
  } catch (const MissionConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int export_world_cmd(const std::string& name, const std::string& out) {
  try {
    const World w = (name == "box") ? make_box_world() : make_tank_world();
    MissionConfig cfg = default_mission_config(name);
    fs::create_directories(out);
    const std::string world_path = (fs::path(out) / "world.txt").string();
    const std::string rig_path = (fs::path(out) / "rig.json").string();
    save_world(w, world_path);
    save_rig(make_default_rig(), rig_path);
    cfg.world = world_path;
    cfg.rig = rig_path;
    save_mission_config(cfg, (fs::path(out) / "mission.json").string());
    std::cout << "scenario '" << name << "' written to " << out << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "export error: " << e.what() << "\n";
    return kExitConfig;
  }
}

bool same_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

int eval_cmd(const std::string& out) {
  bool all_ok = true;
  const auto report = [&](bool ok, const std::string& name, const std::string& detail) {
    all_ok = all_ok && ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << ": " << detail << "\n";
  };

  MissionConfig cfg = default_mission_config("box");
  cfg.seed = 7;
  const MissionOutcome a = run_mission(cfg, (fs::path(out) / "run_a").string());
  const MissionOutcome b = run_mission(cfg, (fs::path(out) / "run_b").string());

  report(a.exit_code == 0 && b.exit_code == 0, "mission",
         "exit codes " + std::to_string(a.exit_code) + "/" + std::to_string(b.exit_code));
  report(same_bytes((fs::path(out) / "run_a" / "mission.log").string(),
                    (fs::path(out) / "run_b" / "mission.log").string()),
         "determinism", "two seeded runs, byte-compared logs");
  report(a.ve_iterations <= 5, "exploration convergence",
         std::to_string(a.ve_iterations) + " iterations (limit 5)");
  int covered = 0;
  for (int s : a.cover.assignment)
    if (s >= 0) ++covered;
  const int coverable = a.surface_total - static_cast<int>(a.cover.uncoverable.size());
  report(coverable > 0 && covered >= 0.98 * coverable, "inspection coverage",
         std::to_string(covered) + "/" + std::to_string(coverable) + " coverable voxels");

  MissionConfig quiet = cfg;
  quiet.velocity_sensor.sigma = 0.0;
  quiet.velocity_sensor.depth_sigma = 0.0;
  const MissionOutcome c = run_mission(quiet, (fs::path(out) / "run_quiet").string());
  report(c.exit_code == 0 && c.homing_error_true <= quiet.acceptance_radius,
         "noiseless homing",
         std::to_string(c.homing_error_true) + " m (limit " +
             std::to_string(quiet.acceptance_radius) + ")");

  std::cout << (all_ok ? "eval: all checks passed" : "eval: FAILURES above") << "\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nautilus: deterministic underwater exploration & inspection missions"};
  app.require_subcommand(1);

  CommonOpts mo, eo, io;
  auto* mission = app.add_subcommand("mission", "full mission: descend, explore, inspect, home");
  add_config_opts(mission, mo);
  auto* explore = app.add_subcommand("explore", "exploration only: descend, explore, home");
  add_config_opts(explore, eo);

  std::string map_path;
  auto* inspect = app.add_subcommand("inspect", "plan inspection over a saved map.bin");
  add_config_opts(inspect, io);
  inspect->add_option("--map", map_path, "occupancy grid (map.bin)")
      ->required()
      ->check(CLI::ExistingFile);

  std::string log_path;
  double delta = 10.0;
  auto* replay = app.add_subcommand("replay", "recompute statistics from a mission log");
  replay->add_option("--log", log_path, "mission.log to replay")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--delta", delta, "RPE window length in meters")
      ->check(CLI::PositiveNumber);

  std::string eval_out = "eval_out";
  auto* eval = app.add_subcommand("eval", "run the bundled-scenario evaluation suite");
  eval->add_option("--out", eval_out, "output directory");

  std::string exp_name = "tank", exp_out = "scenario";
  auto* expw = app.add_subcommand("export-world", "write a bundled scenario as files");
  expw->add_option("--name", exp_name, "bundled world name")
      ->check(CLI::IsMember({"tank", "box"}));
  expw->add_option("--out", exp_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(mission)) return run_mission_cmd(mo, MissionPhases::kFull);
  if (app.got_subcommand(explore)) return run_mission_cmd(eo, MissionPhases::kExploreOnly);
  if (app.got_subcommand(inspect)) return inspect_cmd(io, map_path);
  if (app.got_subcommand(replay)) return replay_cmd(log_path, delta);
  if (app.got_subcommand(eval)) return eval_cmd(eval_out);
  if (app.got_subcommand(expw)) return export_world_cmd(exp_name, exp_out);
  return 0;
}
