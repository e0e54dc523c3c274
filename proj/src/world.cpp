#include "nautilus/world.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "nautilus/textio.hpp"

namespace nautilus {

bool World::point_in_solid(const Vec3& p) const {
  for (const auto& b : boxes) {
    if (b.contains(p)) return true;
  }
  // Meshes are treated as thin shells; a point is "in" one only if it lies
  // on a triangle, which we do not test here.
  return false;
}

namespace {

// Moeller-Trumbore, one-sided epsilon on the determinant only.
std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir,
                                   const Triangle& tri) {
  const Vec3 e1 = tri.b - tri.a;
  const Vec3 e2 = tri.c - tri.a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - tri.a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv_det;
  if (t < 0.0) return std::nullopt;
  return t;
}

}  // namespace

std::optional<RayHit> ray_cast(const World& world, const Vec3& origin,
                               const Vec3& dir, double max_range) {
  if (std::abs(dir.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("ray_cast: dir must be unit length");
  }
  if (max_range <= 0.0) {
    throw std::invalid_argument("ray_cast: max_range must be positive");
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& box : world.boxes) {
    auto iv = box.ray_interval(origin, dir);
    if (!iv) continue;
    auto [t0, t1] = *iv;
    if (t1 < 0.0) continue;
    const double t = (t0 >= 0.0) ? t0 : 0.0;  // origin inside: contact at 0
    best = std::min(best, t);
  }
  for (const auto& mesh : world.meshes) {
    for (const auto& tri : mesh.triangles) {
      auto t = ray_triangle(origin, dir, tri);
      if (t) best = std::min(best, *t);
    }
  }
  if (best > max_range) return std::nullopt;
  return RayHit{best, origin + best * dir};
}

Vec3 sensor_ray_direction(const DepthSensorSpec& spec, int row, int col) {
  const double az = -0.5 * spec.h_fov + spec.h_fov * col / (spec.cols - 1);
  const double el = -0.5 * spec.v_fov + spec.v_fov * row / (spec.rows - 1);
  // z forward, x right, y down; el > 0 looks down.
  return Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
}

DepthScan render_depth(const World& world, const DepthSensorSpec& spec,
                       const Pose& sensor_pose) {
  DepthScan scan;
  scan.image = DepthImage(spec.rows, spec.cols);
  const double range = std::min(spec.range_max, world.water_visibility);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const Vec3 d = sensor_ray_direction(spec, r, c);
      const Vec3 dw = sensor_pose.rotate(d);
      auto hit = ray_cast(world, sensor_pose.translation, dw, range);
      if (hit) {
        scan.image.at(r, c) = hit->distance;
        scan.cloud.push_back(hit->distance * d);
      }
    }
  }
  return scan;
}

Pose step_robot(const Pose& pose, const Vec3& body_velocity, double body_yaw_rate,
                double dt) {
  if (dt <= 0.0) throw std::invalid_argument("step_robot: dt must be positive");
  const double yaw0 = pose.yaw();
  const double dyaw = body_yaw_rate * dt;

  double cx, cy;  // body-frame displacement integrated over the arc
  if (std::abs(body_yaw_rate) < 1e-12) {
    cx = body_velocity.x() * dt;
    cy = body_velocity.y() * dt;
  } else {
    const double s = std::sin(dyaw) / body_yaw_rate;
    const double c = (1.0 - std::cos(dyaw)) / body_yaw_rate;
    cx = s * body_velocity.x() - c * body_velocity.y();
    cy = c * body_velocity.x() + s * body_velocity.y();
  }
  const double cos0 = std::cos(yaw0);
  const double sin0 = std::sin(yaw0);

  Pose out;
  out.translation = pose.translation + Vec3(cos0 * cx - sin0 * cy,
                                            sin0 * cx + cos0 * cy,
                                            body_velocity.z() * dt);
  out.rotation = Quat(Eigen::AngleAxisd(wrap_angle(yaw0 + dyaw), Vec3::UnitZ()));
  return out;
}

namespace {

void write_vec3(std::ostream& os, const Vec3& v) {
  os << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' ' << fmt_double(v.z());
}

}  // namespace

void save_world(const World& world, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write world file: " + path);
  os << "nautilus_world 1\n";
  os << "bounds ";
  write_vec3(os, world.bounds.min);
  os << ' ';
  write_vec3(os, world.bounds.max);
  os << '\n';
  os << "visibility " << fmt_double(world.water_visibility) << '\n';
  for (const auto& b : world.boxes) {
    os << "box ";
    write_vec3(os, b.min);
    os << ' ';
    write_vec3(os, b.max);
    os << '\n';
  }
  for (const auto& m : world.meshes) {
    os << "mesh " << m.source_path << '\n';
  }
}

World load_world(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read world file: " + path);
  World world;
  bool have_bounds = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto toks = split_tokens(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "nautilus_world") continue;
    if (toks[0] == "bounds") {
      if (toks.size() != 7) throw ParseError("bounds needs 6 numbers", lineno);
      for (int i = 0; i < 3; ++i) world.bounds.min[i] = parse_double(toks[1 + i], lineno);
      for (int i = 0; i < 3; ++i) world.bounds.max[i] = parse_double(toks[4 + i], lineno);
      have_bounds = true;
    } else if (toks[0] == "visibility") {
      if (toks.size() != 2) throw ParseError("visibility needs 1 number", lineno);
      world.water_visibility = parse_double(toks[1], lineno);
    } else if (toks[0] == "box") {
      if (toks.size() != 7) throw ParseError("box needs 6 numbers", lineno);
      Aabb b;
      for (int i = 0; i < 3; ++i) b.min[i] = parse_double(toks[1 + i], lineno);
      for (int i = 0; i < 3; ++i) b.max[i] = parse_double(toks[4 + i], lineno);
      world.boxes.push_back(b);
    } else if (toks[0] == "mesh") {
      if (toks.size() != 2) throw ParseError("mesh needs a path", lineno);
      world.meshes.push_back(load_obj_mesh(toks[1]));
    } else {
      throw ParseError("unknown record '" + toks[0] + "'", lineno);
    }
  }
  if (!have_bounds) throw ParseError("world file has no bounds record", lineno);
  for (int i = 0; i < 3; ++i) {
    if (world.bounds.max[i] <= world.bounds.min[i]) {
      throw ParseError("world bounds must have positive extent", lineno);
    }
  }
  if (world.water_visibility <= 0.0) {
    throw ParseError("water visibility must be positive", lineno);
  }
  for (const auto& b : world.boxes) {
    if (!b.overlaps(world.bounds)) {
      throw ParseError("world solid does not intersect bounds", lineno);
    }
  }
  return world;
}

TriMesh load_obj_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read mesh file: " + path);
  TriMesh mesh;
  mesh.source_path = path;
  std::vector<Vec3> verts;
  std::string line;
  int lineno = 0;
  auto face_index = [&](const std::string& tok) {
    // OBJ faces may carry /texture/normal suffixes
    const long idx = parse_int(tok.substr(0, tok.find('/')), lineno);
    const long n = static_cast<long>(verts.size());
    const long resolved = idx < 0 ? n + idx : idx - 1;
    if (resolved < 0 || resolved >= n) throw ParseError("face index out of range", lineno);
    return static_cast<size_t>(resolved);
  };
  while (std::getline(is, line)) {
    ++lineno;
    auto toks = split_tokens(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) throw ParseError("vertex needs 3 numbers", lineno);
      verts.emplace_back(parse_double(toks[1], lineno), parse_double(toks[2], lineno),
                         parse_double(toks[3], lineno));
    } else if (toks[0] == "f") {
      if (toks.size() < 4) throw ParseError("face needs >= 3 vertices", lineno);
      // fan-triangulate polygons
      const size_t i0 = face_index(toks[1]);
      for (size_t k = 2; k + 1 < toks.size(); ++k) {
        mesh.triangles.push_back(
            {verts[i0], verts[face_index(toks[k])], verts[face_index(toks[k + 1])]});
      }
    }
    // everything else (vn, vt, usemtl, ...) is ignored
  }
  return mesh;
}

// Both built-in worlds keep every wetted face 5 cm inside a 0.2 m voxel cell
// (planes at 0.2k +/- 0.05).  A depth return anywhere on a face then lands in
// a cell that is 75 % solid even when the estimated integration pose is a few
// centimetres off, so surface cells saturate occupied instead of splitting
// hits with their free neighbours, and the water sliver left in a surface
// cell is too thin for any feasible ray to traverse lengthwise.  Surfaces
// that bisect cells instead leave half-solid cells that rays graze diagonally
// but can never resolve, and the exploration gain never reaches zero.

World make_tank_world() {
  World w;
  w.bounds = {Vec3(0.0, 0.0, 0.0), Vec3(20.0, 20.0, 3.0)};
  w.water_visibility = 2.5;
  const double t = 0.4;  // shell thickness beyond the wetted face
  // floor (+z is down, so the floor is the z = 3 face)
  w.boxes.push_back({Vec3(-t, -t, 2.85), Vec3(20.0 + t, 20.0 + t, 3.0 + t)});
  // cover slab: the reservoir is sealed above (z = 0 face)
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(20.0 + t, 20.0 + t, 0.15)});
  // perimeter walls
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(0.15, 20.0 + t, 3.0 + t)});
  w.boxes.push_back({Vec3(19.85, -t, -t), Vec3(20.0 + t, 20.0 + t, 3.0 + t)});
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(20.0 + t, 0.15, 3.0 + t)});
  w.boxes.push_back({Vec3(-t, 19.85, -t), Vec3(20.0 + t, 20.0 + t, 3.0 + t)});
  // support columns on a 4 m grid hold up the cover slab
  for (double cx : {4.0, 8.0, 12.0, 16.0}) {
    for (double cy : {4.0, 8.0, 12.0, 16.0}) {
      if (cx == 8.0 && cy == 8.0) continue;  // the main block stands here
      w.boxes.push_back({Vec3(cx - 0.35, cy - 0.35, 0.0), Vec3(cx + 0.35, cy + 0.35, 3.0)});
    }
  }
  // dummy industrial structures on the floor
  w.boxes.push_back({Vec3(8.05, 8.05, 1.65), Vec3(10.95, 9.95, 3.0)});    // main block
  w.boxes.push_back({Vec3(4.05, 13.05, 0.0), Vec3(4.55, 13.55, 3.0)});    // pillar
  w.boxes.push_back({Vec3(14.05, 5.05, 0.0), Vec3(14.55, 5.55, 3.0)});    // pillar
  w.boxes.push_back({Vec3(5.05, 4.05, 2.45), Vec3(10.95, 4.55, 3.0)});    // pipe run
  w.boxes.push_back({Vec3(15.05, 12.05, 2.05), Vec3(15.95, 16.95, 3.0)}); // low wall
  return w;
}

World make_box_world() {
  // Small, shallow sealed pool: from any interior pose most sensor rays
  // terminate on a surface within range, so the volumetric gain a planned
  // vertex claims is actually harvestable and exploration converges in a
  // handful of iterations.
  World w;
  w.bounds = {Vec3(0.0, 0.0, 0.0), Vec3(5.0, 5.0, 2.0)};
  w.water_visibility = 2.5;
  const double t = 0.4;
  w.boxes.push_back({Vec3(-t, -t, 1.85), Vec3(5.0 + t, 5.0 + t, 2.0 + t)});
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(5.0 + t, 5.0 + t, 0.15)});  // cover slab
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(0.15, 5.0 + t, 2.0 + t)});
  w.boxes.push_back({Vec3(4.85, -t, -t), Vec3(5.0 + t, 5.0 + t, 2.0 + t)});
  w.boxes.push_back({Vec3(-t, -t, -t), Vec3(5.0 + t, 0.15, 2.0 + t)});
  w.boxes.push_back({Vec3(-t, 4.85, -t), Vec3(5.0 + t, 5.0 + t, 2.0 + t)});
  w.boxes.push_back({Vec3(3.05, 3.05, 1.25), Vec3(3.95, 3.95, 2.0)});  // single box
  return w;
}

}  // namespace nautilus
