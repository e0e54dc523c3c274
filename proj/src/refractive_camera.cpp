#include "nautilus/refractive_camera.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nautilus/textio.hpp"

namespace nautilus {

Vec3 refract_ray(const Vec3& incident, const Vec3& normal, double n_ratio) {
  if (std::abs(incident.norm() - 1.0) > 1e-9 || std::abs(normal.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("refract_ray: inputs must be unit vectors");
  }
  const double cos_in = -incident.dot(normal);
  if (cos_in <= 0.0) {
    throw std::invalid_argument("refract_ray: incident must point into the surface");
  }
  const double eta = 1.0 / n_ratio;  // sin(out) = eta * sin(in)
  const double sin_in_sq = std::max(0.0, 1.0 - cos_in * cos_in);
  const double cos_out_sq = 1.0 - eta * eta * sin_in_sq;
  if (cos_out_sq < 0.0) {
    throw std::domain_error("refract_ray: total internal reflection");
  }
  return eta * incident + (eta * cos_in - std::sqrt(cos_out_sq)) * normal;
}

std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intr,
                                       const Vec3& p) {
  if (!(p.z() > intr.port_distance)) {
    throw std::invalid_argument("project: point behind the port");
  }
  const double rho = std::hypot(p.x(), p.y());
  double tan_int;  // tangent of the internal (pinhole-side) ray angle
  if (rho < 1e-14) {
    tan_int = 0.0;
  } else if (intr.n_ratio == 1.0) {
    tan_int = rho / p.z();
  } else if (intr.port_distance <= 0.0) {
    // interface at the pinhole: the external bearing refracts directly
    const double sin_ext = rho / p.norm();
    const double sin_int = intr.n_ratio * sin_ext;
    if (sin_int >= 1.0) return std::nullopt;  // outside the refraction cone
    tan_int = sin_int / std::sqrt(1.0 - sin_int * sin_int);
  } else {
    // where does the ray cross the port plane? f is monotone in the
    // port-plane radius r, with f(0) < 0 <= f(rho)
    const double zp = intr.port_distance;
    auto f = [&](double r) {
      const double sin_int = r / std::hypot(r, zp);
      const double sin_ext = sin_int / intr.n_ratio;
      const double tan_ext = sin_ext / std::sqrt(1.0 - sin_ext * sin_ext);
      return r + (p.z() - zp) * tan_ext - rho;
    };
    double lo = 0.0;
    double hi = rho;
    for (int i = 0; i < 100 && hi - lo > 1e-12; ++i) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) < 0.0 ? lo : hi) = mid;
    }
    tan_int = 0.5 * (lo + hi) / zp;
  }
  const double scale = (rho < 1e-14) ? 0.0 : tan_int / rho;
  const double u = intr.cx + intr.fx * p.x() * scale;
  const double v = intr.cy + intr.fy * p.y() * scale;
  if (u < 0.0 || u >= intr.width || v < 0.0 || v >= intr.height) {
    return std::nullopt;
  }
  return Eigen::Vector2d(u, v);
}

Ray back_project(const CameraIntrinsics& intr, const Eigen::Vector2d& px) {
  Vec3 d_int((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0);
  d_int.normalize();
  if (intr.n_ratio == 1.0) return {Vec3::Zero(), d_int};
  const Vec3 port_normal(0.0, 0.0, -1.0);  // toward the pinhole
  const Vec3 d_ext = refract_ray(d_int, port_normal, intr.n_ratio);
  if (intr.port_distance <= 0.0) return {Vec3::Zero(), d_ext};
  return {d_int * (intr.port_distance / d_int.z()), d_ext};
}

double fov_occupied_fraction(const CameraRig& rig, const Pose& body_pose,
                             const VoxelGrid& map, double max_range) {
  if (max_range <= 0.0) throw std::invalid_argument("max_range must be positive");
  constexpr int kNu = 16;
  constexpr int kNv = 12;
  int total = 0;
  int hits = 0;
  for (int ci : rig.vio_set) {
    const auto& cam = rig.cameras.at(ci);
    const Pose world_from_cam = body_pose * cam.extrinsic;
    for (int iv = 0; iv < kNv; ++iv) {
      for (int iu = 0; iu < kNu; ++iu) {
        const double u = (cam.intrinsics.width - 1.0) * iu / (kNu - 1.0);
        const double v = (cam.intrinsics.height - 1.0) * iv / (kNv - 1.0);
        const Ray ray = back_project(cam.intrinsics, {u, v});
        const Vec3 o = world_from_cam.apply(ray.origin);
        const Vec3 d = world_from_cam.rotate(ray.dir);
        ++total;
        bool hit = false;
        map.walk_ray(o, o + max_range * d, [&](const Eigen::Vector3i& idx) {
          if (map.state(idx) == VoxelState::kOccupied) {
            hit = true;
            return false;
          }
          return true;
        });
        if (hit) ++hits;
      }
    }
  }
  return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

double fit_n_ratio(CameraIntrinsics intr,
                   const std::vector<std::pair<Vec3, Eigen::Vector2d>>& corr) {
  if (corr.empty()) throw std::invalid_argument("fit_n_ratio: no correspondences");
  auto cost = [&](double n) {
    intr.n_ratio = n;
    double sum = 0.0;
    for (const auto& [point, pixel] : corr) {
      const auto px = project(intr, point);
      if (!px) {
        sum += 1e6;  // out-of-cone candidates are heavily penalized
        continue;
      }
      sum += (*px - pixel).squaredNorm();
    }
    return sum;
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 1.0, b = 1.6;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = cost(c), fd = cost(d);
  while (b - a > 1e-9) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = cost(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = cost(d);
    }
  }
  return 0.5 * (a + b);
}

void save_rig(const CameraRig& rig, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write rig file: " + path);
  os << "nautilus_rig 1\n";
  os << "vio_set";
  for (int i : rig.vio_set) os << ' ' << i;
  os << '\n';
  os << "inspection " << rig.inspection_index << '\n';
  for (const auto& cam : rig.cameras) {
    const auto& k = cam.intrinsics;
    const auto& q = cam.extrinsic.rotation;
    const auto& t = cam.extrinsic.translation;
    os << "camera " << fmt_double(k.fx) << ' ' << fmt_double(k.fy) << ' '
       << fmt_double(k.cx) << ' ' << fmt_double(k.cy) << ' ' << k.width << ' '
       << k.height << ' ' << fmt_double(k.port_distance) << ' '
       << fmt_double(k.n_ratio) << ' ' << fmt_double(q.w()) << ' '
       << fmt_double(q.x()) << ' ' << fmt_double(q.y()) << ' '
       << fmt_double(q.z()) << ' ' << fmt_double(t.x()) << ' '
       << fmt_double(t.y()) << ' ' << fmt_double(t.z()) << '\n';
  }
}

CameraRig load_rig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read rig file: " + path);
  CameraRig rig;
  rig.inspection_index = -1;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto toks = split_tokens(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "nautilus_rig") {
      have_header = true;
    } else if (toks[0] == "vio_set") {
      for (size_t i = 1; i < toks.size(); ++i) {
        rig.vio_set.push_back(parse_int(toks[i], lineno));
      }
    } else if (toks[0] == "inspection") {
      if (toks.size() != 2) throw ParseError("inspection needs 1 index", lineno);
      rig.inspection_index = parse_int(toks[1], lineno);
    } else if (toks[0] == "camera") {
      if (toks.size() != 16) throw ParseError("camera needs 15 numbers", lineno);
      RigCamera cam;
      auto& k = cam.intrinsics;
      k.fx = parse_double(toks[1], lineno);
      k.fy = parse_double(toks[2], lineno);
      k.cx = parse_double(toks[3], lineno);
      k.cy = parse_double(toks[4], lineno);
      k.width = parse_int(toks[5], lineno);
      k.height = parse_int(toks[6], lineno);
      k.port_distance = parse_double(toks[7], lineno);
      k.n_ratio = parse_double(toks[8], lineno);
      cam.extrinsic.rotation =
          Quat(parse_double(toks[9], lineno), parse_double(toks[10], lineno),
               parse_double(toks[11], lineno), parse_double(toks[12], lineno));
      cam.extrinsic.translation =
          Vec3(parse_double(toks[13], lineno), parse_double(toks[14], lineno),
               parse_double(toks[15], lineno));
      if (k.fx <= 0 || k.fy <= 0 || k.width <= 0 || k.height <= 0 ||
          k.port_distance < 0 || k.n_ratio < 1.0) {
        throw ParseError("camera violates intrinsics invariants", lineno);
      }
      if (!cam.extrinsic.unit_rotation()) {
        throw ParseError("camera extrinsic quaternion not unit", lineno);
      }
      rig.cameras.push_back(cam);
    } else {
      throw ParseError("unknown record '" + toks[0] + "'", lineno);
    }
  }
  if (!have_header) throw ParseError("missing nautilus_rig header", lineno);
  if (rig.vio_set.empty()) throw ParseError("vio_set must be non-empty", lineno);
  for (int i : rig.vio_set) {
    if (i < 0 || i >= static_cast<int>(rig.cameras.size())) {
      throw ParseError("vio_set index out of range", lineno);
    }
  }
  if (rig.inspection_index < 0 ||
      rig.inspection_index >= static_cast<int>(rig.cameras.size())) {
    throw ParseError("inspection index out of range", lineno);
  }
  return rig;
}

CameraRig make_default_rig() {
  // camera axes in the body frame: x right -> body y, y down -> body z,
  // z forward -> body x
  Eigen::Matrix3d rot;
  rot.col(0) = Vec3::UnitY();
  rot.col(1) = Vec3::UnitZ();
  rot.col(2) = Vec3::UnitX();
  const Quat forward(rot);

  CameraRig rig;
  CameraIntrinsics intr;
  intr.port_distance = 0.02;
  intr.n_ratio = 1.335;
  for (double lateral : {0.07, -0.07}) {
    RigCamera cam;
    cam.intrinsics = intr;
    cam.extrinsic.rotation = forward.normalized();
    cam.extrinsic.translation = Vec3(0.25, lateral, 0.0);
    rig.cameras.push_back(cam);
  }
  rig.vio_set = {0, 1};
  rig.inspection_index = 0;
  return rig;
}

}  // namespace nautilus
