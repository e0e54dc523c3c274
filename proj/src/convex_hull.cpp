#include "nautilus/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace nautilus {

namespace {

struct Face {
  int v[3];
  int nb[3];  // neighbor across the directed edge v[i] -> v[i+1]
  Vec3 n;     // outward unit normal
  double d;   // plane offset, n.x = d
  std::vector<int> outside;
  int far_point = -1;
  double far_dist = 0.0;
  bool alive = true;
};

double scale_of(const PointCloud& pts) {
  double s = 0.0;
  for (const auto& p : pts) s = std::max(s, p.cwiseAbs().maxCoeff());
  return std::max(s, 1.0);
}

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Andrew's monotone chain on in-plane coordinates; strict turns only, so
// edge-interior collinear points are not reported as vertices.
std::vector<int> planar_hull(const PointCloud& pts, const Vec3& origin,
                             const Vec3& u, const Vec3& w, double eps) {
  struct P2 {
    double x, y;
    int idx;
  };
  std::vector<P2> pl;
  pl.reserve(pts.size());
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const Vec3 r = pts[i] - origin;
    pl.push_back({r.dot(u), r.dot(w), i});
  }
  std::sort(pl.begin(), pl.end(), [](const P2& a, const P2& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.idx < b.idx;
  });
  pl.erase(std::unique(pl.begin(), pl.end(),
                       [&](const P2& a, const P2& b) {
                         return std::abs(a.x - b.x) <= eps &&
                                std::abs(a.y - b.y) <= eps;
                       }),
           pl.end());
  const int n = static_cast<int>(pl.size());
  if (n <= 2) {
    std::vector<int> out;
    for (const auto& p : pl) out.push_back(p.idx);
    return out;
  }
  auto cross = [](const P2& o, const P2& a, const P2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<P2> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pl[i]) <= eps) --k;
    hull[k++] = pl[i];
  }
  const int lower = k + 1;
  for (int i = n - 2; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pl[i]) <= eps) --k;
    hull[k++] = pl[i];
  }
  std::vector<int> out;
  for (int i = 0; i < k - 1; ++i) out.push_back(hull[i].idx);
  return out;
}

}  // namespace

ConvexHullResult convex_hull_vertices(const PointCloud& pts) {
  const int n = static_cast<int>(pts.size());
  ConvexHullResult result;
  if (n == 0) {
    result.dimension = 0;
    result.degenerate = true;
    return result;
  }
  const double scale = scale_of(pts);
  const double eps = 1e-9 * scale;

  // affine span: pick spread-out anchor points
  int i0 = 0;
  for (int i = 1; i < n; ++i) {
    if (pts[i].x() < pts[i0].x() ||
        (pts[i].x() == pts[i0].x() && i < i0)) {
      i0 = i;
    }
  }
  int i1 = -1;
  double best = eps;
  for (int i = 0; i < n; ++i) {
    const double d = (pts[i] - pts[i0]).norm();
    if (d > best) {
      best = d;
      i1 = i;
    }
  }
  if (i1 < 0) {  // all points coincide
    result.dimension = 0;
    result.degenerate = true;
    for (int i = 0; i < n; ++i) result.vertices.push_back(i);
    return result;
  }
  const Vec3 u = (pts[i1] - pts[i0]).normalized();

  int i2 = -1;
  best = eps;
  for (int i = 0; i < n; ++i) {
    const Vec3 r = pts[i] - pts[i0];
    const double d = (r - r.dot(u) * u).norm();
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (i2 < 0) {  // collinear: extremes along u are the hull
    result.dimension = 1;
    result.degenerate = true;
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = (pts[i] - pts[i0]).dot(u);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    for (int i = 0; i < n; ++i) {
      const double t = (pts[i] - pts[i0]).dot(u);
      if (t <= lo + eps || t >= hi - eps) result.vertices.push_back(i);
    }
    result.vertices = sorted_unique(result.vertices);
    return result;
  }
  Vec3 w = (pts[i2] - pts[i0]);
  w = (w - w.dot(u) * u).normalized();

  int i3 = -1;
  best = eps;
  const Vec3 plane_n = u.cross(w);
  for (int i = 0; i < n; ++i) {
    const double d = std::abs((pts[i] - pts[i0]).dot(plane_n));
    if (d > best) {
      best = d;
      i3 = i;
    }
  }
  if (i3 < 0) {  // coplanar
    result.dimension = 2;
    result.degenerate = true;
    result.vertices = sorted_unique(planar_hull(pts, pts[i0], u, w, eps));
    return result;
  }

  // full quickhull
  std::vector<Face> faces;
  faces.reserve(2 * n);
  auto make_face = [&](int a, int b, int c) {
    Face f;
    f.v[0] = a;
    f.v[1] = b;
    f.v[2] = c;
    f.nb[0] = f.nb[1] = f.nb[2] = -1;
    f.n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    const double len = f.n.norm();
    if (len > 0.0) f.n /= len;
    f.d = f.n.dot(pts[a]);
    faces.push_back(f);
    return static_cast<int>(faces.size() - 1);
  };
  auto dist = [&](int f, int p) { return faces[f].n.dot(pts[p]) - faces[f].d; };

  // tetrahedron with outward orientation
  int a = i0, b = i1, c = i2, d = i3;
  if ((pts[b] - pts[a]).cross(pts[c] - pts[a]).dot(pts[d] - pts[a]) > 0.0) {
    std::swap(b, c);
  }
  make_face(a, b, c);
  make_face(a, c, d);
  make_face(a, d, b);
  make_face(b, d, c);
  auto link = [&](int f, int e, int g) { faces[f].nb[e] = g; };
  // face 0: (a,b,c); face 1: (a,c,d); face 2: (a,d,b); face 3: (b,d,c)
  link(0, 0, 2);  // a-b shared with face 2 (d,b ... a)
  link(0, 1, 3);  // b-c shared with face 3
  link(0, 2, 1);  // c-a shared with face 1
  link(1, 0, 0);
  link(1, 1, 3);
  link(1, 2, 2);
  link(2, 0, 1);
  link(2, 1, 3);
  link(2, 2, 0);
  link(3, 0, 2);
  link(3, 1, 1);
  link(3, 2, 0);

  auto add_outside = [&](int f, int p) {
    const double dd = dist(f, p);
    if (dd > eps) {
      faces[f].outside.push_back(p);
      if (dd > faces[f].far_dist) {
        faces[f].far_dist = dd;
        faces[f].far_point = p;
      }
      return true;
    }
    return false;
  };
  for (int p = 0; p < n; ++p) {
    if (p == a || p == b || p == c || p == d) continue;
    for (int f = 0; f < 4; ++f) {
      if (add_outside(f, p)) break;
    }
  }

  std::vector<int> work = {0, 1, 2, 3};
  std::vector<int> visible;
  std::vector<char> seen(faces.size(), 0);
  while (!work.empty()) {
    const int f = work.back();
    work.pop_back();
    if (!faces[f].alive || faces[f].outside.empty()) continue;
    const int apex = faces[f].far_point;

    // grow the visible region from f
    visible.clear();
    seen.assign(faces.size(), 0);
    std::vector<int> stack = {f};
    seen[f] = 1;
    while (!stack.empty()) {
      const int g = stack.back();
      stack.pop_back();
      visible.push_back(g);
      for (int e = 0; e < 3; ++e) {
        const int h = faces[g].nb[e];
        if (h >= 0 && !seen[h] && faces[h].alive && dist(h, apex) > eps) {
          seen[h] = 1;
          stack.push_back(h);
        }
      }
    }

    // horizon: directed edges of visible faces whose neighbor stays
    struct HorizonEdge {
      int from, to, outer;
    };
    std::unordered_map<int, HorizonEdge> loop;  // keyed by edge start vertex
    for (int g : visible) {
      for (int e = 0; e < 3; ++e) {
        const int h = faces[g].nb[e];
        if (h >= 0 && !seen[h]) {
          const int va = faces[g].v[e];
          const int vb = faces[g].v[(e + 1) % 3];
          loop[va] = {va, vb, h};
        }
      }
    }
    if (loop.empty()) {  // numerically stuck; drop the conflict list
      faces[f].outside.clear();
      faces[f].far_point = -1;
      faces[f].far_dist = 0.0;
      continue;
    }

    // collect points to redistribute, then retire the visible faces
    std::vector<int> orphans;
    for (int g : visible) {
      for (int p : faces[g].outside) {
        if (p != apex) orphans.push_back(p);
      }
      faces[g].alive = false;
      faces[g].outside.clear();
    }

    // stitch the cone: one new face per horizon edge, chained in loop order
    const int first_start = loop.begin()->first;
    std::vector<int> cone;
    int cursor = first_start;
    do {
      const auto it = loop.find(cursor);
      if (it == loop.end()) break;  // open chain: bail out conservatively
      const auto& edge = it->second;
      const int nf = make_face(edge.from, edge.to, apex);
      // neighbor across (from,to) is the surviving outer face
      faces[nf].nb[0] = edge.outer;
      for (int e = 0; e < 3; ++e) {
        if (faces[edge.outer].v[e] == edge.to &&
            faces[edge.outer].v[(e + 1) % 3] == edge.from) {
          faces[edge.outer].nb[e] = nf;
        }
      }
      cone.push_back(nf);
      cursor = edge.to;
    } while (cursor != first_start);

    for (size_t i = 0; i < cone.size(); ++i) {
      const int nf = cone[i];
      const int prev = cone[(i + cone.size() - 1) % cone.size()];
      const int next = cone[(i + 1) % cone.size()];
      faces[nf].nb[1] = next;  // edge (to, apex)
      faces[nf].nb[2] = prev;  // edge (apex, from)
    }

    for (int p : orphans) {
      for (int nf : cone) {
        if (add_outside(nf, p)) break;
      }
    }
    for (int nf : cone) {
      if (!faces[nf].outside.empty()) work.push_back(nf);
    }
    seen.resize(faces.size(), 0);
  }

  std::set<int> verts;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    verts.insert(f.v[0]);
    verts.insert(f.v[1]);
    verts.insert(f.v[2]);
  }
  result.vertices.assign(verts.begin(), verts.end());
  result.dimension = 3;
  result.degenerate = false;
  return result;
}

}  // namespace nautilus
