#pragma once

#include <vector>

#include "nautilus/geometry.hpp"

namespace nautilus {

/// Extreme points of a point set: the vertices of its convex hull within
/// its affine span. `dimension` is the span's dimension (0..3); sets that
/// do not span 3-D are flagged degenerate but still get their
/// lower-dimensional hull (segment endpoints, planar hull vertices).
struct ConvexHullResult {
  std::vector<int> vertices;  // sorted, unique indices into the input
  int dimension = 3;
  bool degenerate = false;
};

ConvexHullResult convex_hull_vertices(const PointCloud& points);

}  // namespace nautilus
