#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "atlasground/vec3.hpp"

namespace atlasground {

// Exact nearest-neighbor queries over a fixed point set (kd-tree inside;
// answers equal a brute-force scan).
class PointIndex {
 public:
  explicit PointIndex(const std::vector<VoxelIndex>& points);
  explicit PointIndex(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }

  // Euclidean distance from p to the nearest stored point, in point units.
  double nearest_distance(const Vec3& p) const;

 private:
  struct Node {
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t point = -1;
    std::int8_t axis = 0;
  };

  std::int32_t build(std::int32_t* first, std::int32_t* last, int depth);
  void nearest(std::int32_t node, const Vec3& p, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

double nearest_voxel_distance_mm(const PointIndex& index, const Vec3& p,
                                 double resolution_mm);

// Per-axis round-half-away-from-zero, then clamp into [0, dim-1].
VoxelIndex round_to_voxel(const Vec3& p, const std::array<std::int32_t, 3>& dims);

class HullDegeneracyError : public std::runtime_error {
 public:
  explicit HullDegeneracyError(const std::string& what)
      : std::runtime_error(what) {}
};

class ConvexHull3 {
 public:
  struct Face {
    int a, b, c;   // vertex indices, outward winding
    Vec3 normal;   // unnormalized outward normal; (0,0,0) for slivers
    double offset; // dot(normal, vertex a)
  };

  // Throws HullDegeneracyError when the points are collinear/coplanar or
  // fewer than 4.
  explicit ConvexHull3(const std::vector<Vec3>& points);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  double diameter() const { return diameter_; }
  double volume() const;

  // Signed distance from p to the hull boundary along face normals;
  // <= 0 means inside or on the surface.
  double signed_distance(const Vec3& p) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  double diameter_ = 0.0;
};

ConvexHull3 convex_hull(const std::vector<Vec3>& points);

// Closed-hull membership with a face-plane tolerance of 1e-9 x diameter.
bool point_in_hull(const ConvexHull3& hull, const Vec3& p);

}  // namespace atlasground
