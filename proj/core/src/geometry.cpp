#include "atlasground/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

namespace atlasground {

// --- PointIndex -----------------------------------------------------------

PointIndex::PointIndex(const std::vector<VoxelIndex>& points) {
  points_.reserve(points.size());
  for (const VoxelIndex& v : points) points_.push_back(to_vec3(v));
  if (points_.empty()) throw std::invalid_argument("PointIndex: empty point set");
  std::vector<std::int32_t> order(points_.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<std::int32_t>(i);
  nodes_.reserve(points_.size());
  root_ = build(order.data(), order.data() + order.size(), 0);
}

PointIndex::PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("PointIndex: empty point set");
  std::vector<std::int32_t> order(points_.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<std::int32_t>(i);
  nodes_.reserve(points_.size());
  root_ = build(order.data(), order.data() + order.size(), 0);
}

std::int32_t PointIndex::build(std::int32_t* first, std::int32_t* last,
                               int depth) {
  if (first == last) return -1;
  const int axis = depth % 3;
  std::int32_t* mid = first + (last - first) / 2;
  std::nth_element(first, mid, last, [&](std::int32_t a, std::int32_t b) {
    if (points_[a][axis] != points_[b][axis])
      return points_[a][axis] < points_[b][axis];
    return a < b;  // stable tie-break
  });
  Node n;
  n.point = *mid;
  n.axis = static_cast<std::int8_t>(axis);
  const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(n);
  const std::int32_t left = build(first, mid, depth + 1);
  const std::int32_t right = build(mid + 1, last, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void PointIndex::nearest(std::int32_t node, const Vec3& p,
                         double& best_sq) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& q = points_[n.point];
  const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
  const double d_sq = dx * dx + dy * dy + dz * dz;
  if (d_sq < best_sq) best_sq = d_sq;
  const double delta = p[n.axis] - q[n.axis];
  const std::int32_t near = delta < 0 ? n.left : n.right;
  const std::int32_t far = delta < 0 ? n.right : n.left;
  nearest(near, p, best_sq);
  if (delta * delta < best_sq) nearest(far, p, best_sq);
}

double PointIndex::nearest_distance(const Vec3& p) const {
  double best_sq = std::numeric_limits<double>::infinity();
  nearest(root_, p, best_sq);
  return std::sqrt(best_sq);
}

double nearest_voxel_distance_mm(const PointIndex& index, const Vec3& p,
                                 double resolution_mm) {
  return index.nearest_distance(p) * resolution_mm;
}

VoxelIndex round_to_voxel(const Vec3& p,
                          const std::array<std::int32_t, 3>& dims) {
  VoxelIndex out;
  for (int a = 0; a < 3; ++a) {
    long r = std::lround(p[a]);  // half away from zero
    if (r < 0) r = 0;
    if (r > dims[a] - 1) r = dims[a] - 1;
    out[a] = static_cast<std::int32_t>(r);
  }
  return out;
}

// --- ConvexHull3 ----------------------------------------------------------
//
// Incremental construction with exact-sign visibility (side > 0). For
// integer-valued inputs (voxel clouds) all orientation predicates are exact
// in double, so coplanar points resolve to side == 0 and are skipped; a
// closed convex triangulated surface contains every point with side <= 0 on
// all faces, so skipping is sound. Zero-area sliver faces can appear from
// collinear inputs; they carry no constraint and are ignored by the
// containment test.

namespace {

struct BuildFace {
  int a, b, c;
  Vec3 n;        // unnormalized outward normal
  double offset; // dot(n, points[a])
  bool alive = true;
};

Vec3 face_normal(const Vec3& pa, const Vec3& pb, const Vec3& pc) {
  return cross(pb - pa, pc - pa);
}

double side_of(const BuildFace& f, const Vec3& p) {
  return dot(f.n, p) - f.offset;
}

BuildFace make_face(const std::vector<Vec3>& pts, int a, int b, int c) {
  BuildFace f;
  f.a = a;
  f.b = b;
  f.c = c;
  f.n = face_normal(pts[a], pts[b], pts[c]);
  f.offset = dot(f.n, pts[a]);
  return f;
}

}  // namespace

ConvexHull3::ConvexHull3(const std::vector<Vec3>& points) {
  if (points.size() < 4)
    throw HullDegeneracyError("convex_hull: need at least 4 points");

  // Initial simplex from extreme points.
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Vec3 &p = points[i], &q = points[i0];
    if (p.x < q.x || (p.x == q.x && (p.y < q.y || (p.y == q.y && p.z < q.z))))
      i0 = i;
  }
  std::size_t i1 = i0;
  double best = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = norm_sq(points[i] - points[i0]);
    if (d > best) { best = d; i1 = i; }
  }
  if (best <= 0.0)
    throw HullDegeneracyError("convex_hull: all points coincide");
  std::size_t i2 = i0;
  best = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = norm_sq(cross(points[i1] - points[i0], points[i] - points[i0]));
    if (d > best) { best = d; i2 = i; }
  }
  if (best <= 0.0)
    throw HullDegeneracyError("convex_hull: points are collinear");
  const Vec3 n012 = face_normal(points[i0], points[i1], points[i2]);
  std::size_t i3 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = std::abs(dot(n012, points[i] - points[i0]));
    if (d > best) { best = d; i3 = i; }
  }
  if (best <= 0.0)
    throw HullDegeneracyError("convex_hull: points are coplanar");

  std::vector<BuildFace> faces;
  {
    const int s[4] = {static_cast<int>(i0), static_cast<int>(i1),
                      static_cast<int>(i2), static_cast<int>(i3)};
    const int tris[4][3] = {{s[0], s[1], s[2]},
                            {s[0], s[1], s[3]},
                            {s[0], s[2], s[3]},
                            {s[1], s[2], s[3]}};
    const int opposite[4] = {s[3], s[2], s[1], s[0]};
    for (int t = 0; t < 4; ++t) {
      BuildFace f = make_face(points, tris[t][0], tris[t][1], tris[t][2]);
      if (side_of(f, points[opposite[t]]) > 0.0) {
        f = make_face(points, tris[t][0], tris[t][2], tris[t][1]);
      }
      faces.push_back(f);
    }
  }

  auto insert_point = [&](int pi) {
    const Vec3& p = points[pi];
    std::vector<int> visible;
    for (std::size_t fi = 0; fi < faces.size(); ++fi)
      if (faces[fi].alive && side_of(faces[fi], p) > 0.0)
        visible.push_back(static_cast<int>(fi));
    if (visible.empty()) return;  // inside or on the current hull

    std::set<int> visible_set(visible.begin(), visible.end());
    // Directed edge -> alive face owning it.
    std::map<std::pair<int, int>, int> edge_owner;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
      if (!faces[fi].alive) continue;
      const BuildFace& f = faces[fi];
      edge_owner[{f.a, f.b}] = static_cast<int>(fi);
      edge_owner[{f.b, f.c}] = static_cast<int>(fi);
      edge_owner[{f.c, f.a}] = static_cast<int>(fi);
    }

    // Horizon: directed edges of visible faces whose twin face stays.
    std::vector<std::pair<int, int>> horizon;
    for (int fi : visible) {
      const BuildFace& f = faces[fi];
      const std::pair<int, int> edges[3] = {{f.a, f.b}, {f.b, f.c}, {f.c, f.a}};
      for (const auto& e : edges) {
        const auto twin = edge_owner.find({e.second, e.first});
        if (twin == edge_owner.end() || !visible_set.count(twin->second))
          horizon.push_back(e);
      }
    }
    for (int fi : visible) faces[fi].alive = false;
    for (const auto& [u, v] : horizon)
      faces.push_back(make_face(points, u, v, pi));
  };

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    insert_point(static_cast<int>(i));
  }

  // Compact, remap vertex indices, and verify.
  std::map<int, int> remap;
  for (const BuildFace& f : faces) {
    if (!f.alive) continue;
    for (int v : {f.a, f.b, f.c})
      if (!remap.count(v)) {
        const int id = static_cast<int>(remap.size());
        remap[v] = id;
      }
  }
  vertices_.resize(remap.size());
  for (const auto& [src, dst] : remap) vertices_[dst] = points[src];

  Vec3 lo = vertices_.front(), hi = vertices_.front();
  for (const Vec3& v : vertices_) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  diameter_ = norm(hi - lo);

  for (const BuildFace& f : faces) {
    if (!f.alive) continue;
    faces_.push_back(Face{remap[f.a], remap[f.b], remap[f.c], f.n, f.offset});
  }

  // Closed-surface check: each undirected edge shared by exactly two faces.
  std::map<std::pair<int, int>, int> edge_count;
  for (const Face& f : faces_) {
    const std::pair<int, int> edges[3] = {
        {std::min(f.a, f.b), std::max(f.a, f.b)},
        {std::min(f.b, f.c), std::max(f.b, f.c)},
        {std::min(f.c, f.a), std::max(f.c, f.a)}};
    for (const auto& e : edges) ++edge_count[e];
  }
  for (const auto& [e, cnt] : edge_count)
    if (cnt != 2)
      throw std::runtime_error("convex_hull: construction produced an open surface");

  // Containment check over the input.
  const double tol = 1e-9 * std::max(diameter_, 1.0);
  for (const Vec3& p : points)
    if (signed_distance(p) > tol)
      throw std::runtime_error("convex_hull: input point escapes the hull");
}

double ConvexHull3::signed_distance(const Vec3& p) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const Face& f : faces_) {
    const double len = norm(f.normal);
    if (len == 0.0) continue;  // sliver from collinear inputs
    const double d = (dot(f.normal, p) - f.offset) / len;
    if (d > worst) worst = d;
  }
  return worst;
}

double ConvexHull3::volume() const {
  double six_v = 0.0;
  for (const Face& f : faces_)
    six_v += dot(vertices_[f.a], cross(vertices_[f.b], vertices_[f.c]));
  return six_v / 6.0;
}

ConvexHull3 convex_hull(const std::vector<Vec3>& points) {
  return ConvexHull3(points);
}

bool point_in_hull(const ConvexHull3& hull, const Vec3& p) {
  return hull.signed_distance(p) <= 1e-9 * hull.diameter();
}

}  // namespace atlasground
