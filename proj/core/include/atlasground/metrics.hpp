#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "atlasground/atlas.hpp"
#include "atlasground/geometry.hpp"

namespace atlasground {

struct MetricEntry {
  std::string name;
  std::optional<double> mean;  // empty when count == 0
  double standard_error = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<MetricEntry> entries;
};

// mean and standard error (sample std / sqrt(n)); count 0 -> flagged empty.
MetricEntry aggregate(const std::string& name, const std::vector<double>& values);

// Read-only grounding metrics over one atlas. Caches per-organ nearest-voxel
// indexes and per-group convex hulls.
class GroundingEvaluator {
 public:
  explicit GroundingEvaluator(const Atlas& atlas);

  // Hit iff the rounded voxel carries a target label, or the prediction is
  // strictly closer than threshold_mm to some target organ's nearest voxel.
  bool ior_hit(const Vec3& pred_voxelspace, const std::set<OrganId>& targets,
               double threshold_mm = 10.0) const;

  // 0 when the rounded voxel is inside a target organ, otherwise centimeters
  // to the nearest voxel over the target organs.
  double nvd_cm(const Vec3& pred_voxelspace,
                const std::set<OrganId>& targets) const;

  // Inside the convex hull of the held-out organ's functional group (own
  // voxels included). Falls back to a 10 mm distance test when the group's
  // point set is degenerate.
  bool igr_hit(const Vec3& pred_voxelspace, OrganId heldout_organ) const;

  const Atlas& atlas() const { return atlas_; }
  double nearest_mm(const Vec3& pred_voxelspace, OrganId organ) const;

 private:
  const PointIndex& organ_index(OrganId id) const;

  const Atlas& atlas_;
  mutable std::map<OrganId, std::unique_ptr<PointIndex>> organ_indexes_;
  struct GroupHull {
    std::unique_ptr<ConvexHull3> hull;        // null on degeneracy
    std::unique_ptr<PointIndex> union_index;  // fallback
  };
  mutable std::map<std::string, GroupHull> group_hulls_;
};

// Mean +- SE of the positive entries; count 0 when every sample is a hit.
MetricEntry nvd_o_cm(const std::vector<double>& nvd_samples,
                     const std::string& name = "nvd_o_cm");

// Single leave-one-out style retrieval probe: do any of the k nearest db
// items (Euclidean, ties by index) carry an identical annotation set?
bool retrieval_hit(const std::vector<double>& query_point,
                   const std::set<int>& query_annotations,
                   const std::vector<std::vector<double>>& db_points,
                   const std::vector<std::set<int>>& db_annotations, int k);

// Leave-one-out Recall@K over one embedded document set.
double recall_at_k(const std::vector<std::vector<double>>& points,
                   const std::vector<std::set<int>>& annotations, int k);

}  // namespace atlasground
