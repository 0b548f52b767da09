#include "atlasground/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atlasground {

MetricEntry aggregate(const std::string& name,
                      const std::vector<double>& values) {
  MetricEntry e;
  e.name = name;
  e.count = values.size();
  if (values.empty()) return e;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  e.mean = mean;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sample_std =
        std::sqrt(ss / static_cast<double>(values.size() - 1));
    e.standard_error = sample_std / std::sqrt(static_cast<double>(values.size()));
  }
  return e;
}

GroundingEvaluator::GroundingEvaluator(const Atlas& atlas) : atlas_(atlas) {}

const PointIndex& GroundingEvaluator::organ_index(OrganId id) const {
  auto it = organ_indexes_.find(id);
  if (it == organ_indexes_.end()) {
    const Organ& o = atlas_.registry.organ(id);  // throws on unknown id
    it = organ_indexes_
             .emplace(id, std::make_unique<PointIndex>(o.voxels))
             .first;
  }
  return *it->second;
}

double GroundingEvaluator::nearest_mm(const Vec3& pred, OrganId organ) const {
  return nearest_voxel_distance_mm(organ_index(organ), pred,
                                   atlas_.resolution_mm);
}

bool GroundingEvaluator::ior_hit(const Vec3& pred,
                                 const std::set<OrganId>& targets,
                                 double threshold_mm) const {
  if (targets.empty()) throw std::invalid_argument("ior_hit: no target organs");
  const VoxelIndex v = round_to_voxel(pred, atlas_.dims);
  const std::uint16_t label = atlas_.label_at(v);
  for (OrganId t : targets) {
    if (!atlas_.registry.has(t))
      throw std::invalid_argument("ior_hit: unknown organ id " + std::to_string(t));
    if (label == t) return true;
  }
  for (OrganId t : targets)
    if (nearest_mm(pred, t) < threshold_mm) return true;  // strictly less
  return false;
}

double GroundingEvaluator::nvd_cm(const Vec3& pred,
                                  const std::set<OrganId>& targets) const {
  if (targets.empty()) throw std::invalid_argument("nvd_cm: no target organs");
  const VoxelIndex v = round_to_voxel(pred, atlas_.dims);
  const std::uint16_t label = atlas_.label_at(v);
  for (OrganId t : targets) {
    if (!atlas_.registry.has(t))
      throw std::invalid_argument("nvd_cm: unknown organ id " + std::to_string(t));
    if (label == t) return 0.0;
  }
  double best_mm = std::numeric_limits<double>::infinity();
  for (OrganId t : targets) best_mm = std::min(best_mm, nearest_mm(pred, t));
  return best_mm / 10.0;
}

bool GroundingEvaluator::igr_hit(const Vec3& pred, OrganId heldout) const {
  const Organ& organ = atlas_.registry.organ(heldout);
  auto it = group_hulls_.find(organ.group);
  if (it == group_hulls_.end()) {
    const auto& group_ids = atlas_.registry.groups().at(organ.group);
    std::vector<Vec3> points;
    std::vector<VoxelIndex> voxels;
    for (OrganId id : group_ids) {
      const Organ& member = atlas_.registry.organ(id);
      for (const VoxelIndex& v : member.voxels) {
        points.push_back(to_vec3(v));
        voxels.push_back(v);
      }
    }
    GroupHull gh;
    try {
      gh.hull = std::make_unique<ConvexHull3>(points);
    } catch (const HullDegeneracyError&) {
      gh.union_index = std::make_unique<PointIndex>(voxels);
    }
    it = group_hulls_.emplace(organ.group, std::move(gh)).first;
  }
  const GroupHull& gh = it->second;
  if (gh.hull) return point_in_hull(*gh.hull, pred);
  return nearest_voxel_distance_mm(*gh.union_index, pred,
                                   atlas_.resolution_mm) < 10.0;
}

MetricEntry nvd_o_cm(const std::vector<double>& nvd_samples,
                     const std::string& name) {
  std::vector<double> misses;
  for (double v : nvd_samples)
    if (v > 0.0) misses.push_back(v);
  return aggregate(name, misses);
}

bool retrieval_hit(const std::vector<double>& query_point,
                   const std::set<int>& query_annotations,
                   const std::vector<std::vector<double>>& db_points,
                   const std::vector<std::set<int>>& db_annotations, int k) {
  if (k < 1) throw std::invalid_argument("retrieval_hit: k must be >= 1");
  if (static_cast<std::size_t>(k) > db_points.size())
    throw std::invalid_argument("retrieval_hit: k exceeds database size");
  if (db_points.size() != db_annotations.size())
    throw std::invalid_argument("retrieval_hit: db size mismatch");

  std::vector<std::pair<double, std::size_t>> ranked(db_points.size());
  for (std::size_t i = 0; i < db_points.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < query_point.size(); ++d) {
      const double diff = query_point[d] - db_points[i][d];
      s += diff * diff;
    }
    ranked[i] = {s, i};
  }
  std::stable_sort(ranked.begin(), ranked.end());
  for (int r = 0; r < k; ++r)
    if (db_annotations[ranked[static_cast<std::size_t>(r)].second] ==
        query_annotations)
      return true;
  return false;
}

double recall_at_k(const std::vector<std::vector<double>>& points,
                   const std::vector<std::set<int>>& annotations, int k) {
  if (points.size() != annotations.size())
    throw std::invalid_argument("recall_at_k: size mismatch");
  if (points.size() < 2)
    throw std::invalid_argument("recall_at_k: need at least two documents");
  if (k < 1 || static_cast<std::size_t>(k) > points.size() - 1)
    throw std::invalid_argument("recall_at_k: k exceeds database size");

  std::size_t hits = 0;
  std::vector<std::vector<double>> db;
  std::vector<std::set<int>> db_ann;
  for (std::size_t q = 0; q < points.size(); ++q) {
    db.clear();
    db_ann.clear();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i == q) continue;
      db.push_back(points[i]);
      db_ann.push_back(annotations[i]);
    }
    if (retrieval_hit(points[q], annotations[q], db, db_ann, k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

}  // namespace atlasground
