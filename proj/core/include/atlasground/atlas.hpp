#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "atlasground/rng.hpp"
#include "atlasground/vec3.hpp"

namespace atlasground {

using OrganId = std::uint16_t;
inline constexpr OrganId kBackground = 0;

struct Organ {
  OrganId id = 0;
  std::string name;                   // canonical, lowercase
  std::vector<std::string> synonyms;  // lowercase, distinct from name
  std::string group;                  // functional group tag
  std::vector<VoxelIndex> voxels;     // every voxel carrying this label

  // Canonical name plus synonyms.
  std::vector<std::string> terms() const;
};

class OrganRegistry {
 public:
  OrganRegistry() = default;
  explicit OrganRegistry(std::vector<Organ> organs);

  const std::vector<Organ>& organs() const { return organs_; }
  const Organ& organ(OrganId id) const;
  bool has(OrganId id) const;
  std::vector<OrganId> ids() const;
  // functional group -> organ ids, ascending
  const std::map<std::string, std::vector<OrganId>>& groups() const {
    return groups_;
  }

 private:
  std::vector<Organ> organs_;  // ascending id
  std::map<std::string, std::vector<OrganId>> groups_;
};

struct Atlas {
  std::array<std::int32_t, 3> dims = {0, 0, 0};
  double resolution_mm = 1.0;
  std::vector<std::uint16_t> labels;  // x-fastest: idx = x + dx*(y + dy*z)
  OrganRegistry registry;

  std::size_t flat_index(const VoxelIndex& v) const {
    return static_cast<std::size_t>(v[0]) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(v[1]) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(v[2]));
  }
  bool in_bounds(const VoxelIndex& v) const {
    return v[0] >= 0 && v[0] < dims[0] && v[1] >= 0 && v[1] < dims[1] &&
           v[2] >= 0 && v[2] < dims[2];
  }
  std::uint16_t label_at(const VoxelIndex& v) const {
    return labels[flat_index(v)];
  }
};

// --- synthetic atlas specification ---------------------------------------

struct BallShape {
  Vec3 center;
  double radius = 0.0;
};
struct BoxShape {
  VoxelIndex lo{0, 0, 0};  // inclusive
  VoxelIndex hi{0, 0, 0};  // inclusive
};
struct ShellShape {
  Vec3 center;
  double outer_radius = 0.0;
  double thickness = 0.0;  // wall thickness; interior stays background
};
using OrganShape = std::variant<BallShape, BoxShape, ShellShape>;

struct SyntheticOrganSpec {
  std::string name;
  std::vector<std::string> synonyms;
  std::string group;
  OrganShape shape;
};

struct SyntheticAtlasSpec {
  std::array<std::int32_t, 3> dims = {0, 0, 0};
  double resolution_mm = 1.0;
  // Fraction of face-exposed surface voxels dropped at generation time.
  double roughness = 0.0;
  std::vector<SyntheticOrganSpec> organs;  // declaration order; later wins
};

// Deterministic for a fixed (spec, seed). Organs are painted in declaration
// order; a voxel claimed twice keeps the later organ's label.
Atlas generate_synthetic_atlas(const SyntheticAtlasSpec& spec,
                               std::uint64_t seed);

// Replaces `ids` with one organ (id = first listed) whose voxel set is the
// union. Keeps the first organ's functional group; the super-organ's
// synonym list is the union of the constituents' terms. Document annotations
// are untouched; remapping is the caller's job.
Atlas merge_organs(const Atlas& atlas, const std::vector<OrganId>& ids,
                   const std::string& new_name);

// n points uniform with replacement from organ.voxels, as real vectors in
// voxel coordinates.
std::vector<Vec3> sample_organ_points(const Organ& organ, int n, Rng& rng);

Vec3 atlas_center(const Atlas& atlas);
Vec3 random_point_in_random_organ(const Atlas& atlas, Rng& rng);

// Arithmetic mean of the organ's voxel coordinates.
Vec3 organ_centroid(const Organ& organ);

// Atlas directory format: `meta` (JSON: dims, resolution, registry) plus
// `labels.raw` (little-endian u16, x-fastest).
void save_atlas(const Atlas& atlas, const std::filesystem::path& dir);
Atlas load_atlas(const std::filesystem::path& dir);

SyntheticAtlasSpec atlas_spec_from_json_text(const std::string& text);
std::string atlas_spec_to_json_text(const SyntheticAtlasSpec& spec);

void validate_atlas(const Atlas& atlas);  // throws on invariant violations

}  // namespace atlasground
