#include "atlasground/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace atlasground {

using nlohmann::json;

std::vector<std::string> Organ::terms() const {
  std::vector<std::string> out;
  out.reserve(1 + synonyms.size());
  out.push_back(name);
  out.insert(out.end(), synonyms.begin(), synonyms.end());
  return out;
}

OrganRegistry::OrganRegistry(std::vector<Organ> organs)
    : organs_(std::move(organs)) {
  std::sort(organs_.begin(), organs_.end(),
            [](const Organ& a, const Organ& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < organs_.size(); ++i) {
    if (organs_[i].id == organs_[i - 1].id)
      throw std::invalid_argument("duplicate organ id in registry");
  }
  for (const Organ& o : organs_) {
    if (o.id == kBackground) throw std::invalid_argument("organ id 0 is reserved");
    if (o.name.empty()) throw std::invalid_argument("organ name empty");
    if (o.group.empty()) throw std::invalid_argument("organ group empty");
    std::set<std::string> seen{o.name};
    for (const std::string& s : o.synonyms) {
      if (s.empty()) throw std::invalid_argument("empty synonym for " + o.name);
      if (!seen.insert(s).second)
        throw std::invalid_argument("duplicate term for organ " + o.name);
    }
    groups_[o.group].push_back(o.id);
  }
}

const Organ& OrganRegistry::organ(OrganId id) const {
  auto it = std::lower_bound(
      organs_.begin(), organs_.end(), id,
      [](const Organ& o, OrganId v) { return o.id < v; });
  if (it == organs_.end() || it->id != id)
    throw std::invalid_argument("unknown organ id " + std::to_string(id));
  return *it;
}

bool OrganRegistry::has(OrganId id) const {
  auto it = std::lower_bound(
      organs_.begin(), organs_.end(), id,
      [](const Organ& o, OrganId v) { return o.id < v; });
  return it != organs_.end() && it->id == id;
}

std::vector<OrganId> OrganRegistry::ids() const {
  std::vector<OrganId> out;
  out.reserve(organs_.size());
  for (const Organ& o : organs_) out.push_back(o.id);
  return out;
}

namespace {

std::string lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

void paint_shape(const OrganShape& shape,
                 const std::array<std::int32_t, 3>& dims,
                 std::uint16_t value, std::vector<std::uint16_t>& labels) {
  auto at = [&](std::int32_t x, std::int32_t y, std::int32_t z) -> std::uint16_t& {
    return labels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(dims[0]) *
                      (static_cast<std::size_t>(y) +
                       static_cast<std::size_t>(dims[1]) *
                           static_cast<std::size_t>(z))];
  };
  auto check_bounds = [&](double lo0, double hi0, double lo1, double hi1,
                          double lo2, double hi2) {
    if (lo0 < 0 || lo1 < 0 || lo2 < 0 || hi0 > dims[0] - 1 ||
        hi1 > dims[1] - 1 || hi2 > dims[2] - 1)
      throw std::invalid_argument("organ shape out of atlas bounds");
  };

  if (const auto* b = std::get_if<BallShape>(&shape)) {
    if (b->radius <= 0) throw std::invalid_argument("ball radius must be > 0");
    check_bounds(b->center.x - b->radius, b->center.x + b->radius,
                 b->center.y - b->radius, b->center.y + b->radius,
                 b->center.z - b->radius, b->center.z + b->radius);
    const double r2 = b->radius * b->radius;
    for (std::int32_t z = static_cast<std::int32_t>(std::ceil(b->center.z - b->radius));
         z <= static_cast<std::int32_t>(std::floor(b->center.z + b->radius)); ++z)
      for (std::int32_t y = static_cast<std::int32_t>(std::ceil(b->center.y - b->radius));
           y <= static_cast<std::int32_t>(std::floor(b->center.y + b->radius)); ++y)
        for (std::int32_t x = static_cast<std::int32_t>(std::ceil(b->center.x - b->radius));
             x <= static_cast<std::int32_t>(std::floor(b->center.x + b->radius)); ++x) {
          const Vec3 p{static_cast<double>(x), static_cast<double>(y),
                       static_cast<double>(z)};
          if (norm_sq(p - b->center) <= r2) at(x, y, z) = value;
        }
  } else if (const auto* bx = std::get_if<BoxShape>(&shape)) {
    for (int a = 0; a < 3; ++a)
      if (bx->lo[a] > bx->hi[a])
        throw std::invalid_argument("box lo > hi");
    check_bounds(bx->lo[0], bx->hi[0], bx->lo[1], bx->hi[1], bx->lo[2], bx->hi[2]);
    for (std::int32_t z = bx->lo[2]; z <= bx->hi[2]; ++z)
      for (std::int32_t y = bx->lo[1]; y <= bx->hi[1]; ++y)
        for (std::int32_t x = bx->lo[0]; x <= bx->hi[0]; ++x) at(x, y, z) = value;
  } else {
    const auto& sh = std::get<ShellShape>(shape);
    if (sh.outer_radius <= 0 || sh.thickness <= 0 ||
        sh.thickness >= sh.outer_radius)
      throw std::invalid_argument("shell needs 0 < thickness < outer_radius");
    check_bounds(sh.center.x - sh.outer_radius, sh.center.x + sh.outer_radius,
                 sh.center.y - sh.outer_radius, sh.center.y + sh.outer_radius,
                 sh.center.z - sh.outer_radius, sh.center.z + sh.outer_radius);
    const double ro2 = sh.outer_radius * sh.outer_radius;
    const double ri = sh.outer_radius - sh.thickness;
    const double ri2 = ri * ri;
    for (std::int32_t z = static_cast<std::int32_t>(std::ceil(sh.center.z - sh.outer_radius));
         z <= static_cast<std::int32_t>(std::floor(sh.center.z + sh.outer_radius)); ++z)
      for (std::int32_t y = static_cast<std::int32_t>(std::ceil(sh.center.y - sh.outer_radius));
           y <= static_cast<std::int32_t>(std::floor(sh.center.y + sh.outer_radius)); ++y)
        for (std::int32_t x = static_cast<std::int32_t>(std::ceil(sh.center.x - sh.outer_radius));
             x <= static_cast<std::int32_t>(std::floor(sh.center.x + sh.outer_radius)); ++x) {
          const Vec3 p{static_cast<double>(x), static_cast<double>(y),
                       static_cast<double>(z)};
          const double d2 = norm_sq(p - sh.center);
          if (d2 <= ro2 && d2 > ri2) at(x, y, z) = value;
        }
  }
}

std::vector<std::vector<VoxelIndex>> collect_voxels(
    const std::vector<std::uint16_t>& labels,
    const std::array<std::int32_t, 3>& dims, std::size_t n_organs) {
  std::vector<std::vector<VoxelIndex>> per_organ(n_organs + 1);
  std::size_t idx = 0;
  for (std::int32_t z = 0; z < dims[2]; ++z)
    for (std::int32_t y = 0; y < dims[1]; ++y)
      for (std::int32_t x = 0; x < dims[0]; ++x, ++idx) {
        const std::uint16_t v = labels[idx];
        if (v != kBackground) per_organ[v].push_back({x, y, z});
      }
  return per_organ;
}

}  // namespace

Atlas generate_synthetic_atlas(const SyntheticAtlasSpec& spec,
                               std::uint64_t seed) {
  if (spec.dims[0] < 1 || spec.dims[1] < 1 || spec.dims[2] < 1)
    throw std::invalid_argument("atlas dims must be >= 1");
  if (spec.resolution_mm <= 0)
    throw std::invalid_argument("resolution_mm must be > 0");
  if (spec.organs.size() < 2)
    throw std::invalid_argument("synthetic atlas needs >= 2 organs");
  if (spec.roughness < 0 || spec.roughness >= 1)
    throw std::invalid_argument("roughness must be in [0, 1)");

  Atlas atlas;
  atlas.dims = spec.dims;
  atlas.resolution_mm = spec.resolution_mm;
  const std::size_t total = static_cast<std::size_t>(spec.dims[0]) *
                            spec.dims[1] * spec.dims[2];
  atlas.labels.assign(total, kBackground);

  for (std::size_t i = 0; i < spec.organs.size(); ++i)
    paint_shape(spec.organs[i].shape, spec.dims,
                static_cast<std::uint16_t>(i + 1), atlas.labels);

  if (spec.roughness > 0) {
    // Drop face-exposed surface voxels with probability `roughness`.
    // Exposure is evaluated against the fully painted volume.
    Rng rng = Rng::substream(seed, "atlas-roughen");
    const auto before = atlas.labels;
    auto label_of = [&](std::int32_t x, std::int32_t y, std::int32_t z) {
      if (x < 0 || y < 0 || z < 0 || x >= spec.dims[0] || y >= spec.dims[1] ||
          z >= spec.dims[2])
        return static_cast<std::uint16_t>(kBackground);
      return before[static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(spec.dims[0]) *
                        (static_cast<std::size_t>(y) +
                         static_cast<std::size_t>(spec.dims[1]) *
                             static_cast<std::size_t>(z))];
    };
    std::size_t idx = 0;
    for (std::int32_t z = 0; z < spec.dims[2]; ++z)
      for (std::int32_t y = 0; y < spec.dims[1]; ++y)
        for (std::int32_t x = 0; x < spec.dims[0]; ++x, ++idx) {
          const std::uint16_t v = before[idx];
          if (v == kBackground) continue;
          const bool exposed =
              label_of(x - 1, y, z) != v || label_of(x + 1, y, z) != v ||
              label_of(x, y - 1, z) != v || label_of(x, y + 1, z) != v ||
              label_of(x, y, z - 1) != v || label_of(x, y, z + 1) != v;
          if (exposed && rng.bernoulli(spec.roughness))
            atlas.labels[idx] = kBackground;
        }
  }

  auto per_organ = collect_voxels(atlas.labels, spec.dims, spec.organs.size());

  std::vector<Organ> organs;
  for (std::size_t i = 0; i < spec.organs.size(); ++i) {
    const SyntheticOrganSpec& os = spec.organs[i];
    Organ o;
    o.id = static_cast<OrganId>(i + 1);
    o.name = lower(os.name);
    for (const std::string& s : os.synonyms) o.synonyms.push_back(lower(s));
    o.group = os.group;
    o.voxels = std::move(per_organ[i + 1]);
    if (o.voxels.empty())
      throw std::invalid_argument("organ '" + o.name +
                                  "' has zero surviving voxels");
    organs.push_back(std::move(o));
  }
  atlas.registry = OrganRegistry(std::move(organs));
  return atlas;
}

Atlas merge_organs(const Atlas& atlas, const std::vector<OrganId>& ids,
                   const std::string& new_name) {
  if (ids.empty()) throw std::invalid_argument("merge_organs: empty id list");
  std::set<OrganId> id_set;
  for (OrganId id : ids) {
    if (!atlas.registry.has(id))
      throw std::invalid_argument("merge_organs: unknown organ id " +
                                  std::to_string(id));
    if (!id_set.insert(id).second)
      throw std::invalid_argument("merge_organs: duplicate organ id " +
                                  std::to_string(id));
  }

  const OrganId super_id = ids.front();
  Atlas out;
  out.dims = atlas.dims;
  out.resolution_mm = atlas.resolution_mm;
  out.labels = atlas.labels;
  for (std::uint16_t& v : out.labels)
    if (v != kBackground && id_set.count(static_cast<OrganId>(v)))
      v = super_id;

  Organ super;
  super.id = super_id;
  super.name = lower(new_name);
  super.group = atlas.registry.organ(ids.front()).group;
  std::set<std::string> syn;
  for (OrganId id : ids) {
    const Organ& o = atlas.registry.organ(id);
    for (const std::string& t : o.terms())
      if (t != super.name) syn.insert(t);
    super.voxels.insert(super.voxels.end(), o.voxels.begin(), o.voxels.end());
  }
  super.synonyms.assign(syn.begin(), syn.end());
  std::sort(super.voxels.begin(), super.voxels.end());

  std::vector<Organ> organs;
  for (const Organ& o : atlas.registry.organs())
    if (!id_set.count(o.id)) organs.push_back(o);
  organs.push_back(std::move(super));
  out.registry = OrganRegistry(std::move(organs));
  return out;
}

std::vector<Vec3> sample_organ_points(const Organ& organ, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_organ_points: n must be >= 1");
  if (organ.voxels.empty())
    throw std::invalid_argument("sample_organ_points: organ has no voxels");
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(to_vec3(organ.voxels[rng.uniform_index(organ.voxels.size())]));
  return out;
}

Vec3 atlas_center(const Atlas& atlas) {
  return {(atlas.dims[0] - 1) / 2.0, (atlas.dims[1] - 1) / 2.0,
          (atlas.dims[2] - 1) / 2.0};
}

Vec3 organ_centroid(const Organ& organ) {
  Vec3 c;
  for (const VoxelIndex& v : organ.voxels) c += to_vec3(v);
  c *= 1.0 / static_cast<double>(organ.voxels.size());
  return c;
}

Vec3 random_point_in_random_organ(const Atlas& atlas, Rng& rng) {
  const auto& organs = atlas.registry.organs();
  if (organs.empty())
    throw std::invalid_argument("random_point_in_random_organ: empty registry");
  const Organ& o = organs[rng.uniform_index(organs.size())];
  return to_vec3(o.voxels[rng.uniform_index(o.voxels.size())]);
}

void validate_atlas(const Atlas& atlas) {
  if (atlas.dims[0] < 1 || atlas.dims[1] < 1 || atlas.dims[2] < 1)
    throw std::runtime_error("atlas dims invalid");
  if (atlas.resolution_mm <= 0) throw std::runtime_error("resolution invalid");
  const std::size_t total = static_cast<std::size_t>(atlas.dims[0]) *
                            atlas.dims[1] * atlas.dims[2];
  if (atlas.labels.size() != total)
    throw std::runtime_error("label volume size mismatch");

  std::map<std::uint16_t, std::size_t> counts;
  for (std::uint16_t v : atlas.labels)
    if (v != kBackground) ++counts[v];
  for (const auto& [id, count] : counts)
    if (!atlas.registry.has(static_cast<OrganId>(id)))
      throw std::runtime_error("label " + std::to_string(id) +
                               " missing from registry");
  for (const Organ& o : atlas.registry.organs()) {
    if (o.voxels.empty()) throw std::runtime_error("organ with no voxels");
    auto it = counts.find(o.id);
    if (it == counts.end() || it->second != o.voxels.size())
      throw std::runtime_error("cached voxel list out of sync for organ " +
                               std::to_string(o.id));
    for (const VoxelIndex& v : o.voxels) {
      if (!atlas.in_bounds(v)) throw std::runtime_error("voxel out of bounds");
      if (atlas.label_at(v) != o.id)
        throw std::runtime_error("voxel list / label volume mismatch");
    }
  }
}

// --- serialization --------------------------------------------------------

namespace {

json registry_to_json(const OrganRegistry& reg) {
  json organs = json::array();
  for (const Organ& o : reg.organs()) {
    organs.push_back({{"id", o.id},
                      {"name", o.name},
                      {"synonyms", o.synonyms},
                      {"group", o.group}});
  }
  return organs;
}

}  // namespace

void save_atlas(const Atlas& atlas, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta = {{"format", "atlas/v1"},
               {"dims", {atlas.dims[0], atlas.dims[1], atlas.dims[2]}},
               {"resolution_mm", atlas.resolution_mm},
               {"organs", registry_to_json(atlas.registry)}};
  {
    std::ofstream f(dir / "meta", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / "meta").string());
    f << meta.dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "labels.raw", std::ios::binary);
    if (!f)
      throw std::runtime_error("cannot write " + (dir / "labels.raw").string());
    for (std::uint16_t v : atlas.labels) {
      const unsigned char bytes[2] = {static_cast<unsigned char>(v & 0xff),
                                      static_cast<unsigned char>(v >> 8)};
      f.write(reinterpret_cast<const char*>(bytes), 2);
    }
  }
}

Atlas load_atlas(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "meta", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot read " + (dir / "meta").string());
  json meta = json::parse(mf);

  Atlas atlas;
  atlas.dims = {meta.at("dims").at(0).get<std::int32_t>(),
                meta.at("dims").at(1).get<std::int32_t>(),
                meta.at("dims").at(2).get<std::int32_t>()};
  atlas.resolution_mm = meta.at("resolution_mm").get<double>();

  const std::size_t total = static_cast<std::size_t>(atlas.dims[0]) *
                            atlas.dims[1] * atlas.dims[2];
  std::ifstream lf(dir / "labels.raw", std::ios::binary);
  if (!lf)
    throw std::runtime_error("cannot read " + (dir / "labels.raw").string());
  std::vector<unsigned char> raw(total * 2);
  lf.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(lf.gcount()) != raw.size())
    throw std::runtime_error("labels.raw truncated");
  atlas.labels.resize(total);
  for (std::size_t i = 0; i < total; ++i)
    atlas.labels[i] = static_cast<std::uint16_t>(raw[2 * i] |
                                                 (raw[2 * i + 1] << 8));

  auto per_organ = collect_voxels(atlas.labels, atlas.dims, 65535);
  std::vector<Organ> organs;
  for (const json& jo : meta.at("organs")) {
    Organ o;
    o.id = jo.at("id").get<OrganId>();
    o.name = jo.at("name").get<std::string>();
    o.synonyms = jo.at("synonyms").get<std::vector<std::string>>();
    o.group = jo.at("group").get<std::string>();
    o.voxels = std::move(per_organ[o.id]);
    organs.push_back(std::move(o));
  }
  atlas.registry = OrganRegistry(std::move(organs));
  validate_atlas(atlas);
  return atlas;
}

// --- spec JSON ------------------------------------------------------------

SyntheticAtlasSpec atlas_spec_from_json_text(const std::string& text) {
  json j = json::parse(text);
  SyntheticAtlasSpec spec;
  spec.dims = {j.at("dims").at(0).get<std::int32_t>(),
               j.at("dims").at(1).get<std::int32_t>(),
               j.at("dims").at(2).get<std::int32_t>()};
  spec.resolution_mm = j.value("resolution_mm", 1.0);
  spec.roughness = j.value("roughness", 0.0);
  for (const json& jo : j.at("organs")) {
    SyntheticOrganSpec os;
    os.name = jo.at("name").get<std::string>();
    os.synonyms = jo.value("synonyms", std::vector<std::string>{});
    os.group = jo.at("group").get<std::string>();
    const json& sh = jo.at("shape");
    const std::string kind = sh.at("kind").get<std::string>();
    if (kind == "ball") {
      BallShape b;
      b.center = {sh.at("center").at(0).get<double>(),
                  sh.at("center").at(1).get<double>(),
                  sh.at("center").at(2).get<double>()};
      b.radius = sh.at("radius").get<double>();
      os.shape = b;
    } else if (kind == "box") {
      BoxShape b;
      for (int a = 0; a < 3; ++a) {
        b.lo[a] = sh.at("lo").at(a).get<std::int32_t>();
        b.hi[a] = sh.at("hi").at(a).get<std::int32_t>();
      }
      os.shape = b;
    } else if (kind == "shell") {
      ShellShape s;
      s.center = {sh.at("center").at(0).get<double>(),
                  sh.at("center").at(1).get<double>(),
                  sh.at("center").at(2).get<double>()};
      s.outer_radius = sh.at("outer_radius").get<double>();
      s.thickness = sh.at("thickness").get<double>();
      os.shape = s;
    } else {
      throw std::invalid_argument("unknown shape kind: " + kind);
    }
    spec.organs.push_back(std::move(os));
  }
  return spec;
}

std::string atlas_spec_to_json_text(const SyntheticAtlasSpec& spec) {
  json organs = json::array();
  for (const SyntheticOrganSpec& os : spec.organs) {
    json sh;
    if (const auto* b = std::get_if<BallShape>(&os.shape))
      sh = {{"kind", "ball"},
            {"center", {b->center.x, b->center.y, b->center.z}},
            {"radius", b->radius}};
    else if (const auto* bx = std::get_if<BoxShape>(&os.shape))
      sh = {{"kind", "box"},
            {"lo", {bx->lo[0], bx->lo[1], bx->lo[2]}},
            {"hi", {bx->hi[0], bx->hi[1], bx->hi[2]}}};
    else {
      const auto& s = std::get<ShellShape>(os.shape);
      sh = {{"kind", "shell"},
            {"center", {s.center.x, s.center.y, s.center.z}},
            {"outer_radius", s.outer_radius},
            {"thickness", s.thickness}};
    }
    organs.push_back({{"name", os.name},
                      {"synonyms", os.synonyms},
                      {"group", os.group},
                      {"shape", sh}});
  }
  json j = {{"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
            {"resolution_mm", spec.resolution_mm},
            {"roughness", spec.roughness},
            {"organs", organs}};
  return j.dump(2);
}

}  // namespace atlasground
