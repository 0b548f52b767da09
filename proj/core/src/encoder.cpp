#include "atlasground/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "atlasground/rng.hpp"

namespace atlasground {

using nlohmann::json;

// --- Featurizer -----------------------------------------------------------

Featurizer::Featurizer(FeaturizerConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.hash_dims < 1)
    throw std::invalid_argument("featurizer: hash_dims must be >= 1");
  if (cfg_.ngram_orders.empty())
    throw std::invalid_argument("featurizer: need at least one n-gram order");
  for (int n : cfg_.ngram_orders)
    if (n < 1) throw std::invalid_argument("featurizer: n-gram order must be >= 1");
}

SparseVec Featurizer::featurize(const std::vector<std::string>& tokens) const {
  std::map<std::int32_t, double> counts;
  std::string buf;
  for (int order : cfg_.ngram_orders) {
    if (tokens.size() < static_cast<std::size_t>(order)) continue;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
      buf.clear();
      for (int k = 0; k < order; ++k) {
        if (k) buf.push_back('\x1f');
        buf += tokens[i + k];
      }
      const std::int32_t idx = static_cast<std::int32_t>(
          hash_bytes64(buf) % static_cast<std::uint64_t>(cfg_.hash_dims));
      counts[idx] += 1.0;
    }
  }
  SparseVec out;
  out.indices.reserve(counts.size());
  out.values.reserve(counts.size());
  double norm_sq = 0.0;
  for (const auto& [idx, c] : counts) {
    out.indices.push_back(idx);
    out.values.push_back(c);
    norm_sq += c * c;
  }
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : out.values) v *= inv;
  }
  return out;
}

// --- GroundingModel -------------------------------------------------------

namespace {

void init_uniform(std::vector<double>& w, std::size_t rows, std::size_t cols,
                  Rng& rng) {
  // Uniform scaled by fan-in.
  w.resize(rows * cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : w) v = rng.uniform(-s, s);
}

}  // namespace

GroundingModel::GroundingModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
  if (cfg.feature_dims < 1 || cfg.hidden_dims < 1 || cfg.n_classes < 1 ||
      cfg.embed_dims < 1)
    throw std::invalid_argument("model dimensions must be >= 1");
  Rng rng = Rng::substream(seed, "model-init");
  init_uniform(w_hidden_, cfg.hidden_dims, cfg.feature_dims, rng);
  init_uniform(w_ground_, 3, cfg.hidden_dims, rng);
  init_uniform(w_class_, cfg.n_classes, cfg.hidden_dims, rng);
  init_uniform(w_embed_, cfg.embed_dims, cfg.hidden_dims, rng);
  b_hidden_.assign(cfg.hidden_dims, 0.0);
  // Zero grounding bias: training starts at tanh(0) = the atlas center.
  b_ground_.assign(3, 0.0);
  b_class_.assign(cfg.n_classes, 0.0);
  b_embed_.assign(cfg.embed_dims, 0.0);
}

std::size_t GroundingModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* a : parameter_arrays()) n += a->size();
  return n;
}

namespace {

std::vector<double> hidden_forward(const SparseVec& x,
                                   const std::vector<double>& w,
                                   const std::vector<double>& b, int hidden,
                                   int features) {
  std::vector<double> h(b);
  for (std::size_t k = 0; k < x.indices.size(); ++k) {
    const std::int32_t i = x.indices[k];
    if (i < 0 || i >= features)
      throw std::invalid_argument("feature index out of range for model");
    const double v = x.values[k];
    for (int j = 0; j < hidden; ++j)
      h[static_cast<std::size_t>(j)] +=
          w[static_cast<std::size_t>(j) * features + i] * v;
  }
  for (double& v : h) v = std::tanh(v);
  return h;
}

std::vector<double> head_forward(const std::vector<double>& h,
                                 const std::vector<double>& w,
                                 const std::vector<double>& b, int out_dims) {
  const int hidden = static_cast<int>(h.size());
  std::vector<double> out(b);
  for (int o = 0; o < out_dims; ++o) {
    double acc = out[static_cast<std::size_t>(o)];
    const double* row = w.data() + static_cast<std::size_t>(o) * hidden;
    for (int j = 0; j < hidden; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(o)] = acc;
  }
  return out;
}

}  // namespace

Vec3 GroundingModel::forward_ground(const SparseVec& features,
                                    Cache* cache) const {
  std::vector<double> h = hidden_forward(features, w_hidden_, b_hidden_,
                                         cfg_.hidden_dims, cfg_.feature_dims);
  std::vector<double> raw = head_forward(h, w_ground_, b_ground_, 3);
  if (cache) {
    cache->input = features;
    cache->hidden = std::move(h);
  }
  return {std::tanh(raw[0]), std::tanh(raw[1]), std::tanh(raw[2])};
}

std::vector<double> GroundingModel::forward_classify(const SparseVec& features,
                                                     Cache* cache) const {
  std::vector<double> h = hidden_forward(features, w_hidden_, b_hidden_,
                                         cfg_.hidden_dims, cfg_.feature_dims);
  std::vector<double> out = head_forward(h, w_class_, b_class_, cfg_.n_classes);
  if (cache) {
    cache->input = features;
    cache->hidden = std::move(h);
  }
  return out;
}

std::vector<double> GroundingModel::forward_embed(const SparseVec& features,
                                                  Cache* cache) const {
  std::vector<double> h = hidden_forward(features, w_hidden_, b_hidden_,
                                         cfg_.hidden_dims, cfg_.feature_dims);
  std::vector<double> out = head_forward(h, w_embed_, b_embed_, cfg_.embed_dims);
  if (cache) {
    cache->input = features;
    cache->hidden = std::move(h);
  }
  return out;
}

std::vector<std::vector<double>*> GroundingModel::parameter_arrays() {
  return {&w_hidden_, &b_hidden_, &w_ground_, &b_ground_,
          &w_class_,  &b_class_,  &w_embed_,  &b_embed_};
}

std::vector<const std::vector<double>*> GroundingModel::parameter_arrays() const {
  return {&w_hidden_, &b_hidden_, &w_ground_, &b_ground_,
          &w_class_,  &b_class_,  &w_embed_,  &b_embed_};
}

GroundingModel::Grads GroundingModel::zero_grads() const {
  Grads g;
  for (const auto* a : parameter_arrays()) g.arrays.emplace_back(a->size(), 0.0);
  return g;
}

void GroundingModel::Grads::add_scaled(const Grads& other, double scale) {
  for (std::size_t i = 0; i < arrays.size(); ++i)
    for (std::size_t k = 0; k < arrays[i].size(); ++k)
      arrays[i][k] += scale * other.arrays[i][k];
}

void GroundingModel::Grads::scale(double s) {
  for (auto& a : arrays)
    for (double& v : a) v *= s;
}

void GroundingModel::Grads::clear() {
  for (auto& a : arrays) std::fill(a.begin(), a.end(), 0.0);
}

// Parameter array order inside Grads mirrors parameter_arrays():
// 0 w_hidden, 1 b_hidden, 2 w_ground, 3 b_ground, 4 w_class, 5 b_class,
// 6 w_embed, 7 b_embed.

void GroundingModel::accumulate_hidden_grads(const Cache& cache,
                                             const std::vector<double>& dhidden,
                                             Grads& grads) const {
  std::vector<double>& dw = grads.arrays[0];
  std::vector<double>& db = grads.arrays[1];
  for (int j = 0; j < cfg_.hidden_dims; ++j) {
    const double h = cache.hidden[static_cast<std::size_t>(j)];
    const double dz = dhidden[static_cast<std::size_t>(j)] * (1.0 - h * h);
    db[static_cast<std::size_t>(j)] += dz;
    for (std::size_t k = 0; k < cache.input.indices.size(); ++k)
      dw[static_cast<std::size_t>(j) * cfg_.feature_dims +
         cache.input.indices[k]] += dz * cache.input.values[k];
  }
}

void GroundingModel::backward_ground(const Cache& cache, const Vec3& point,
                                     const Vec3& dpoint, Grads& grads) const {
  std::vector<double> dhidden(cfg_.hidden_dims, 0.0);
  std::vector<double>& dw = grads.arrays[2];
  std::vector<double>& db = grads.arrays[3];
  for (int o = 0; o < 3; ++o) {
    const double dz = dpoint[o] * (1.0 - point[o] * point[o]);  // through tanh
    db[static_cast<std::size_t>(o)] += dz;
    const double* row = w_ground_.data() + static_cast<std::size_t>(o) * cfg_.hidden_dims;
    for (int j = 0; j < cfg_.hidden_dims; ++j) {
      dw[static_cast<std::size_t>(o) * cfg_.hidden_dims + j] +=
          dz * cache.hidden[static_cast<std::size_t>(j)];
      dhidden[static_cast<std::size_t>(j)] += dz * row[j];
    }
  }
  accumulate_hidden_grads(cache, dhidden, grads);
}

namespace {

void head_backward(const GroundingModel::Cache& cache,
                   const std::vector<double>& dout,
                   const std::vector<double>& w, int hidden,
                   std::vector<double>& dw, std::vector<double>& db,
                   std::vector<double>& dhidden) {
  for (std::size_t o = 0; o < dout.size(); ++o) {
    const double dz = dout[o];
    db[o] += dz;
    const double* row = w.data() + o * static_cast<std::size_t>(hidden);
    for (int j = 0; j < hidden; ++j) {
      dw[o * static_cast<std::size_t>(hidden) + j] +=
          dz * cache.hidden[static_cast<std::size_t>(j)];
      dhidden[static_cast<std::size_t>(j)] += dz * row[j];
    }
  }
}

}  // namespace

void GroundingModel::backward_classify(const Cache& cache,
                                       const std::vector<double>& dlogits,
                                       Grads& grads) const {
  std::vector<double> dhidden(cfg_.hidden_dims, 0.0);
  head_backward(cache, dlogits, w_class_, cfg_.hidden_dims, grads.arrays[4],
                grads.arrays[5], dhidden);
  accumulate_hidden_grads(cache, dhidden, grads);
}

void GroundingModel::backward_embed(const Cache& cache,
                                    const std::vector<double>& dembed,
                                    Grads& grads) const {
  std::vector<double> dhidden(cfg_.hidden_dims, 0.0);
  head_backward(cache, dembed, w_embed_, cfg_.hidden_dims, grads.arrays[6],
                grads.arrays[7], dhidden);
  accumulate_hidden_grads(cache, dhidden, grads);
}

// --- checkpoint -----------------------------------------------------------
// Layout: "AGCK0001" magic, u32 little-endian header length, JSON header,
// then all parameter arrays as little-endian f64 in parameter_arrays() order.

namespace {

void put_u32_le(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64_le(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64_le(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kMagic[8] = {'A', 'G', 'C', 'K', '0', '0', '0', '1'};

}  // namespace

void GroundingModel::save(const std::filesystem::path& path,
                          const FeaturizerConfig& feat_cfg) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  json header = {
      {"format", "checkpoint/v1"},
      {"seed", seed_},
      {"model",
       {{"feature_dims", cfg_.feature_dims},
        {"hidden_dims", cfg_.hidden_dims},
        {"n_classes", cfg_.n_classes},
        {"embed_dims", cfg_.embed_dims}}},
      {"featurizer",
       {{"hash_dims", feat_cfg.hash_dims}, {"ngram_orders", feat_cfg.ngram_orders}}}};
  const std::string htext = header.dump();
  f.write(kMagic, 8);
  put_u32_le(f, static_cast<std::uint32_t>(htext.size()));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto* arr : parameter_arrays())
    for (double v : *arr) put_f64_le(f, v);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::uint32_t hlen = get_u32_le(f);
  std::string htext(hlen, '\0');
  f.read(htext.data(), hlen);
  json header = json::parse(htext);

  ModelConfig mc;
  mc.feature_dims = header.at("model").at("feature_dims").get<int>();
  mc.hidden_dims = header.at("model").at("hidden_dims").get<int>();
  mc.n_classes = header.at("model").at("n_classes").get<int>();
  mc.embed_dims = header.at("model").at("embed_dims").get<int>();
  FeaturizerConfig fc;
  fc.hash_dims = header.at("featurizer").at("hash_dims").get<int>();
  fc.ngram_orders = header.at("featurizer").at("ngram_orders").get<std::vector<int>>();

  GroundingModel model(mc, header.at("seed").get<std::uint64_t>());
  for (auto* arr : model.parameter_arrays())
    for (double& v : *arr) v = get_f64_le(f);
  if (!f) throw std::runtime_error("checkpoint truncated: " + path.string());
  return LoadedCheckpoint{std::move(model), std::move(fc)};
}

// --- coordinate maps ------------------------------------------------------

Vec3 rescale_to_atlas(const Vec3& point_norm,
                      const std::array<std::int32_t, 3>& dims) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    if (point_norm[a] < -1.0 || point_norm[a] > 1.0)
      throw std::invalid_argument("rescale_to_atlas: coordinate outside [-1, 1]");
    out[a] = (point_norm[a] + 1.0) * 0.5 * (dims[a] - 1);
  }
  return out;
}

Vec3 normalize_to_unit(const Vec3& point_voxel,
                       const std::array<std::int32_t, 3>& dims) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    const double span = dims[a] > 1 ? static_cast<double>(dims[a] - 1) : 1.0;
    out[a] = 2.0 * point_voxel[a] / span - 1.0;
  }
  return out;
}

}  // namespace atlasground
