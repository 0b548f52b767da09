#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atlasground/vec3.hpp"

namespace atlasground {

struct FeaturizerConfig {
  int hash_dims = 4096;
  std::vector<int> ngram_orders = {1, 2};
};

struct SparseVec {
  std::vector<std::int32_t> indices;  // ascending, unique
  std::vector<double> values;
};

// Deterministic hashed n-gram counts, L2-normalized. Pure function of the
// token list; an empty list maps to the zero vector.
class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig cfg);
  const FeaturizerConfig& config() const { return cfg_; }
  SparseVec featurize(const std::vector<std::string>& tokens) const;

 private:
  FeaturizerConfig cfg_;
};

struct ModelConfig {
  int feature_dims = 4096;  // must match the featurizer
  int hidden_dims = 64;
  int n_classes = 0;   // organ count
  int embed_dims = 3;  // retrieval embedding width
};

// One hidden tanh layer with three linear heads: a tanh-squashed 3D
// grounding head, an organ-classification head, and a retrieval embedding
// head. Gradients are computed by an explicit reverse pass.
class GroundingModel {
 public:
  GroundingModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const;

  struct Cache {
    SparseVec input;
    std::vector<double> hidden;  // post-tanh
  };

  // Grounding head output, each coordinate in (-1, 1).
  Vec3 forward_ground(const SparseVec& features, Cache* cache = nullptr) const;
  std::vector<double> forward_classify(const SparseVec& features,
                                       Cache* cache = nullptr) const;
  std::vector<double> forward_embed(const SparseVec& features,
                                    Cache* cache = nullptr) const;

  struct Grads;
  void backward_ground(const Cache& cache, const Vec3& point,
                       const Vec3& dpoint, Grads& grads) const;
  void backward_classify(const Cache& cache, const std::vector<double>& dlogits,
                         Grads& grads) const;
  void backward_embed(const Cache& cache, const std::vector<double>& dembed,
                      Grads& grads) const;

  // Flat parameter storage; the optimizer walks these in order.
  std::vector<std::vector<double>*> parameter_arrays();
  std::vector<const std::vector<double>*> parameter_arrays() const;

  struct Grads {
    std::vector<std::vector<double>> arrays;  // same shapes as parameters
    void add_scaled(const Grads& other, double scale);
    void scale(double s);
    void clear();
  };
  Grads zero_grads() const;

  void save(const std::filesystem::path& path,
            const FeaturizerConfig& feat_cfg) const;

 private:
  void accumulate_hidden_grads(const Cache& cache,
                               const std::vector<double>& dhidden,
                               Grads& grads) const;

  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  // Row-major weight matrices.
  std::vector<double> w_hidden_, b_hidden_;  // [hidden x feature], [hidden]
  std::vector<double> w_ground_, b_ground_;  // [3 x hidden], [3]
  std::vector<double> w_class_, b_class_;    // [classes x hidden], [classes]
  std::vector<double> w_embed_, b_embed_;    // [embed x hidden], [embed]
};

struct LoadedCheckpoint {
  GroundingModel model;
  FeaturizerConfig featurizer;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Affine map from (-1,1)^3 to voxel coordinates: -1 -> 0, +1 -> dim-1.
Vec3 rescale_to_atlas(const Vec3& point_norm,
                      const std::array<std::int32_t, 3>& dims);
// Inverse of rescale_to_atlas.
Vec3 normalize_to_unit(const Vec3& point_voxel,
                       const std::array<std::int32_t, 3>& dims);

}  // namespace atlasground
