#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atlasground/atlas.hpp"
#include "atlasground/corpus.hpp"
#include "atlasground/encoder.hpp"
#include "atlasground/sod_loss.hpp"

namespace atlasground {

enum class TrainMode { kSupervised, kSelfSupervised, kSelfSupervisedMasked };
enum class Objective { kSod, kMse, kClassifier, kTriplet };

std::string to_string(TrainMode mode);
std::string to_string(Objective objective);
TrainMode train_mode_from_string(const std::string& s);
Objective objective_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-2;
  double clip_norm = 2.0;
  int epochs = 10;
  int batch_size = 32;
  SodConfig sod;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kSupervised;
  Objective objective = Objective::kSod;
  double triplet_margin = 1.0;
  FeaturizerConfig featurizer;
  int hidden_dims = 64;
  int embed_dims = 3;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_metric;  // per epoch, higher is better
  std::string val_metric_name;
  int selected_epoch = -1;  // argmax of val_metric, earliest on ties
};

// AdamW state for one parameter array set.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

struct AdamWParams {
  double lr = 1e-5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam moment update with bias correction, then decoupled decay
// p -= lr * wd * p.
void adamw_step(std::vector<std::vector<double>*>& params,
                const std::vector<std::vector<double>>& grads, AdamWState& state,
                const AdamWParams& hp);

// Joint L2 norm over all arrays; scales everything down when it exceeds
// max_norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<std::vector<double>>& grads,
                        double max_norm);

// Bit-exact optimizer-state round-trip (little-endian f64).
void save_adamw_state(const AdamWState& state, const std::filesystem::path& path);
AdamWState load_adamw_state(const std::filesystem::path& path);

struct BuiltTargets {
  std::vector<std::string> tokens;  // post-masking input tokens
  std::vector<OrganId> organ_ids;   // ascending
};

inline constexpr const char* kMaskToken = "[MASK]";

// Supervised: annotated ids. Self-supervised: ids whose term occurs in the
// text; the masked variant additionally replaces each occurrence with
// kMaskToken independently with probability 0.5. Self-supervised documents
// without occurrences yield an empty id set (callers skip them).
BuiltTargets build_targets(const Document& doc, const Atlas& atlas,
                           TrainMode mode, Rng& rng);

// N fresh points per target organ, normalized coordinates.
SodTargets make_sod_targets(const Atlas& atlas,
                            const std::vector<OrganId>& organ_ids, int n_points,
                            Rng& rng);

struct TrainResult {
  GroundingModel model;
  TrainHistory history;
};

// Deterministic given cfg.seed. Early stopping keeps the epoch with the best
// validation metric. The objective picks the loss and the head; triplet uses
// batch-hard mining over annotation sets.
TrainResult train(const Atlas& atlas, const std::vector<Document>& train_docs,
                  const std::vector<Document>& val_docs, const TrainConfig& cfg);

// Class index mapping used by the classifier head: registry ids ascending.
std::vector<OrganId> class_index_to_organ(const Atlas& atlas);
int organ_to_class_index(const Atlas& atlas, OrganId id);

void save_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace atlasground
