#pragma once

#include <set>
#include <vector>

#include "atlasground/vec3.hpp"

namespace atlasground {

struct SodConfig {
  double gamma_p = 0.1;  // point temperature
  double gamma_o = 1.0;  // organ temperature
  int n_points = 100;    // points sampled per organ
};

// Per-organ sampled point lists, all the same length, in the model's
// normalized coordinate frame.
struct SodTargets {
  std::vector<std::vector<Vec3>> organs;
};

struct LossGrad {
  double loss = 0.0;
  Vec3 grad;
};

// w_k = exp(-d_k/gamma) / sum_i exp(-d_i/gamma), max-shifted for stability.
std::vector<double> point_softmin_weights(const std::vector<double>& distances,
                                          double gamma_p);

// Soft-min-weighted sum of Euclidean distances from pred to the sampled
// points of one organ: sum_k d_k * w_k.
double organ_loss(const Vec3& pred, const std::vector<Vec3>& points,
                  double gamma_p);

// Two-level loss: organ losses combined with soft-min weights at temperature
// gamma_o. The gradient differentiates through distances and both soft-min
// levels. The norm's subgradient at an exact-zero distance is taken as 0.
LossGrad total_loss_and_grad(const Vec3& pred, const SodTargets& targets,
                             const SodConfig& cfg);

// Squared distance to the mean of all sampled target points.
LossGrad mse_target_loss(const Vec3& pred, const SodTargets& targets);

struct LogitsLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Cross-entropy between softmax(logits) and the multi-hot target normalized
// to sum 1. Gradient is softmax - target.
LogitsLossGrad multilabel_classifier_loss(const std::vector<double>& logits,
                                          const std::set<int>& target_ids);

struct TripletLossGrad {
  double loss = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<double> grad_negative;
};

// max(0, |a-p| - |a-n| + margin); subgradient 0 at the hinge.
TripletLossGrad triplet_loss(const std::vector<double>& anchor,
                             const std::vector<double>& positive,
                             const std::vector<double>& negative,
                             double margin);

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

// Batch-hard mining: per anchor, the farthest same-annotation item and the
// nearest different-annotation item. Anchors without a positive or without a
// negative are skipped. Annotation equality is set equality.
std::vector<Triplet> batch_hard_triplets(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::set<int>>& annotations);

}  // namespace atlasground
