#include "atlasground/sod_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atlasground {

std::vector<double> point_softmin_weights(const std::vector<double>& distances,
                                          double gamma_p) {
  if (distances.empty())
    throw std::invalid_argument("point_softmin_weights: empty distance list");
  if (gamma_p <= 0) throw std::invalid_argument("gamma_p must be > 0");
  const double d_min = *std::min_element(distances.begin(), distances.end());
  std::vector<double> w(distances.size());
  double z = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    w[i] = std::exp(-(distances[i] - d_min) / gamma_p);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

namespace {

struct OrganEval {
  double loss = 0.0;
  Vec3 grad;  // dL_o / dpred
};

// One organ's soft-min-weighted distance sum and its gradient:
//   dL_o/dd_m = w_m * (1 + (L_o - d_m) / gamma_p)
// chained through dd_m/dpred = (pred - y_m)/d_m (0 when d_m == 0).
OrganEval eval_organ(const Vec3& pred, const std::vector<Vec3>& points,
                     double gamma_p) {
  if (points.empty()) throw std::invalid_argument("organ with no sampled points");
  const std::size_t n = points.size();
  std::vector<double> d(n);
  for (std::size_t k = 0; k < n; ++k) d[k] = distance(pred, points[k]);
  const std::vector<double> w = point_softmin_weights(d, gamma_p);

  OrganEval out;
  for (std::size_t k = 0; k < n; ++k) out.loss += d[k] * w[k];
  for (std::size_t k = 0; k < n; ++k) {
    if (d[k] == 0.0) continue;  // zero-distance term contributes no gradient
    const double coeff = w[k] * (1.0 + (out.loss - d[k]) / gamma_p) / d[k];
    out.grad += coeff * (pred - points[k]);
  }
  return out;
}

}  // namespace

double organ_loss(const Vec3& pred, const std::vector<Vec3>& points,
                  double gamma_p) {
  return eval_organ(pred, points, gamma_p).loss;
}

LossGrad total_loss_and_grad(const Vec3& pred, const SodTargets& targets,
                             const SodConfig& cfg) {
  if (targets.organs.empty())
    throw std::invalid_argument("total_loss_and_grad: no target organs");
  const std::size_t m = targets.organs.size();
  std::vector<OrganEval> evals(m);
  for (std::size_t j = 0; j < m; ++j)
    evals[j] = eval_organ(pred, targets.organs[j], cfg.gamma_p);

  std::vector<double> losses(m);
  for (std::size_t j = 0; j < m; ++j) losses[j] = evals[j].loss;
  const std::vector<double> v = point_softmin_weights(losses, cfg.gamma_o);

  LossGrad out;
  for (std::size_t j = 0; j < m; ++j) out.loss += losses[j] * v[j];
  // dL_t/dL_o^m = v_m * (1 + (L_t - L_o^m)/gamma_o), same form as the inner
  // level, then chain through each organ's gradient.
  for (std::size_t j = 0; j < m; ++j) {
    const double coeff = v[j] * (1.0 + (out.loss - losses[j]) / cfg.gamma_o);
    out.grad += coeff * evals[j].grad;
  }
  return out;
}

LossGrad mse_target_loss(const Vec3& pred, const SodTargets& targets) {
  if (targets.organs.empty())
    throw std::invalid_argument("mse_target_loss: no target organs");
  Vec3 mean;
  std::size_t count = 0;
  for (const auto& pts : targets.organs) {
    if (pts.empty()) throw std::invalid_argument("organ with no sampled points");
    for (const Vec3& p : pts) {
      mean += p;
      ++count;
    }
  }
  mean *= 1.0 / static_cast<double>(count);
  LossGrad out;
  const Vec3 diff = pred - mean;
  out.loss = norm_sq(diff);
  out.grad = 2.0 * diff;
  return out;
}

LogitsLossGrad multilabel_classifier_loss(const std::vector<double>& logits,
                                          const std::set<int>& target_ids) {
  if (target_ids.empty())
    throw std::invalid_argument("multilabel_classifier_loss: empty target set");
  for (int t : target_ids)
    if (t < 0 || t >= static_cast<int>(logits.size()))
      throw std::invalid_argument("target index out of range");

  const double z_max = *std::max_element(logits.begin(), logits.end());
  double z_sum = 0.0;
  for (double l : logits) z_sum += std::exp(l - z_max);
  const double log_z = z_max + std::log(z_sum);

  LogitsLossGrad out;
  out.grad.resize(logits.size());
  const double q = 1.0 / static_cast<double>(target_ids.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out.grad[i] = std::exp(logits[i] - log_z);
  for (int t : target_ids) {
    out.loss -= q * (logits[static_cast<std::size_t>(t)] - log_z);
    out.grad[static_cast<std::size_t>(t)] -= q;
  }
  return out;
}

namespace {

double vec_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TripletLossGrad triplet_loss(const std::vector<double>& anchor,
                             const std::vector<double>& positive,
                             const std::vector<double>& negative,
                             double margin) {
  if (anchor.empty() || anchor.size() != positive.size() ||
      anchor.size() != negative.size())
    throw std::invalid_argument("triplet_loss: vector size mismatch");
  if (margin < 0) throw std::invalid_argument("triplet_loss: negative margin");

  const std::size_t d = anchor.size();
  const double dp = vec_distance(anchor, positive);
  const double dn = vec_distance(anchor, negative);
  TripletLossGrad out;
  out.grad_anchor.assign(d, 0.0);
  out.grad_positive.assign(d, 0.0);
  out.grad_negative.assign(d, 0.0);
  const double raw = dp - dn + margin;
  if (raw <= 0.0) return out;  // hinge inactive; subgradient 0 at equality
  out.loss = raw;
  for (std::size_t i = 0; i < d; ++i) {
    if (dp > 0.0) {
      const double g = (anchor[i] - positive[i]) / dp;
      out.grad_anchor[i] += g;
      out.grad_positive[i] -= g;
    }
    if (dn > 0.0) {
      const double g = (anchor[i] - negative[i]) / dn;
      out.grad_anchor[i] -= g;
      out.grad_negative[i] += g;
    }
  }
  return out;
}

std::vector<Triplet> batch_hard_triplets(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::set<int>>& annotations) {
  if (embeddings.size() != annotations.size())
    throw std::invalid_argument("batch_hard_triplets: size mismatch");
  const std::size_t n = embeddings.size();
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < n; ++a) {
    double worst_pos = -1.0, best_neg = std::numeric_limits<double>::infinity();
    std::size_t pos = n, neg = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == a) continue;
      const double d = vec_distance(embeddings[a], embeddings[i]);
      if (annotations[i] == annotations[a]) {
        if (d > worst_pos) { worst_pos = d; pos = i; }
      } else {
        if (d < best_neg) { best_neg = d; neg = i; }
      }
    }
    if (pos < n && neg < n) out.push_back({a, pos, neg});
  }
  return out;
}

}  // namespace atlasground
