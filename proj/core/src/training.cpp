#include "atlasground/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "atlasground/metrics.hpp"

namespace atlasground {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kSelfSupervised: return "self_supervised";
    case TrainMode::kSelfSupervisedMasked: return "self_supervised_masked";
  }
  return "?";
}

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::kSod: return "sod";
    case Objective::kMse: return "mse";
    case Objective::kClassifier: return "classifier";
    case Objective::kTriplet: return "triplet";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::kSupervised;
  if (s == "self_supervised") return TrainMode::kSelfSupervised;
  if (s == "self_supervised_masked") return TrainMode::kSelfSupervisedMasked;
  throw std::invalid_argument("unknown train mode: " + s);
}

Objective objective_from_string(const std::string& s) {
  if (s == "sod") return Objective::kSod;
  if (s == "mse") return Objective::kMse;
  if (s == "classifier") return Objective::kClassifier;
  if (s == "triplet") return Objective::kTriplet;
  throw std::invalid_argument("unknown objective: " + s);
}

// --- optimizer ------------------------------------------------------------

void adamw_step(std::vector<std::vector<double>*>& params,
                const std::vector<std::vector<double>>& grads, AdamWState& state,
                const AdamWParams& hp) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adamw_step: parameter/gradient arity mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  for (std::size_t a = 0; a < params.size(); ++a)
    if (params[a]->size() != grads[a].size() ||
        params[a]->size() != state.m[a].size())
      throw std::invalid_argument("adamw_step: shape mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < params.size(); ++a) {
    std::vector<double>& p = *params[a];
    const std::vector<double>& g = grads[a];
    std::vector<double>& m = state.m[a];
    std::vector<double>& v = state.v[a];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
      p[i] -= hp.lr * hp.weight_decay * p[i];
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads,
                        double max_norm) {
  if (max_norm <= 0) throw std::invalid_argument("clip_global_norm: max_norm <= 0");
  double sq = 0.0;
  for (const auto& a : grads)
    for (double v : a) sq += v * v;
  const double n = std::sqrt(sq);
  if (n > max_norm && std::isfinite(max_norm)) {
    const double scale = max_norm / n;
    for (auto& a : grads)
      for (double& v : a) v *= scale;
  }
  return n;
}

namespace {

void write_f64_le(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_adamw_state(const AdamWState& state,
                      const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write optimizer state " + path.string());
  f << "AGOPT001\n" << state.step << "\n" << state.m.size() << "\n";
  for (const auto& a : state.m) f << a.size() << "\n";
  for (const auto& a : state.m)
    for (double v : a) write_f64_le(f, v);
  for (const auto& a : state.v)
    for (double v : a) write_f64_le(f, v);
}

AdamWState load_adamw_state(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read optimizer state " + path.string());
  std::string magic;
  std::getline(f, magic);
  if (magic != "AGOPT001")
    throw std::runtime_error("not an optimizer state file: " + path.string());
  AdamWState state;
  std::size_t n_arrays = 0;
  f >> state.step >> n_arrays;
  std::vector<std::size_t> sizes(n_arrays);
  for (auto& s : sizes) f >> s;
  f.ignore(1);  // trailing newline before the binary block
  for (std::size_t s : sizes) state.m.emplace_back(s, 0.0);
  for (std::size_t s : sizes) state.v.emplace_back(s, 0.0);
  for (auto& a : state.m)
    for (double& v : a) v = read_f64_le(f);
  for (auto& a : state.v)
    for (double& v : a) v = read_f64_le(f);
  if (!f) throw std::runtime_error("optimizer state truncated: " + path.string());
  return state;
}

// --- target construction ----------------------------------------------------

BuiltTargets build_targets(const Document& doc, const Atlas& atlas,
                           TrainMode mode, Rng& rng) {
  BuiltTargets out;
  out.tokens = doc.tokens;
  if (mode == TrainMode::kSupervised) {
    out.organ_ids.assign(doc.annotations.begin(), doc.annotations.end());
    return out;
  }
  const std::vector<TermOccurrence> occs =
      find_term_occurrences(doc.tokens, atlas.registry);
  std::set<OrganId> ids;
  for (const TermOccurrence& o : occs) ids.insert(o.organ);
  out.organ_ids.assign(ids.begin(), ids.end());
  if (mode == TrainMode::kSelfSupervisedMasked) {
    // Replace each whole occurrence span with one mask token, back to front
    // so earlier spans stay valid.
    for (auto it = occs.rbegin(); it != occs.rend(); ++it) {
      if (!rng.bernoulli(0.5)) continue;
      out.tokens.erase(out.tokens.begin() + static_cast<std::ptrdiff_t>(it->begin),
                       out.tokens.begin() + static_cast<std::ptrdiff_t>(it->end));
      out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(it->begin),
                        kMaskToken);
    }
  }
  return out;
}

SodTargets make_sod_targets(const Atlas& atlas,
                            const std::vector<OrganId>& organ_ids, int n_points,
                            Rng& rng) {
  SodTargets t;
  for (OrganId id : organ_ids) {
    std::vector<Vec3> pts =
        sample_organ_points(atlas.registry.organ(id), n_points, rng);
    for (Vec3& p : pts) p = normalize_to_unit(p, atlas.dims);
    t.organs.push_back(std::move(pts));
  }
  return t;
}

std::vector<OrganId> class_index_to_organ(const Atlas& atlas) {
  return atlas.registry.ids();
}

int organ_to_class_index(const Atlas& atlas, OrganId id) {
  const auto ids = atlas.registry.ids();
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id)
    throw std::invalid_argument("organ id not in registry");
  return static_cast<int>(it - ids.begin());
}

// --- training driver --------------------------------------------------------

namespace {

struct PreparedSample {
  std::size_t doc_index;
  SparseVec features;
  std::vector<OrganId> organ_ids;
};

double validation_metric(const GroundingModel& model, const Featurizer& feat,
                         const Atlas& atlas, const GroundingEvaluator& eval,
                         const std::vector<Document>& docs, Objective objective) {
  if (docs.empty()) return 0.0;
  if (objective == Objective::kTriplet) {
    // Grounded IOR does not apply; use leave-one-out R@1 in embedding space.
    std::vector<std::vector<double>> emb;
    std::vector<std::set<int>> ann;
    for (const Document& d : docs) {
      emb.push_back(model.forward_embed(feat.featurize(d.tokens)));
      ann.emplace_back(d.annotations.begin(), d.annotations.end());
    }
    return recall_at_k(emb, ann, 1);
  }
  std::size_t hits = 0, used = 0;
  for (const Document& d : docs) {
    if (d.annotations.empty()) continue;
    ++used;
    Vec3 point;
    if (objective == Objective::kClassifier) {
      const std::vector<double> logits =
          model.forward_classify(feat.featurize(d.tokens));
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      const OrganId organ = class_index_to_organ(atlas)[best];
      point = organ_centroid(atlas.registry.organ(organ));
    } else {
      const Vec3 norm_pt = model.forward_ground(feat.featurize(d.tokens));
      point = rescale_to_atlas(norm_pt, atlas.dims);
    }
    if (eval.ior_hit(point, d.annotations)) ++hits;
  }
  return used == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(used);
}

}  // namespace

TrainResult train(const Atlas& atlas, const std::vector<Document>& train_docs,
                  const std::vector<Document>& val_docs, const TrainConfig& cfg) {
  if (train_docs.empty() || val_docs.empty())
    throw std::invalid_argument("train: empty split");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.learning_rate < 0 || cfg.weight_decay < 0)
    throw std::invalid_argument("train: negative rate");
  if (cfg.objective == Objective::kTriplet && cfg.mode != TrainMode::kSupervised)
    throw std::invalid_argument("train: triplet objective needs annotation sets");

  const Featurizer featurizer(cfg.featurizer);
  ModelConfig mc;
  mc.feature_dims = cfg.featurizer.hash_dims;
  mc.hidden_dims = cfg.hidden_dims;
  mc.n_classes = static_cast<int>(atlas.registry.organs().size());
  mc.embed_dims = cfg.embed_dims;
  GroundingModel model(mc, cfg.seed);
  GroundingEvaluator evaluator(atlas);

  AdamWState opt_state;
  AdamWParams hp;
  hp.lr = cfg.learning_rate;
  hp.weight_decay = cfg.weight_decay;

  TrainHistory history;
  history.val_metric_name =
      cfg.objective == Objective::kTriplet ? "recall_at_1" : "ior";

  GroundingModel best_model = model;
  double best_metric = -1.0;

  std::vector<std::size_t> order(train_docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  GroundingModel::Grads batch_grads = model.zero_grads();
  GroundingModel::Grads sample_grads = model.zero_grads();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle",
                                     static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end = std::min(
          order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));

      // Per-sample target construction with per-(epoch, doc) streams; fresh
      // organ point resampling every epoch.
      std::vector<PreparedSample> batch;
      for (std::size_t bi = batch_start; bi < batch_end; ++bi) {
        const std::size_t di = order[bi];
        const Document& doc = train_docs[di];
        Rng rng = Rng::substream(cfg.seed, "sample",
                                 static_cast<std::uint64_t>(epoch), di);
        BuiltTargets t = build_targets(doc, atlas, cfg.mode, rng);
        if (t.organ_ids.empty()) continue;  // no usable targets; skip
        PreparedSample s;
        s.doc_index = di;
        s.features = featurizer.featurize(t.tokens);
        s.organ_ids = std::move(t.organ_ids);
        batch.push_back(std::move(s));
      }
      if (batch.empty()) continue;

      batch_grads.clear();
      double batch_loss = 0.0;
      std::size_t contributions = 0;

      if (cfg.objective == Objective::kTriplet) {
        std::vector<std::vector<double>> embeddings;
        std::vector<GroundingModel::Cache> caches(batch.size());
        std::vector<std::set<int>> anns;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          embeddings.push_back(
              model.forward_embed(batch[i].features, &caches[i]));
          anns.emplace_back(batch[i].organ_ids.begin(), batch[i].organ_ids.end());
        }
        const std::vector<Triplet> triplets =
            batch_hard_triplets(embeddings, anns);
        if (triplets.empty()) continue;
        for (const Triplet& t : triplets) {
          const TripletLossGrad lg =
              triplet_loss(embeddings[t.anchor], embeddings[t.positive],
                           embeddings[t.negative], cfg.triplet_margin);
          batch_loss += lg.loss;
          model.backward_embed(caches[t.anchor], lg.grad_anchor, batch_grads);
          model.backward_embed(caches[t.positive], lg.grad_positive, batch_grads);
          model.backward_embed(caches[t.negative], lg.grad_negative, batch_grads);
        }
        contributions = triplets.size();
      } else {
        for (const PreparedSample& s : batch) {
          Rng rng = Rng::substream(cfg.seed, "points",
                                   static_cast<std::uint64_t>(epoch), s.doc_index);
          sample_grads.clear();
          double loss = 0.0;
          if (cfg.objective == Objective::kClassifier) {
            GroundingModel::Cache cache;
            const std::vector<double> logits =
                model.forward_classify(s.features, &cache);
            std::set<int> target_idx;
            for (OrganId id : s.organ_ids)
              target_idx.insert(organ_to_class_index(atlas, id));
            const LogitsLossGrad lg =
                multilabel_classifier_loss(logits, target_idx);
            loss = lg.loss;
            model.backward_classify(cache, lg.grad, sample_grads);
          } else {
            const SodTargets targets =
                make_sod_targets(atlas, s.organ_ids, cfg.sod.n_points, rng);
            GroundingModel::Cache cache;
            const Vec3 pred = model.forward_ground(s.features, &cache);
            LossGrad lg;
            if (cfg.objective == Objective::kSod)
              lg = total_loss_and_grad(pred, targets, cfg.sod);
            else
              lg = mse_target_loss(pred, targets);
            loss = lg.loss;
            model.backward_ground(cache, pred, lg.grad, sample_grads);
          }
          batch_loss += loss;
          batch_grads.add_scaled(sample_grads, 1.0);
          ++contributions;
        }
      }

      if (contributions == 0) continue;
      batch_grads.scale(1.0 / static_cast<double>(contributions));
      clip_global_norm(batch_grads.arrays, cfg.clip_norm);
      auto params = model.parameter_arrays();
      adamw_step(params, batch_grads.arrays, opt_state, hp);

      epoch_loss += batch_loss;
      epoch_samples += contributions;
    }

    history.train_loss.push_back(
        epoch_samples == 0 ? 0.0
                           : epoch_loss / static_cast<double>(epoch_samples));
    const double metric = validation_metric(model, featurizer, atlas, evaluator,
                                            val_docs, cfg.objective);
    history.val_metric.push_back(metric);
    if (metric > best_metric) {
      best_metric = metric;
      best_model = model;
      history.selected_epoch = epoch;
    }
  }

  return TrainResult{std::move(best_model), std::move(history)};
}

void save_history(const TrainHistory& history,
                  const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write history " + path.string());
  f << "epoch\ttrain_loss\t" << history.val_metric_name << "\tselected\n";
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", history.train_loss[e]);
    f << e << "\t" << buf << "\t";
    std::snprintf(buf, sizeof(buf), "%.17g", history.val_metric[e]);
    f << buf << "\t"
      << (static_cast<int>(e) == history.selected_epoch ? "*" : "") << "\n";
  }
}

}  // namespace atlasground
