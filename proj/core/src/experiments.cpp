#include "atlasground/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "atlasground/log.hpp"
#include "atlasground/metrics.hpp"
#include "atlasground/stats.hpp"

namespace atlasground {

using nlohmann::json;

// --- config (de)serialization ----------------------------------------------

namespace {

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"weight_decay", cfg.weight_decay},
              {"clip_norm", cfg.clip_norm},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"gamma_p", cfg.sod.gamma_p},
              {"gamma_o", cfg.sod.gamma_o},
              {"n_points", cfg.sod.n_points},
              {"seed", cfg.seed},
              {"mode", to_string(cfg.mode)},
              {"objective", to_string(cfg.objective)},
              {"triplet_margin", cfg.triplet_margin},
              {"hash_dims", cfg.featurizer.hash_dims},
              {"ngram_orders", cfg.featurizer.ngram_orders},
              {"hidden_dims", cfg.hidden_dims},
              {"embed_dims", cfg.embed_dims}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.sod.gamma_p = j.value("gamma_p", cfg.sod.gamma_p);
  cfg.sod.gamma_o = j.value("gamma_o", cfg.sod.gamma_o);
  cfg.sod.n_points = j.value("n_points", cfg.sod.n_points);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode"));
  if (j.contains("objective"))
    cfg.objective = objective_from_string(j.at("objective"));
  cfg.triplet_margin = j.value("triplet_margin", cfg.triplet_margin);
  cfg.featurizer.hash_dims = j.value("hash_dims", cfg.featurizer.hash_dims);
  if (j.contains("ngram_orders"))
    cfg.featurizer.ngram_orders = j.at("ngram_orders").get<std::vector<int>>();
  cfg.hidden_dims = j.value("hidden_dims", cfg.hidden_dims);
  cfg.embed_dims = j.value("embed_dims", cfg.embed_dims);
  return cfg;
}

}  // namespace

std::string train_config_to_json_text(const TrainConfig& cfg) {
  return train_config_to_json(cfg).dump();
}

std::string train_config_hash(const TrainConfig& cfg) {
  return text_digest_hex(train_config_to_json_text(cfg));
}

void finalize_config_seed(TrainConfig& cfg, std::uint64_t plan_seed) {
  TrainConfig keyed = cfg;
  keyed.seed = 0;
  cfg.seed = mix_seed(plan_seed, hash_bytes64(train_config_to_json_text(keyed)));
}

// --- plan (de)serialization --------------------------------------------------

ExperimentPlan plan_from_json_text(const std::string& text,
                                   const std::filesystem::path& base_dir) {
  json j = json::parse(text);
  ExperimentPlan plan;
  plan.name = j.value("name", "plan");
  plan.seed = j.value("seed", 0ull);

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  auto read_file = [&](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };

  const json& ja = j.at("atlas");
  if (ja.contains("path"))
    plan.atlas_path = resolve(ja.at("path").get<std::string>());
  else if (ja.contains("spec"))
    plan.atlas_spec = atlas_spec_from_json_text(ja.at("spec").dump());
  else if (ja.contains("spec_path"))
    plan.atlas_spec = atlas_spec_from_json_text(
        read_file(resolve(ja.at("spec_path").get<std::string>())));
  else
    throw std::invalid_argument("plan: atlas needs path, spec, or spec_path");

  const json& jc = j.at("corpus");
  if (jc.contains("path"))
    plan.corpus_path = resolve(jc.at("path").get<std::string>());
  else if (jc.contains("spec"))
    plan.corpus_spec = corpus_spec_from_json_text(jc.at("spec").dump());
  else if (jc.contains("spec_path"))
    plan.corpus_spec = corpus_spec_from_json_text(
        read_file(resolve(jc.at("spec_path").get<std::string>())));
  else
    throw std::invalid_argument("plan: corpus needs path, spec, or spec_path");

  if (j.contains("split")) {
    const json& js = j.at("split");
    plan.split_fractions = {js.at(0).get<double>(), js.at(1).get<double>(),
                            js.at(2).get<double>()};
  }
  if (j.contains("train"))
    plan.train_defaults = train_config_from_json(j.at("train"), TrainConfig{});

  for (const json& je : j.value("experiments", json::array())) {
    const std::string kind = je.at("kind").get<std::string>();
    if (kind == "general") {
      GeneralExperiment e;
      if (je.contains("methods"))
        e.methods = je.at("methods").get<std::vector<std::string>>();
      plan.experiments.emplace_back(std::move(e));
    } else if (kind == "merged") {
      MergedExperiment e;
      e.pair = {je.at("pair").at(0).get<std::string>(),
                je.at("pair").at(1).get<std::string>()};
      plan.experiments.emplace_back(std::move(e));
    } else if (kind == "heldout") {
      HeldoutExperiment e;
      if (je.contains("methods"))
        e.methods = je.at("methods").get<std::vector<std::string>>();
      plan.experiments.emplace_back(std::move(e));
    } else if (kind == "self_supervised") {
      SelfSupervisedExperiment e;
      if (je.contains("methods"))
        e.methods = je.at("methods").get<std::vector<std::string>>();
      plan.experiments.emplace_back(std::move(e));
    } else if (kind == "retrieval") {
      RetrievalExperiment e;
      e.siamese_embed_dims = je.value("siamese_embed_dims", 16);
      if (je.contains("ks")) e.ks = je.at("ks").get<std::vector<int>>();
      plan.experiments.emplace_back(std::move(e));
    } else if (kind == "ablation") {
      AblationExperiment e;
      if (je.contains("gamma_p"))
        e.gamma_p = je.at("gamma_p").get<std::vector<double>>();
      if (je.contains("gamma_o"))
        e.gamma_o = je.at("gamma_o").get<std::vector<double>>();
      if (je.contains("n_points"))
        e.n_points = je.at("n_points").get<std::vector<int>>();
      plan.experiments.emplace_back(std::move(e));
    } else {
      throw std::invalid_argument("plan: unknown experiment kind " + kind);
    }
  }
  return plan;
}

std::string plan_to_json_text(const ExperimentPlan& plan) {
  json j;
  j["name"] = plan.name;
  j["seed"] = plan.seed;
  if (plan.atlas_path)
    j["atlas"] = {{"path", plan.atlas_path->string()}};
  else
    j["atlas"] = {{"spec", json::parse(atlas_spec_to_json_text(*plan.atlas_spec))}};
  if (plan.corpus_path)
    j["corpus"] = {{"path", plan.corpus_path->string()}};
  else
    j["corpus"] = {
        {"spec", json::parse(corpus_spec_to_json_text(*plan.corpus_spec))}};
  j["split"] = {plan.split_fractions[0], plan.split_fractions[1],
                plan.split_fractions[2]};
  j["train"] = train_config_to_json(plan.train_defaults);
  json exps = json::array();
  for (const ExperimentKind& e : plan.experiments) {
    if (const auto* g = std::get_if<GeneralExperiment>(&e))
      exps.push_back({{"kind", "general"}, {"methods", g->methods}});
    else if (const auto* m = std::get_if<MergedExperiment>(&e))
      exps.push_back({{"kind", "merged"}, {"pair", {m->pair[0], m->pair[1]}}});
    else if (const auto* h = std::get_if<HeldoutExperiment>(&e))
      exps.push_back({{"kind", "heldout"}, {"methods", h->methods}});
    else if (const auto* s = std::get_if<SelfSupervisedExperiment>(&e))
      exps.push_back({{"kind", "self_supervised"}, {"methods", s->methods}});
    else if (const auto* r = std::get_if<RetrievalExperiment>(&e))
      exps.push_back({{"kind", "retrieval"},
                      {"siamese_embed_dims", r->siamese_embed_dims},
                      {"ks", r->ks}});
    else if (const auto* a = std::get_if<AblationExperiment>(&e))
      exps.push_back({{"kind", "ablation"},
                      {"gamma_p", a->gamma_p},
                      {"gamma_o", a->gamma_o},
                      {"n_points", a->n_points}});
  }
  j["experiments"] = exps;
  return j.dump(2);
}

// --- context ------------------------------------------------------------------

PlanContext prepare_context(const ExperimentPlan& plan) {
  PlanContext ctx;
  ctx.seed = plan.seed;
  ctx.train_defaults = plan.train_defaults;

  if (plan.atlas_path) {
    ctx.atlas = load_atlas(*plan.atlas_path);
  } else if (plan.atlas_spec) {
    ctx.atlas = generate_synthetic_atlas(*plan.atlas_spec,
                                         mix_seed(plan.seed, hash_bytes64("atlas")));
    ctx.atlas_generated = true;
  } else {
    throw std::invalid_argument("plan has no atlas");
  }

  if (plan.corpus_path) {
    ctx.corpus = load_corpus(*plan.corpus_path, &ctx.atlas);
  } else if (plan.corpus_spec) {
    CorpusSpec spec = *plan.corpus_spec;
    spec.seed = mix_seed(plan.seed, hash_bytes64("corpus"));
    ctx.corpus = generate_corpus(ctx.atlas, spec);
    ctx.corpus_generated = true;
  } else {
    throw std::invalid_argument("plan has no corpus");
  }

  ctx.split = split_corpus(ctx.corpus, plan.split_fractions,
                           mix_seed(plan.seed, hash_bytes64("split")));
  return ctx;
}

// --- shared evaluation machinery ---------------------------------------------

namespace {

struct TrainedMethod {
  TrainConfig cfg;
  GroundingModel model;
  TrainHistory history;
};

TrainedMethod train_method(const Atlas& atlas,
                           const std::vector<Document>& train_docs,
                           const std::vector<Document>& val_docs,
                           TrainConfig cfg, std::uint64_t plan_seed) {
  finalize_config_seed(cfg, plan_seed);
  TrainResult r = train(atlas, train_docs, val_docs, cfg);
  return TrainedMethod{cfg, std::move(r.model), std::move(r.history)};
}

Vec3 grounded_point(const TrainedMethod& tm, const Atlas& atlas,
                    const std::vector<std::string>& tokens) {
  const Featurizer feat(tm.cfg.featurizer);
  const Vec3 p = tm.model.forward_ground(feat.featurize(tokens));
  return rescale_to_atlas(p, atlas.dims);
}

// Average voxel point of the argmax class.
Vec3 classifier_point(const TrainedMethod& tm, const Atlas& atlas,
                      const std::vector<std::string>& tokens) {
  const Featurizer feat(tm.cfg.featurizer);
  const std::vector<double> logits =
      tm.model.forward_classify(feat.featurize(tokens));
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  const OrganId organ = class_index_to_organ(atlas)[best];
  return organ_centroid(atlas.registry.organ(organ));
}

OrganId most_frequent_organ(const Atlas& atlas,
                            const std::vector<Document>& train_docs) {
  std::map<OrganId, std::size_t> freq;
  for (const Document& d : train_docs)
    for (OrganId id : d.annotations) ++freq[id];
  OrganId best = atlas.registry.ids().front();
  std::size_t best_count = 0;
  for (const auto& [id, count] : freq)
    if (count > best_count) {  // map order gives smallest id on ties
      best = id;
      best_count = count;
    }
  return best;
}

struct GroundingSamples {
  std::vector<double> ior;  // 0/1 per doc
  std::vector<double> nvd;  // cm per doc
};

GroundingSamples score_grounding(const GroundingEvaluator& eval,
                                 const std::vector<Vec3>& points,
                                 const std::vector<const Document*>& docs) {
  GroundingSamples out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out.ior.push_back(eval.ior_hit(points[i], docs[i]->annotations) ? 1.0 : 0.0);
    out.nvd.push_back(eval.nvd_cm(points[i], docs[i]->annotations));
  }
  return out;
}

void append_metric_rows(Table& table, const std::string& method,
                        const GroundingSamples& s, const Cell& config_hash) {
  const MetricEntry ior = aggregate("ior", s.ior);
  const MetricEntry nvd = aggregate("nvd_cm", s.nvd);
  const MetricEntry nvdo = nvd_o_cm(s.nvd);
  for (const MetricEntry& e : {ior, nvd, nvdo}) {
    table.add_row({method, e.name,
                   e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                   e.standard_error, static_cast<std::int64_t>(e.count),
                   config_hash});
  }
}

std::vector<const Document*> doc_ptrs(const std::vector<Document>& docs) {
  std::vector<const Document*> out;
  out.reserve(docs.size());
  for (const Document& d : docs) out.push_back(&d);
  return out;
}

TrainConfig with_objective(TrainConfig cfg, Objective obj, TrainMode mode) {
  cfg.objective = obj;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

// --- general ---------------------------------------------------------------

Table run_general_eval(const PlanContext& ctx, const GeneralExperiment& exp) {
  {
    std::set<std::string> names(exp.methods.begin(), exp.methods.end());
    if (names.size() != exp.methods.size())
      throw std::invalid_argument("general: duplicate method names");
  }
  const GroundingEvaluator eval(ctx.atlas);
  const auto test_docs = doc_ptrs(ctx.split.test);

  Table table;
  table.name = "general";
  table.columns = {"method", "metric", "mean", "se", "count", "config_hash"};

  for (const std::string& method : exp.methods) {
    log_info("general: method " + method);
    std::vector<Vec3> points(test_docs.size());
    Cell hash = std::monostate{};
    if (method == "sod" || method == "mse" || method == "classifier") {
      const Objective obj = method == "sod"   ? Objective::kSod
                            : method == "mse" ? Objective::kMse
                                              : Objective::kClassifier;
      const TrainedMethod tm = train_method(
          ctx.atlas, ctx.split.train, ctx.split.val,
          with_objective(ctx.train_defaults, obj, TrainMode::kSupervised),
          ctx.seed);
      hash = train_config_hash(tm.cfg);
      for (std::size_t i = 0; i < test_docs.size(); ++i)
        points[i] = method == "classifier"
                        ? classifier_point(tm, ctx.atlas, test_docs[i]->tokens)
                        : grounded_point(tm, ctx.atlas, test_docs[i]->tokens);
    } else if (method == "random") {
      for (std::size_t i = 0; i < test_docs.size(); ++i) {
        Rng rng = Rng::substream(ctx.seed, "baseline-random", i);
        points[i] = random_point_in_random_organ(ctx.atlas, rng);
      }
    } else if (method == "center") {
      for (std::size_t i = 0; i < test_docs.size(); ++i)
        points[i] = atlas_center(ctx.atlas);
    } else if (method == "frequency") {
      const OrganId organ = most_frequent_organ(ctx.atlas, ctx.split.train);
      const Vec3 p = organ_centroid(ctx.atlas.registry.organ(organ));
      for (std::size_t i = 0; i < test_docs.size(); ++i) points[i] = p;
    } else {
      throw std::invalid_argument("general: unknown method " + method);
    }
    append_metric_rows(table, method, score_grounding(eval, points, test_docs),
                       hash);
  }
  return table;
}

// --- merged ------------------------------------------------------------------

Table run_merged_experiment(const PlanContext& ctx, const MergedExperiment& exp) {
  OrganId id_a = 0, id_b = 0;
  for (const Organ& o : ctx.atlas.registry.organs()) {
    if (o.name == exp.pair[0]) id_a = o.id;
    if (o.name == exp.pair[1]) id_b = o.id;
  }
  if (id_a == 0 || id_b == 0 || id_a == id_b)
    throw std::invalid_argument("merged: pair organs not found or identical");

  // Training pool: documents that mention either member of the pair.
  std::vector<Document> pool;
  auto touches_pair = [&](const Document& d) {
    return d.annotations.count(id_a) || d.annotations.count(id_b);
  };
  for (const Document& d : ctx.split.train)
    if (touches_pair(d)) pool.push_back(d);
  std::vector<Document> val_pool;
  for (const Document& d : ctx.split.val)
    if (touches_pair(d)) val_pool.push_back(d);
  if (pool.empty() || val_pool.empty())
    throw std::invalid_argument("merged: no qualifying training documents");

  const Atlas merged =
      merge_organs(ctx.atlas, {id_a, id_b}, exp.pair[0] + "_" + exp.pair[1]);
  auto remap = [&](std::vector<Document> docs) {
    for (Document& d : docs) {
      if (d.annotations.erase(id_b)) d.annotations.insert(id_a);
    }
    return docs;
  };
  const std::vector<Document> pool_merged = remap(pool);
  const std::vector<Document> val_merged = remap(val_pool);

  // Evaluation: test documents about exactly one of the two organs.
  std::vector<const Document*> docs_a, docs_b;
  for (const Document& d : ctx.split.test) {
    if (d.annotations == std::set<OrganId>{id_a}) docs_a.push_back(&d);
    if (d.annotations == std::set<OrganId>{id_b}) docs_b.push_back(&d);
  }
  if (docs_a.empty() && docs_b.empty())
    throw std::invalid_argument("merged: no qualifying test documents");

  const GroundingEvaluator eval(ctx.atlas);
  Table table;
  table.name = "merged_" + exp.pair[0] + "_" + exp.pair[1];
  table.columns = {"method", "organ", "metric", "mean",
                   "se",     "count", "config_hash"};

  struct MethodRun {
    std::string name;
    const Atlas* train_atlas;
    const std::vector<Document>* train_docs;
    const std::vector<Document>* val_docs;
    Objective objective;
  };
  const MethodRun runs[3] = {
      {"sod_unmerged", &ctx.atlas, &pool, &val_pool, Objective::kSod},
      {"classifier", &merged, &pool_merged, &val_merged, Objective::kClassifier},
      {"sod_merged", &merged, &pool_merged, &val_merged, Objective::kSod},
  };

  for (const MethodRun& run : runs) {
    log_info("merged: method " + run.name);
    const TrainedMethod tm = train_method(
        *run.train_atlas, *run.train_docs, *run.val_docs,
        with_objective(ctx.train_defaults, run.objective, TrainMode::kSupervised),
        ctx.seed);
    const Cell hash = train_config_hash(tm.cfg);

    auto predict = [&](const Document& d) {
      return run.objective == Objective::kClassifier
                 ? classifier_point(tm, *run.train_atlas, d.tokens)
                 : grounded_point(tm, *run.train_atlas, d.tokens);
    };

    GroundingSamples micro;
    const std::pair<const std::vector<const Document*>*, std::string> sides[2] =
        {{&docs_a, exp.pair[0]}, {&docs_b, exp.pair[1]}};
    for (const auto& [docs, organ_name] : sides) {
      std::vector<Vec3> points;
      for (const Document* d : *docs) points.push_back(predict(*d));
      const GroundingSamples s = score_grounding(eval, points, *docs);
      const MetricEntry ior = aggregate("ior", s.ior);
      const MetricEntry nvd = aggregate("nvd_cm", s.nvd);
      for (const MetricEntry& e : {ior, nvd})
        table.add_row({run.name, organ_name, e.name,
                       e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                       e.standard_error, static_cast<std::int64_t>(e.count),
                       hash});
      micro.ior.insert(micro.ior.end(), s.ior.begin(), s.ior.end());
      micro.nvd.insert(micro.nvd.end(), s.nvd.begin(), s.nvd.end());
    }
    const MetricEntry ior = aggregate("ior", micro.ior);
    const MetricEntry nvd = aggregate("nvd_cm", micro.nvd);
    for (const MetricEntry& e : {ior, nvd})
      table.add_row({run.name, std::string("micro"), e.name,
                     e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                     e.standard_error, static_cast<std::int64_t>(e.count), hash});
  }
  return table;
}

// --- held-out organs ----------------------------------------------------------

std::vector<Table> run_heldout_experiment(const PlanContext& ctx,
                                          const HeldoutExperiment& exp) {
  const GroundingEvaluator eval(ctx.atlas);

  Table table;
  table.name = "heldout";
  table.columns = {"method", "organ", "metric", "mean",
                   "se",     "count", "config_hash"};

  // Per-method, per-organ means; feeds the macro rows and the paired test.
  std::map<std::string, std::vector<double>> igr_by_method, nvd_by_method;
  std::map<std::string, Cell> hash_by_method;

  std::vector<const Organ*> heldout_organs;
  for (const Organ& o : ctx.atlas.registry.organs()) {
    if (ctx.atlas.registry.groups().at(o.group).size() < 2) {
      log_warn("heldout: skipping organ '" + o.name +
               "': functional group has a single member");
      continue;
    }
    heldout_organs.push_back(&o);
  }
  if (heldout_organs.empty())
    throw std::invalid_argument("heldout: no organ has a multi-member group");

  for (const Organ* organ : heldout_organs) {
    const OrganId held = organ->id;
    // Drop documents solely about the held-out organ; strip its annotation
    // from the rest (validation included, so early stopping is blind to it).
    auto strip = [&](const std::vector<Document>& docs) {
      std::vector<Document> out;
      for (const Document& d : docs) {
        if (!d.annotations.count(held)) {
          out.push_back(d);
          continue;
        }
        Document copy = d;
        copy.annotations.erase(held);
        if (!copy.annotations.empty()) out.push_back(std::move(copy));
      }
      return out;
    };
    const std::vector<Document> train_docs = strip(ctx.split.train);
    const std::vector<Document> val_docs = strip(ctx.split.val);

    std::vector<const Document*> test_docs;
    for (const Document& d : ctx.split.test)
      if (d.annotations == std::set<OrganId>{held}) test_docs.push_back(&d);
    if (test_docs.empty()) {
      log_warn("heldout: skipping organ '" + organ->name +
               "': no single-organ test documents");
      continue;
    }

    for (const std::string& method : exp.methods) {
      log_info("heldout: organ " + organ->name + ", method " + method);
      std::vector<Vec3> points(test_docs.size());
      Cell hash = std::monostate{};
      if (method == "sod" || method == "classifier") {
        const Objective obj =
            method == "sod" ? Objective::kSod : Objective::kClassifier;
        const TrainedMethod tm = train_method(
            ctx.atlas, train_docs, val_docs,
            with_objective(ctx.train_defaults, obj, TrainMode::kSupervised),
            ctx.seed);
        hash = train_config_hash(tm.cfg);
        for (std::size_t i = 0; i < test_docs.size(); ++i)
          points[i] = obj == Objective::kClassifier
                          ? classifier_point(tm, ctx.atlas, test_docs[i]->tokens)
                          : grounded_point(tm, ctx.atlas, test_docs[i]->tokens);
      } else if (method == "random") {
        for (std::size_t i = 0; i < test_docs.size(); ++i) {
          Rng rng = Rng::substream(ctx.seed, "heldout-random",
                                   static_cast<std::uint64_t>(held), i);
          points[i] = random_point_in_random_organ(ctx.atlas, rng);
        }
      } else if (method == "center") {
        for (std::size_t i = 0; i < test_docs.size(); ++i)
          points[i] = atlas_center(ctx.atlas);
      } else {
        throw std::invalid_argument("heldout: unknown method " + method);
      }

      std::vector<double> igr, nvd;
      for (std::size_t i = 0; i < test_docs.size(); ++i) {
        igr.push_back(eval.igr_hit(points[i], held) ? 1.0 : 0.0);
        nvd.push_back(eval.nvd_cm(points[i], {held}));
      }
      const MetricEntry e_igr = aggregate("igr", igr);
      const MetricEntry e_nvd = aggregate("nvd_cm", nvd);
      for (const MetricEntry& e : {e_igr, e_nvd})
        table.add_row({method, organ->name, e.name,
                       e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                       e.standard_error, static_cast<std::int64_t>(e.count),
                       hash});
      igr_by_method[method].push_back(*e_igr.mean);
      nvd_by_method[method].push_back(*e_nvd.mean);
      hash_by_method[method] = hash;
    }
  }

  // Macro averages over held-out organs.
  for (const std::string& method : exp.methods) {
    const MetricEntry igr = aggregate("igr", igr_by_method[method]);
    const MetricEntry nvd = aggregate("nvd_cm", nvd_by_method[method]);
    for (const MetricEntry& e : {igr, nvd})
      table.add_row({method, std::string("macro"), e.name,
                     e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                     e.standard_error, static_cast<std::int64_t>(e.count),
                     hash_by_method[method]});
  }

  std::vector<Table> out;
  out.push_back(std::move(table));

  if (igr_by_method.count("sod") && igr_by_method.count("classifier")) {
    Table stats;
    stats.name = "heldout_stats";
    stats.columns = {"comparison", "metric", "statistic",
                     "p_value",    "n_used", "exact"};
    const WilcoxonResult w_igr = wilcoxon_signed_rank_greater(
        igr_by_method["sod"], igr_by_method["classifier"]);
    // NVD: lower is better, so test classifier > sod.
    const WilcoxonResult w_nvd = wilcoxon_signed_rank_greater(
        nvd_by_method["classifier"], nvd_by_method["sod"]);
    for (const auto& [metric, w] :
         {std::pair<std::string, const WilcoxonResult&>{"igr", w_igr},
          std::pair<std::string, const WilcoxonResult&>{"nvd_cm", w_nvd}}) {
      stats.add_row({std::string("sod_vs_classifier"), metric, w.statistic,
                     w.p_value ? Cell(*w.p_value) : Cell(std::monostate{}),
                     static_cast<std::int64_t>(w.n_used),
                     std::string(w.exact ? "exact" : "normal")});
    }
    out.push_back(std::move(stats));
  }
  return out;
}

// --- self-supervised ----------------------------------------------------------

Table run_selfsupervised(const PlanContext& ctx,
                         const SelfSupervisedExperiment& exp) {
  const GroundingEvaluator eval(ctx.atlas);
  const auto test_docs = doc_ptrs(ctx.split.test);

  Table table;
  table.name = "self_supervised";
  table.columns = {"method", "metric", "mean", "se", "count", "config_hash"};

  for (const std::string& method : exp.methods) {
    log_info("self_supervised: method " + method);
    std::vector<Vec3> points(test_docs.size());
    Cell hash = std::monostate{};
    if (method == "random_occurrence") {
      for (std::size_t i = 0; i < test_docs.size(); ++i) {
        std::set<OrganId> occurring;
        for (const TermOccurrence& occ :
             find_term_occurrences(test_docs[i]->tokens, ctx.atlas.registry))
          occurring.insert(occ.organ);
        if (occurring.empty()) {
          points[i] = atlas_center(ctx.atlas);
          continue;
        }
        Rng rng = Rng::substream(ctx.seed, "baseline-occurrence", i);
        std::vector<OrganId> ids(occurring.begin(), occurring.end());
        const Organ& o =
            ctx.atlas.registry.organ(ids[rng.uniform_index(ids.size())]);
        points[i] = to_vec3(o.voxels[rng.uniform_index(o.voxels.size())]);
      }
    } else {
      Objective obj;
      TrainMode mode;
      if (method == "sod") {
        obj = Objective::kSod;
        mode = TrainMode::kSelfSupervised;
      } else if (method == "sod_masked") {
        obj = Objective::kSod;
        mode = TrainMode::kSelfSupervisedMasked;
      } else if (method == "classifier") {
        obj = Objective::kClassifier;
        mode = TrainMode::kSelfSupervised;
      } else if (method == "classifier_masked") {
        obj = Objective::kClassifier;
        mode = TrainMode::kSelfSupervisedMasked;
      } else {
        throw std::invalid_argument("self_supervised: unknown method " + method);
      }
      const TrainedMethod tm =
          train_method(ctx.atlas, ctx.split.train, ctx.split.val,
                       with_objective(ctx.train_defaults, obj, mode), ctx.seed);
      hash = train_config_hash(tm.cfg);
      for (std::size_t i = 0; i < test_docs.size(); ++i)
        points[i] = obj == Objective::kClassifier
                        ? classifier_point(tm, ctx.atlas, test_docs[i]->tokens)
                        : grounded_point(tm, ctx.atlas, test_docs[i]->tokens);
    }
    append_metric_rows(table, method, score_grounding(eval, points, test_docs),
                       hash);
  }
  return table;
}

// --- retrieval ------------------------------------------------------------------

Table run_retrieval(const PlanContext& ctx, const RetrievalExperiment& exp) {
  const auto& test = ctx.split.test;
  const int max_k = *std::max_element(exp.ks.begin(), exp.ks.end());
  if (test.size() < static_cast<std::size_t>(max_k) + 1)
    throw std::invalid_argument("retrieval: test split smaller than max K + 1");

  std::vector<std::set<int>> annotations;
  for (const Document& d : test)
    annotations.emplace_back(d.annotations.begin(), d.annotations.end());

  Table table;
  table.name = "retrieval";
  table.columns = {"method", "metric", "mean", "se", "count", "config_hash"};

  auto add_rows = [&](const std::string& method,
                      const std::vector<std::vector<double>>& points,
                      const Cell& hash) {
    for (int k : exp.ks) {
      // Per-query hit indicators so the row carries a standard error.
      std::vector<double> hits;
      for (std::size_t q = 0; q < points.size(); ++q) {
        std::vector<std::vector<double>> db;
        std::vector<std::set<int>> db_ann;
        for (std::size_t i = 0; i < points.size(); ++i) {
          if (i == q) continue;
          db.push_back(points[i]);
          db_ann.push_back(annotations[i]);
        }
        hits.push_back(
            retrieval_hit(points[q], annotations[q], db, db_ann, k) ? 1.0 : 0.0);
      }
      const MetricEntry e = aggregate("recall@" + std::to_string(k), hits);
      table.add_row({method, e.name, e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                     e.standard_error, static_cast<std::int64_t>(e.count), hash});
    }
  };

  {
    log_info("retrieval: method sod");
    const TrainedMethod tm = train_method(
        ctx.atlas, ctx.split.train, ctx.split.val,
        with_objective(ctx.train_defaults, Objective::kSod, TrainMode::kSupervised),
        ctx.seed);
    std::vector<std::vector<double>> points;
    for (const Document& d : test) {
      const Vec3 p = grounded_point(tm, ctx.atlas, d.tokens);
      // Physical coordinates; scaling keeps ranks but matches the metric space.
      points.push_back({p.x * ctx.atlas.resolution_mm,
                        p.y * ctx.atlas.resolution_mm,
                        p.z * ctx.atlas.resolution_mm});
    }
    add_rows("sod", points, train_config_hash(tm.cfg));
  }

  for (const int dims : {3, exp.siamese_embed_dims}) {
    const std::string name = "siamese_" + std::to_string(dims) + "d";
    log_info("retrieval: method " + name);
    TrainConfig cfg = with_objective(ctx.train_defaults, Objective::kTriplet,
                                     TrainMode::kSupervised);
    cfg.embed_dims = dims;
    const TrainedMethod tm =
        train_method(ctx.atlas, ctx.split.train, ctx.split.val, cfg, ctx.seed);
    const Featurizer feat(tm.cfg.featurizer);
    std::vector<std::vector<double>> points;
    for (const Document& d : test)
      points.push_back(tm.model.forward_embed(feat.featurize(d.tokens)));
    add_rows(name, points, train_config_hash(tm.cfg));
  }

  {
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < test.size(); ++i) {
      Rng rng = Rng::substream(ctx.seed, "baseline-embedding", i);
      points.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    }
    add_rows("random_embedding", points, std::monostate{});
  }
  return table;
}

// --- ablation ---------------------------------------------------------------------

Table run_ablation(const PlanContext& ctx, const AblationExperiment& exp) {
  if (exp.gamma_p.empty() || exp.gamma_o.empty() || exp.n_points.empty())
    throw std::invalid_argument("ablation: empty grid");
  const GroundingEvaluator eval(ctx.atlas);
  const auto test_docs = doc_ptrs(ctx.split.test);

  Table table;
  table.name = "ablation";
  table.columns = {"gamma_p", "gamma_o", "n_points", "metric",
                   "mean",    "se",      "count",    "config_hash"};

  for (double gp : exp.gamma_p)
    for (double go : exp.gamma_o)
      for (int n : exp.n_points) {
        log_info("ablation: gamma_p=" + std::to_string(gp) +
                 " gamma_o=" + std::to_string(go) + " n=" + std::to_string(n));
        TrainConfig cfg = with_objective(ctx.train_defaults, Objective::kSod,
                                         TrainMode::kSupervised);
        cfg.sod.gamma_p = gp;
        cfg.sod.gamma_o = go;
        cfg.sod.n_points = n;
        const TrainedMethod tm =
            train_method(ctx.atlas, ctx.split.train, ctx.split.val, cfg, ctx.seed);
        const Cell hash = train_config_hash(tm.cfg);
        std::vector<Vec3> points;
        for (const Document* d : test_docs)
          points.push_back(grounded_point(tm, ctx.atlas, d->tokens));
        const GroundingSamples s = score_grounding(eval, points, test_docs);
        const MetricEntry ior = aggregate("ior", s.ior);
        const MetricEntry nvd = aggregate("nvd_cm", s.nvd);
        const MetricEntry nvdo = nvd_o_cm(s.nvd);
        for (const MetricEntry& e : {ior, nvd, nvdo})
          table.add_row({gp, go, static_cast<std::int64_t>(n), e.name,
                         e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                         e.standard_error, static_cast<std::int64_t>(e.count),
                         hash});
      }
  return table;
}

// --- plan runner ---------------------------------------------------------------

void run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string resolved = plan_to_json_text(plan);
  {
    std::ofstream f(out_dir / "plan.resolved.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write resolved plan");
    f << resolved << "\n";
  }

  PlanContext ctx = prepare_context(plan);
  if (ctx.atlas_generated) save_atlas(ctx.atlas, out_dir / "atlas");
  if (ctx.corpus_generated) save_corpus(ctx.corpus, out_dir / "corpus.jsonl");

  std::ostringstream summary;
  std::set<std::string> used_names;
  auto unique_dir = [&](std::string base) {
    std::string name = base;
    int suffix = 2;
    while (!used_names.insert(name).second)
      name = base + "_" + std::to_string(suffix++);
    return name;
  };

  for (const ExperimentKind& e : plan.experiments) {
    std::vector<Table> tables;
    std::string base;
    if (const auto* g = std::get_if<GeneralExperiment>(&e)) {
      base = "general";
      tables.push_back(run_general_eval(ctx, *g));
    } else if (const auto* m = std::get_if<MergedExperiment>(&e)) {
      base = "merged_" + m->pair[0] + "_" + m->pair[1];
      tables.push_back(run_merged_experiment(ctx, *m));
    } else if (const auto* h = std::get_if<HeldoutExperiment>(&e)) {
      base = "heldout";
      tables = run_heldout_experiment(ctx, *h);
    } else if (const auto* s = std::get_if<SelfSupervisedExperiment>(&e)) {
      base = "self_supervised";
      tables.push_back(run_selfsupervised(ctx, *s));
    } else if (const auto* r = std::get_if<RetrievalExperiment>(&e)) {
      base = "retrieval";
      tables.push_back(run_retrieval(ctx, *r));
    } else if (const auto* a = std::get_if<AblationExperiment>(&e)) {
      base = "ablation";
      tables.push_back(run_ablation(ctx, *a));
    }
    const std::string dir_name = unique_dir(base);
    const std::filesystem::path exp_dir = out_dir / dir_name;
    std::filesystem::create_directories(exp_dir);
    for (const Table& t : tables) {
      write_table(t, exp_dir / (t.name + ".tsv"));
      summary << render_table(t) << "\n";
    }
  }

  {
    std::ofstream f(out_dir / "summary.txt", std::ios::binary);
    f << summary.str();
  }

  RunManifest manifest;
  manifest.tool_version = tool_version();
  manifest.config_hash = text_digest_hex(resolved);
  manifest.seed = plan.seed;
  manifest.created_utc = current_utc_timestamp();
  if (plan.atlas_path)
    manifest.input_digests.emplace_back(
        plan.atlas_path->string(),
        file_digest_hex(*plan.atlas_path / "labels.raw"));
  if (plan.corpus_path)
    manifest.input_digests.emplace_back(plan.corpus_path->string(),
                                        file_digest_hex(*plan.corpus_path));
  write_manifest(manifest, out_dir / "manifest.tsv");
}

}  // namespace atlasground
