#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "atlasground/atlas.hpp"
#include "atlasground/corpus.hpp"
#include "atlasground/encoder.hpp"
#include "atlasground/experiments.hpp"
#include "atlasground/log.hpp"
#include "atlasground/metrics.hpp"
#include "atlasground/reportio.hpp"
#include "atlasground/training.hpp"

namespace fs = std::filesystem;
using namespace atlasground;

namespace {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_run_manifest(const fs::path& out_dir, const std::string& config_text,
                        std::uint64_t seed,
                        const std::vector<fs::path>& inputs) {
  RunManifest m;
  m.tool_version = tool_version();
  m.config_hash = text_digest_hex(config_text);
  m.seed = seed;
  m.created_utc = current_utc_timestamp();
  for (const fs::path& p : inputs)
    m.input_digests.emplace_back(p.string(), file_digest_hex(p));
  write_manifest(m, out_dir / "manifest.tsv");
}

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  cmd->add_option("--config", args.config, "configuration file (JSON)")
      ->required(config_required);
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--seed", args.seed, "seed override");
}

int cmd_generate_atlas(const CommonArgs& args) {
  const std::string text = read_file(args.config);
  const SyntheticAtlasSpec spec = atlas_spec_from_json_text(text);
  const std::uint64_t seed = args.seed.value_or(0);
  const Atlas atlas = generate_synthetic_atlas(spec, seed);
  fs::create_directories(args.out);
  save_atlas(atlas, args.out);
  write_text(fs::path(args.out) / "config.resolved.json",
             atlas_spec_to_json_text(spec) + "\n");
  write_run_manifest(args.out, atlas_spec_to_json_text(spec), seed,
                     {args.config});
  log_info("atlas written to " + args.out);
  return 0;
}

int cmd_generate_corpus(const CommonArgs& args, const std::string& atlas_dir) {
  const Atlas atlas = load_atlas(atlas_dir);
  CorpusSpec spec = corpus_spec_from_json_text(read_file(args.config));
  if (args.seed) spec.seed = *args.seed;
  const std::vector<Document> docs = generate_corpus(atlas, spec);
  fs::create_directories(args.out);
  save_corpus(docs, fs::path(args.out) / "corpus.jsonl");
  write_text(fs::path(args.out) / "config.resolved.json",
             corpus_spec_to_json_text(spec) + "\n");
  write_run_manifest(args.out, corpus_spec_to_json_text(spec), spec.seed,
                     {args.config, fs::path(atlas_dir) / "labels.raw"});
  log_info("corpus of " + std::to_string(docs.size()) + " documents written");
  return 0;
}

TrainConfig parse_train_config(const std::string& text) {
  // Reuse the plan parser so defaults and key names stay in one place.
  const nlohmann::json plan_json = {
      {"atlas", {{"path", "unused"}}},
      {"corpus", {{"path", "unused"}}},
      {"train", nlohmann::json::parse(text)},
  };
  return plan_from_json_text(plan_json.dump(), ".").train_defaults;
}

int cmd_train(const CommonArgs& args, const std::string& atlas_dir,
              const std::string& corpus_file) {
  const Atlas atlas = load_atlas(atlas_dir);
  const std::vector<Document> docs = load_corpus(corpus_file, &atlas);
  TrainConfig cfg = parse_train_config(read_file(args.config));
  if (args.seed) cfg.seed = *args.seed;
  const CorpusSplit split =
      split_corpus(docs, {0.70, 0.15, 0.15}, mix_seed(cfg.seed, hash_bytes64("split")));

  const TrainResult result = train(atlas, split.train, split.val, cfg);

  fs::create_directories(args.out);
  result.model.save(fs::path(args.out) / "model.ckpt", cfg.featurizer);
  save_history(result.history, fs::path(args.out) / "history.tsv");
  write_text(fs::path(args.out) / "config.resolved.json",
             train_config_to_json_text(cfg) + "\n");
  write_run_manifest(args.out, train_config_to_json_text(cfg), cfg.seed,
                     {args.config, fs::path(atlas_dir) / "labels.raw",
                      corpus_file});
  log_info("selected epoch " + std::to_string(result.history.selected_epoch) +
           ", validation " + result.history.val_metric_name + " " +
           std::to_string(result.history.val_metric[static_cast<std::size_t>(
               result.history.selected_epoch)]));
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& atlas_dir,
                 const std::string& corpus_file, const std::string& model_file,
                 const std::string& predictor) {
  const Atlas atlas = load_atlas(atlas_dir);
  const std::vector<Document> docs = load_corpus(corpus_file, &atlas);
  const std::uint64_t seed = args.seed.value_or(0);
  const CorpusSplit split =
      split_corpus(docs, {0.70, 0.15, 0.15}, mix_seed(seed, hash_bytes64("split")));
  const LoadedCheckpoint ckpt = load_checkpoint(model_file);
  const Featurizer featurizer(ckpt.featurizer);
  const GroundingEvaluator eval(atlas);

  Table table;
  table.name = "evaluate";
  table.columns = {"method", "metric", "mean", "se", "count"};

  auto add_rows = [&](const std::string& method, const std::vector<Vec3>& pts) {
    std::vector<double> ior, nvd;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      ior.push_back(eval.ior_hit(pts[i], split.test[i].annotations) ? 1.0 : 0.0);
      nvd.push_back(eval.nvd_cm(pts[i], split.test[i].annotations));
    }
    for (const MetricEntry& e :
         {aggregate("ior", ior), aggregate("nvd_cm", nvd), nvd_o_cm(nvd)})
      table.add_row({method, e.name,
                     e.mean ? Cell(*e.mean) : Cell(std::monostate{}),
                     e.standard_error, static_cast<std::int64_t>(e.count)});
  };

  std::vector<Vec3> points;
  for (const Document& d : split.test) {
    if (predictor == "classifier") {
      const auto logits = ckpt.model.forward_classify(featurizer.featurize(d.tokens));
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      points.push_back(
          organ_centroid(atlas.registry.organ(class_index_to_organ(atlas)[best])));
    } else {
      points.push_back(rescale_to_atlas(
          ckpt.model.forward_ground(featurizer.featurize(d.tokens)), atlas.dims));
    }
  }
  add_rows("model", points);

  {
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      Rng rng = Rng::substream(seed, "baseline-random", i);
      pts.push_back(random_point_in_random_organ(atlas, rng));
    }
    add_rows("random", pts);
  }
  {
    std::vector<Vec3> pts(split.test.size(), atlas_center(atlas));
    add_rows("center", pts);
  }

  fs::create_directories(args.out);
  write_table(table, fs::path(args.out) / "evaluate.tsv");
  write_text(fs::path(args.out) / "summary.txt", render_table(table));
  nlohmann::json echo = {{"atlas", atlas_dir},
                         {"corpus", corpus_file},
                         {"model", model_file},
                         {"predictor", predictor},
                         {"seed", seed}};
  write_text(fs::path(args.out) / "config.resolved.json", echo.dump(2) + "\n");
  write_run_manifest(args.out, echo.dump(), seed,
                     {fs::path(atlas_dir) / "labels.raw", corpus_file, model_file});
  std::cout << render_table(table);
  return 0;
}

// Runs a plan file restricted to one experiment kind (ablate/retrieve), or
// the whole plan (run-plan).
int cmd_plan(const CommonArgs& args, const std::string& only_kind) {
  const fs::path cfg_path(args.config);
  ExperimentPlan plan =
      plan_from_json_text(read_file(cfg_path), cfg_path.parent_path());
  if (args.seed) plan.seed = *args.seed;
  if (!only_kind.empty()) {
    std::vector<ExperimentKind> kept;
    for (const ExperimentKind& e : plan.experiments) {
      if (only_kind == "ablation" && std::holds_alternative<AblationExperiment>(e))
        kept.push_back(e);
      if (only_kind == "retrieval" && std::holds_alternative<RetrievalExperiment>(e))
        kept.push_back(e);
    }
    if (kept.empty()) {
      if (only_kind == "ablation")
        kept.emplace_back(AblationExperiment{});
      else
        kept.emplace_back(RetrievalExperiment{});
    }
    plan.experiments = std::move(kept);
  }
  if (plan.experiments.empty())
    throw UsageError("plan has no experiments to run");
  run_plan(plan, args.out);
  log_info("plan outputs written to " + args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-to-atlas grounding toolkit"};
  app.set_version_flag("--version", tool_version());
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.require_subcommand(1);

  CommonArgs ga_args, gc_args, tr_args, ev_args, ab_args, re_args, rp_args;
  std::string gc_atlas, tr_atlas, tr_corpus, ev_atlas, ev_corpus, ev_model;
  std::string ev_predictor = "ground";

  CLI::App* ga = app.add_subcommand("generate-atlas",
                                    "generate a synthetic atlas directory");
  add_common(ga, ga_args);

  CLI::App* gc = app.add_subcommand("generate-corpus",
                                    "generate a synthetic document corpus");
  add_common(gc, gc_args);
  gc->add_option("--atlas", gc_atlas, "atlas directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train one grounding model");
  add_common(tr, tr_args);
  tr->add_option("--atlas", tr_atlas, "atlas directory")->required();
  tr->add_option("--corpus", tr_corpus, "corpus JSONL file")->required();

  CLI::App* ev = app.add_subcommand("evaluate",
                                    "evaluate a checkpoint on the test split");
  add_common(ev, ev_args, /*config_required=*/false);
  ev->add_option("--atlas", ev_atlas, "atlas directory")->required();
  ev->add_option("--corpus", ev_corpus, "corpus JSONL file")->required();
  ev->add_option("--model", ev_model, "model checkpoint")->required();
  ev->add_option("--predictor", ev_predictor,
                 "prediction head: ground or classifier")
      ->check(CLI::IsMember({"ground", "classifier"}));

  CLI::App* ab = app.add_subcommand("ablate", "run the temperature/point grid");
  add_common(ab, ab_args);

  CLI::App* re = app.add_subcommand("retrieve", "run the retrieval comparison");
  add_common(re, re_args);

  CLI::App* rp = app.add_subcommand("run-plan", "run every experiment in a plan");
  add_common(rp, rp_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage or help text
    return code == 0 ? 0 : 1;
  }
  if (verbose) set_log_level(LogLevel::kDebug);

  try {
    if (ga->parsed()) return cmd_generate_atlas(ga_args);
    if (gc->parsed()) return cmd_generate_corpus(gc_args, gc_atlas);
    if (tr->parsed()) return cmd_train(tr_args, tr_atlas, tr_corpus);
    if (ev->parsed())
      return cmd_evaluate(ev_args, ev_atlas, ev_corpus, ev_model, ev_predictor);
    if (ab->parsed()) return cmd_plan(ab_args, "ablation");
    if (re->parsed()) return cmd_plan(re_args, "retrieval");
    if (rp->parsed()) return cmd_plan(rp_args, "");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
