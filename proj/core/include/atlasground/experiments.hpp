#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "atlasground/atlas.hpp"
#include "atlasground/corpus.hpp"
#include "atlasground/reportio.hpp"
#include "atlasground/training.hpp"

namespace atlasground {

struct GeneralExperiment {
  std::vector<std::string> methods = {"sod",    "mse",    "classifier",
                                      "random", "center", "frequency"};
};
struct MergedExperiment {
  std::array<std::string, 2> pair;  // organ names
};
struct HeldoutExperiment {
  std::vector<std::string> methods = {"sod", "classifier", "random", "center"};
};
struct SelfSupervisedExperiment {
  std::vector<std::string> methods = {"sod", "sod_masked", "classifier",
                                      "classifier_masked", "random_occurrence"};
};
struct RetrievalExperiment {
  int siamese_embed_dims = 16;
  std::vector<int> ks = {1, 5, 10};
};
struct AblationExperiment {
  std::vector<double> gamma_p = {0.1, 0.5, 1.0};
  std::vector<double> gamma_o = {0.1, 0.5, 1.0};
  std::vector<int> n_points = {100, 1000};
};

using ExperimentKind =
    std::variant<GeneralExperiment, MergedExperiment, HeldoutExperiment,
                 SelfSupervisedExperiment, RetrievalExperiment,
                 AblationExperiment>;

struct ExperimentPlan {
  std::string name = "plan";
  std::uint64_t seed = 0;
  // Exactly one of path/spec per input.
  std::optional<std::filesystem::path> atlas_path;
  std::optional<SyntheticAtlasSpec> atlas_spec;
  std::optional<std::filesystem::path> corpus_path;
  std::optional<CorpusSpec> corpus_spec;
  std::array<double, 3> split_fractions = {0.70, 0.15, 0.15};
  TrainConfig train_defaults;
  std::vector<ExperimentKind> experiments;
};

ExperimentPlan plan_from_json_text(const std::string& text,
                                   const std::filesystem::path& base_dir);
std::string plan_to_json_text(const ExperimentPlan& plan);

// Canonical JSON of a train configuration; the digest keys both the table's
// config_hash column and the per-method RNG stream.
std::string train_config_to_json_text(const TrainConfig& cfg);
std::string train_config_hash(const TrainConfig& cfg);

// Fills cfg.seed from the plan seed and the configuration itself, so equal
// configurations reproduce equal models within a plan.
void finalize_config_seed(TrainConfig& cfg, std::uint64_t plan_seed);

struct PlanContext {
  Atlas atlas;
  bool atlas_generated = false;  // came from an inline spec
  std::vector<Document> corpus;
  bool corpus_generated = false;
  CorpusSplit split;
  TrainConfig train_defaults;
  std::uint64_t seed = 0;
};

PlanContext prepare_context(const ExperimentPlan& plan);

Table run_general_eval(const PlanContext& ctx, const GeneralExperiment& exp);
Table run_merged_experiment(const PlanContext& ctx, const MergedExperiment& exp);
// Main table plus a Wilcoxon comparison table.
std::vector<Table> run_heldout_experiment(const PlanContext& ctx,
                                          const HeldoutExperiment& exp);
Table run_selfsupervised(const PlanContext& ctx,
                         const SelfSupervisedExperiment& exp);
Table run_retrieval(const PlanContext& ctx, const RetrievalExperiment& exp);
Table run_ablation(const PlanContext& ctx, const AblationExperiment& exp);

// Runs every experiment in the plan into out_dir: resolved plan, generated
// inputs, one directory of tables per experiment, manifest, and a
// human-readable summary.
void run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir);

}  // namespace atlasground
