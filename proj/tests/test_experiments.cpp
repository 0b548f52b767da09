#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "atlasground/experiments.hpp"

using namespace atlasground;

namespace {

ExperimentPlan tiny_plan() {
  ExperimentPlan plan;
  plan.name = "tiny";
  plan.seed = 77;

  SyntheticAtlasSpec atlas;
  atlas.dims = {40, 40, 40};
  atlas.resolution_mm = 2.0;
  atlas.organs.push_back({"alpha", {"alpha organ"}, "g1",
                          BallShape{{9, 9, 9}, 3.5}});
  atlas.organs.push_back({"beta", {"beta organ"}, "g1",
                          ShellShape{{9, 30, 9}, 4.0, 1.5}});
  atlas.organs.push_back({"gamma", {"gamma organ"}, "g2",
                          BoxShape{{27, 7, 27}, {32, 12, 32}}});
  atlas.organs.push_back({"delta", {"delta organ"}, "g2",
                          BallShape{{30, 30, 30}, 3.5}});
  plan.atlas_spec = atlas;

  CorpusSpec corpus;
  corpus.docs_per_organ_single = 12;
  corpus.docs_per_organ_multi = 8;
  corpus.filler_vocab_size = 40;
  corpus.bandwidth_mm = 40.0;
  corpus.tokens_per_doc = 10;
  plan.corpus_spec = corpus;

  TrainConfig t;
  t.learning_rate = 0.02;
  t.epochs = 3;
  t.batch_size = 16;
  t.sod.n_points = 24;
  t.featurizer.hash_dims = 512;
  t.hidden_dims = 16;
  plan.train_defaults = t;
  return plan;
}

double table_value(const Table& t, const std::string& method,
                   const std::string& metric) {
  for (const auto& row : t.rows) {
    if (std::get<std::string>(row[0]) == method &&
        std::get<std::string>(row[1]) == metric) {
      if (const auto* d = std::get_if<double>(&row[2])) return *d;
      return std::nan("");
    }
  }
  FAIL("row not found: " << method << "/" << metric);
  return 0;
}

}  // namespace

TEST_CASE("plan JSON round-trip") {
  ExperimentPlan plan = tiny_plan();
  plan.experiments.push_back(GeneralExperiment{{"sod", "center"}});
  plan.experiments.push_back(MergedExperiment{{"alpha", "delta"}});
  plan.experiments.push_back(AblationExperiment{{0.1}, {1.0}, {16}});
  const std::string text = plan_to_json_text(plan);
  const ExperimentPlan back = plan_from_json_text(text, ".");
  CHECK(back.name == plan.name);
  CHECK(back.seed == plan.seed);
  CHECK(back.atlas_spec.has_value());
  CHECK(back.corpus_spec.has_value());
  CHECK(back.experiments.size() == 3);
  CHECK(plan_to_json_text(back) == text);
}

TEST_CASE("config hash keys the configuration") {
  TrainConfig a;
  TrainConfig b;
  finalize_config_seed(a, 1);
  finalize_config_seed(b, 1);
  CHECK(a.seed == b.seed);
  CHECK(train_config_hash(a) == train_config_hash(b));

  TrainConfig c;
  c.sod.gamma_p = 0.5;
  finalize_config_seed(c, 1);
  CHECK(c.seed != a.seed);
  CHECK(train_config_hash(c) != train_config_hash(a));

  TrainConfig d;
  finalize_config_seed(d, 2);  // same config, different plan seed
  CHECK(d.seed != a.seed);
}

TEST_CASE("tiny plan end to end") {
  ExperimentPlan plan = tiny_plan();
  const PlanContext ctx = prepare_context(plan);
  REQUIRE(ctx.split.train.size() > 0);
  REQUIRE(ctx.split.test.size() > 2);

  SUBCASE("general eval emits one row per method and metric") {
    const Table t =
        run_general_eval(ctx, GeneralExperiment{{"sod", "random", "center",
                                                 "frequency"}});
    CHECK(t.rows.size() == 4 * 3);
    CHECK(table_value(t, "center", "ior") >= 0.0);
    CHECK(table_value(t, "sod", "ior") <= 1.0);
  }

  SUBCASE("duplicate method names rejected") {
    CHECK_THROWS_AS(run_general_eval(ctx, GeneralExperiment{{"sod", "sod"}}),
                    std::invalid_argument);
  }

  SUBCASE("ablation grid of one cell matches the general sod row") {
    const Table general = run_general_eval(ctx, GeneralExperiment{{"sod"}});
    AblationExperiment cell;
    cell.gamma_p = {ctx.train_defaults.sod.gamma_p};
    cell.gamma_o = {ctx.train_defaults.sod.gamma_o};
    cell.n_points = {ctx.train_defaults.sod.n_points};
    const Table grid = run_ablation(ctx, cell);
    REQUIRE(grid.rows.size() == 3);
    for (const auto& row : grid.rows) {
      const std::string metric = std::get<std::string>(row[3]);
      const Cell& mean = row[4];
      for (const auto& grow : general.rows) {
        if (std::get<std::string>(grow[1]) != metric) continue;
        CHECK(mean == grow[2]);
      }
    }
  }

  SUBCASE("merged experiment reports per-organ and micro rows") {
    const Table t = run_merged_experiment(ctx, MergedExperiment{{"alpha", "delta"}});
    // 3 methods x 3 organs(two + micro) x 2 metrics
    CHECK(t.rows.size() == 3 * 3 * 2);
    CHECK_THROWS_AS(
        run_merged_experiment(ctx, MergedExperiment{{"alpha", "nope"}}),
        std::invalid_argument);
  }

  SUBCASE("heldout experiment emits per-organ, macro, and stats tables") {
    const auto tables =
        run_heldout_experiment(ctx, HeldoutExperiment{{"sod", "classifier",
                                                       "center"}});
    REQUIRE(tables.size() == 2);
    const Table& main = tables[0];
    bool saw_macro = false;
    for (const auto& row : main.rows)
      if (std::get<std::string>(row[1]) == "macro") saw_macro = true;
    CHECK(saw_macro);
    const Table& stats = tables[1];
    CHECK(stats.rows.size() == 2);  // igr + nvd comparisons
  }

  SUBCASE("self-supervised methods run") {
    const Table t = run_selfsupervised(
        ctx, SelfSupervisedExperiment{{"sod", "random_occurrence"}});
    CHECK(t.rows.size() == 2 * 3);
    // construction guarantees occurrences, so the baseline always lands
    // inside a mentioned organ
    CHECK(table_value(t, "random_occurrence", "ior") == 1.0);
  }

  SUBCASE("retrieval validates k against the database size") {
    RetrievalExperiment exp;
    exp.ks = {static_cast<int>(ctx.split.test.size())};
    CHECK_THROWS_AS(run_retrieval(ctx, exp), std::invalid_argument);
  }
}

TEST_CASE("run_plan writes a reproducible directory") {
  ExperimentPlan plan = tiny_plan();
  plan.experiments.push_back(GeneralExperiment{{"center", "random"}});
  plan.experiments.push_back(AblationExperiment{{0.1}, {1.0}, {8}});

  namespace fs = std::filesystem;
  const fs::path out1 = fs::temp_directory_path() / "ag_plan_run1";
  const fs::path out2 = fs::temp_directory_path() / "ag_plan_run2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  run_plan(plan, out1);
  run_plan(plan, out2);
  unsetenv("SOURCE_DATE_EPOCH");

  CHECK(fs::exists(out1 / "plan.resolved.json"));
  CHECK(fs::exists(out1 / "atlas" / "labels.raw"));
  CHECK(fs::exists(out1 / "corpus.jsonl"));
  CHECK(fs::exists(out1 / "general" / "general.tsv"));
  CHECK(fs::exists(out1 / "ablation" / "ablation.tsv"));
  CHECK(fs::exists(out1 / "summary.txt"));
  CHECK(fs::exists(out1 / "manifest.tsv"));

  // byte-identical reruns
  for (const auto& entry : fs::recursive_directory_iterator(out1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), out1);
    std::ifstream a(entry.path(), std::ios::binary);
    std::ifstream b(out2 / rel, std::ios::binary);
    REQUIRE(b.good());
    std::string sa((std::istreambuf_iterator<char>(a)),
                   std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)),
                   std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }
  fs::remove_all(out1);
  fs::remove_all(out2);
}
