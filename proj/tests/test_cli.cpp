#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "atlasground/reportio.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = ATLASGROUND_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(kCli) + " " + args + " >/dev/null 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void expect_identical_trees(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), a);
    INFO("file: " << rel.string());
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(entry.path()) == slurp(b / rel));
  }
  CHECK(files > 0);
}

struct TempTree {
  fs::path root;
  explicit TempTree(const std::string& name)
      : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  fs::path operator/(const std::string& sub) const { return root / sub; }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

const char* kTinyAtlasSpec = R"({
  "dims": [30, 30, 30],
  "resolution_mm": 2.0,
  "organs": [
    {"name": "alpha", "synonyms": ["alpha organ"], "group": "g1",
     "shape": {"kind": "ball", "center": [8, 8, 8], "radius": 3.0}},
    {"name": "delta", "synonyms": ["delta organ"], "group": "g2",
     "shape": {"kind": "ball", "center": [22, 22, 22], "radius": 3.0}}
  ]
})";

const char* kTinyCorpusSpec = R"({
  "docs_per_organ_single": 20,
  "docs_per_organ_multi": 10,
  "filler_vocab_size": 30,
  "bandwidth_mm": 40.0,
  "tokens_per_doc": 10,
  "seed": 5
})";

const char* kTinyTrainConfig = R"({
  "learning_rate": 0.02,
  "epochs": 3,
  "batch_size": 16,
  "n_points": 16,
  "hash_dims": 256,
  "hidden_dims": 8,
  "seed": 3
})";

}  // namespace

TEST_CASE("version and help exit cleanly") {
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("run-plan --help") == 0);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli("") == 1);                             // missing subcommand
  CHECK(run_cli("no-such-command") == 1);              // unknown subcommand
  CHECK(run_cli("generate-atlas --out /tmp/x") == 1);  // missing --config
  CHECK(run_cli("generate-atlas --config a.json --out /tmp/x --bogus 1") == 1);
}

TEST_CASE("missing config file exits 1 without partial outputs") {
  TempTree t("ag_cli_missing");
  const fs::path out = t / "out";
  CHECK(run_cli("generate-atlas --config " + (t / "absent.json").string() +
                " --out " + out.string() + " --seed 7") == 1);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("runtime failures exit with code 2") {
  TempTree t("ag_cli_runtime");
  write_file(t / "train.json", kTinyTrainConfig);
  const int rc = run_cli("train --config " + (t / "train.json").string() +
                         " --atlas " + (t / "no_atlas").string() +
                         " --corpus " + (t / "no_corpus").string() + " --out " +
                         (t / "out").string());
  CHECK(rc == 2);
}

TEST_CASE("pipeline subcommands are deterministic per seed") {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  TempTree t("ag_cli_pipeline");
  write_file(t / "atlas.json", kTinyAtlasSpec);
  write_file(t / "corpus.json", kTinyCorpusSpec);
  write_file(t / "train.json", kTinyTrainConfig);

  SUBCASE("generate-atlas twice") {
    REQUIRE(run_cli("generate-atlas --config " + (t / "atlas.json").string() +
                    " --out " + (t / "a1").string() + " --seed 7") == 0);
    REQUIRE(run_cli("generate-atlas --config " + (t / "atlas.json").string() +
                    " --out " + (t / "a2").string() + " --seed 7") == 0);
    expect_identical_trees(t / "a1", t / "a2");
    CHECK(fs::exists(t / "a1" / "meta"));
    CHECK(fs::exists(t / "a1" / "labels.raw"));
    CHECK(fs::exists(t / "a1" / "config.resolved.json"));
    CHECK(fs::exists(t / "a1" / "manifest.tsv"));
  }

  SUBCASE("full pipeline and reruns") {
    REQUIRE(run_cli("generate-atlas --config " + (t / "atlas.json").string() +
                    " --out " + (t / "atlas").string() + " --seed 7") == 0);
    REQUIRE(run_cli("generate-corpus --config " + (t / "corpus.json").string() +
                    " --atlas " + (t / "atlas").string() + " --out " +
                    (t / "c1").string() + " --seed 11") == 0);
    REQUIRE(run_cli("generate-corpus --config " + (t / "corpus.json").string() +
                    " --atlas " + (t / "atlas").string() + " --out " +
                    (t / "c2").string() + " --seed 11") == 0);
    expect_identical_trees(t / "c1", t / "c2");

    const std::string corpus = (t / "c1" / "corpus.jsonl").string();
    REQUIRE(run_cli("train --config " + (t / "train.json").string() +
                    " --atlas " + (t / "atlas").string() + " --corpus " +
                    corpus + " --out " + (t / "m1").string() + " --seed 3") == 0);
    REQUIRE(run_cli("train --config " + (t / "train.json").string() +
                    " --atlas " + (t / "atlas").string() + " --corpus " +
                    corpus + " --out " + (t / "m2").string() + " --seed 3") == 0);
    expect_identical_trees(t / "m1", t / "m2");
    CHECK(fs::exists(t / "m1" / "model.ckpt"));
    CHECK(fs::exists(t / "m1" / "history.tsv"));

    REQUIRE(run_cli("evaluate --model " + (t / "m1" / "model.ckpt").string() +
                    " --atlas " + (t / "atlas").string() + " --corpus " +
                    corpus + " --out " + (t / "e1").string() + " --seed 3") == 0);
    const atlasground::Table table =
        atlasground::read_table(t / "e1" / "evaluate.tsv");
    CHECK(table.columns.size() == 5);
    CHECK(table.rows.size() == 9);  // model + random + center
  }

  SUBCASE("run-plan reruns byte-identically") {
    const std::string plan = std::string(R"({
      "name": "cli_plan",
      "seed": 4,
      "atlas": {"spec_path": "atlas.json"},
      "corpus": {"spec_path": "corpus.json"},
      "train": )") + kTinyTrainConfig + R"(,
      "experiments": [
        {"kind": "general", "methods": ["center", "random", "frequency"]},
        {"kind": "ablation", "gamma_p": [0.1], "gamma_o": [1.0], "n_points": [8]}
      ]
    })";
    write_file(t / "plan.json", plan);
    REQUIRE(run_cli("run-plan --config " + (t / "plan.json").string() +
                    " --out " + (t / "p1").string()) == 0);
    REQUIRE(run_cli("run-plan --config " + (t / "plan.json").string() +
                    " --out " + (t / "p2").string()) == 0);
    expect_identical_trees(t / "p1", t / "p2");
    CHECK(fs::exists(t / "p1" / "plan.resolved.json"));
    CHECK(fs::exists(t / "p1" / "general" / "general.tsv"));
    CHECK(fs::exists(t / "p1" / "ablation" / "ablation.tsv"));
    CHECK(fs::exists(t / "p1" / "summary.txt"));

    // a different seed changes the outputs
    REQUIRE(run_cli("run-plan --config " + (t / "plan.json").string() +
                    " --out " + (t / "p3").string() + " --seed 99") == 0);
    CHECK(slurp(t / "p1" / "general" / "general.tsv") !=
          slurp(t / "p3" / "general" / "general.tsv"));
  }

  unsetenv("SOURCE_DATE_EPOCH");
}
