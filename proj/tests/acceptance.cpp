// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

#include "atlasground/atlas.hpp"
#include "atlasground/corpus.hpp"
#include "atlasground/experiments.hpp"
#include "atlasground/geometry.hpp"
#include "atlasground/log.hpp"
#include "atlasground/metrics.hpp"
#include "atlasground/sod_loss.hpp"
#include "atlasground/training.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace atlasground;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": "
            << what;
  if (!detail.empty()) std::cout << " [" << detail << "]";
  std::cout << std::endl;
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

SodTargets random_targets(Rng& rng, int m, int n) {
  SodTargets t;
  for (int j = 0; j < m; ++j) {
    std::vector<Vec3> pts;
    for (int k = 0; k < n; ++k)
      pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    t.organs.push_back(std::move(pts));
  }
  return t;
}

// --- criterion 1: gradient suite -------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  const double gammas[3] = {0.1, 1.0, 10.0};
  const int ms[3] = {1, 2, 3};
  const int ns[3] = {1, 3, 5};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    SodConfig cfg;
    cfg.gamma_p = gammas[rng.uniform_index(3)];
    cfg.gamma_o = gammas[rng.uniform_index(3)];
    const int m = ms[rng.uniform_index(3)];
    const int n = ns[rng.uniform_index(3)];
    const SodTargets targets = random_targets(rng, m, n);
    const Vec3 pred{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const LossGrad lg = total_loss_and_grad(pred, targets, cfg);
    const Vec3 fd = testutil::central_difference(
        [&](const Vec3& p) { return total_loss_and_grad(p, targets, cfg).loss; },
        pred, 1e-5);
    worst = std::max(worst, testutil::max_rel_error(lg.grad, fd));
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream detail;
  detail << "max rel err " << worst << ", " << elapsed << " s";
  report(1, "analytic SOD gradient matches central differences on 100 instances",
         worst < 1e-4 && elapsed < 5.0, detail.str());
}

// --- criterion 2: limit suite -----------------------------------------------

void criterion_limits() {
  Rng rng(1002);
  bool ok = true;
  std::ostringstream detail;
  for (int trial = 0; trial < 50 && ok; ++trial) {
    // distances with pairwise separation >= 0.5, realized exactly on an axis
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    std::vector<double> distances;
    double d = rng.uniform(0.5, 1.5);
    for (int i = 0; i < n; ++i) {
      distances.push_back(d);
      d += 0.5 + rng.uniform(0, 1.0);
    }
    std::vector<Vec3> points;
    for (double dist : distances) points.push_back({dist, 0, 0});
    double min_d = distances.front(), mean_d = 0.0;
    for (double dist : distances) mean_d += dist;
    mean_d /= static_cast<double>(n);

    const double lo_min = organ_loss({0, 0, 0}, points, 1e-4);
    const double lo_mean = organ_loss({0, 0, 0}, points, 1e6);
    if (std::abs(lo_min - min_d) > 1e-3 || std::abs(lo_mean - mean_d) > 1e-3) {
      ok = false;
      detail << "min err " << std::abs(lo_min - min_d) << ", mean err "
             << std::abs(lo_mean - mean_d);
    }
  }
  // M = 1 makes the two levels coincide
  for (int trial = 0; trial < 50 && ok; ++trial) {
    SodConfig cfg;
    cfg.gamma_p = 0.37;
    cfg.gamma_o = 2.3;
    const SodTargets t = random_targets(rng, 1, 5);
    const Vec3 pred{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double lt = total_loss_and_grad(pred, t, cfg).loss;
    const double lo = organ_loss(pred, t.organs[0], cfg.gamma_p);
    if (std::abs(lt - lo) > 1e-12) {
      ok = false;
      detail << "M=1 gap " << std::abs(lt - lo);
    }
  }
  report(2, "soft-min limits (min, mean) and the M=1 identity", ok, detail.str());
}

// --- criterion 3: invariance suite -------------------------------------------

void criterion_invariances() {
  Rng rng(1003);
  SodConfig cfg;
  double worst_t = 0.0, worst_r = 0.0, worst_p = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform_index(3));
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    const SodTargets t = random_targets(rng, m, n);
    const Vec3 pred{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double base = total_loss_and_grad(pred, t, cfg).loss;

    const Vec3 shift{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    SodTargets shifted = t;
    for (auto& organ : shifted.organs)
      for (Vec3& p : organ) p += shift;
    worst_t = std::max(
        worst_t,
        std::abs(total_loss_and_grad(pred + shift, shifted, cfg).loss - base));

    const auto rot = testutil::random_rotation(rng);
    SodTargets rotated = t;
    for (auto& organ : rotated.organs)
      for (Vec3& p : organ) p = testutil::apply_rotation(rot, p);
    worst_r = std::max(
        worst_r, std::abs(total_loss_and_grad(testutil::apply_rotation(rot, pred),
                                              rotated, cfg)
                              .loss -
                          base));

    SodTargets permuted = t;
    for (auto& organ : permuted.organs) {
      Rng r2(rng.next_u64());
      r2.shuffle(organ);
    }
    std::reverse(permuted.organs.begin(), permuted.organs.end());
    worst_p = std::max(
        worst_p, std::abs(total_loss_and_grad(pred, permuted, cfg).loss - base));
  }
  std::ostringstream detail;
  detail << "translation " << worst_t << ", rotation " << worst_r
         << ", permutation " << worst_p;
  report(3, "translation/rotation/permutation invariance of the total loss",
         worst_t <= 1e-12 && worst_r <= 1e-9 && worst_p <= 1e-12, detail.str());
}

// --- criterion 4: geometry oracles --------------------------------------------

void criterion_geometry() {
  bool ok = true;
  std::ostringstream detail;

  // nearest-voxel distance vs brute force on the 515-voxel ball
  std::vector<VoxelIndex> ball;
  for (int z = 14; z <= 26; ++z)
    for (int y = 14; y <= 26; ++y)
      for (int x = 14; x <= 26; ++x) {
        const double dx = x - 20.0, dy = y - 20.0, dz = z - 20.0;
        if (dx * dx + dy * dy + dz * dz <= 25.0) ball.push_back({x, y, z});
      }
  if (ball.size() != 515) {
    ok = false;
    detail << "ball size " << ball.size();
  }
  PointIndex index(ball);
  Rng rng(1004);
  for (int i = 0; i < 1000 && ok; ++i) {
    const Vec3 p{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40)};
    double best_sq = std::numeric_limits<double>::infinity();
    for (const VoxelIndex& v : ball) {
      const double dx = p.x - v[0], dy = p.y - v[1], dz = p.z - v[2];
      best_sq = std::min(best_sq, dx * dx + dy * dy + dz * dz);
    }
    if (index.nearest_distance(p) != std::sqrt(best_sq)) {
      ok = false;
      detail << "nearest mismatch at probe " << i;
    }
  }

  // recall@k vs an independent brute-force top-k scan
  std::vector<std::vector<double>> pts;
  std::vector<std::set<int>> ann;
  for (int i = 0; i < 60; ++i) {
    pts.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    ann.push_back({static_cast<int>(rng.uniform_index(6))});
  }
  for (int k : {1, 5, 10}) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < pts.size(); ++q) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i == q) continue;
        double s = 0;
        for (int a = 0; a < 3; ++a)
          s += (pts[q][a] - pts[i][a]) * (pts[q][a] - pts[i][a]);
        d.push_back({s, i});
      }
      bool hit = false;
      for (int r = 0; r < k; ++r) {
        auto it = std::min_element(d.begin(), d.end());
        if (ann[it->second] == ann[q]) hit = true;
        d.erase(it);
      }
      if (hit) ++hits;
    }
    const double oracle = double(hits) / double(pts.size());
    if (recall_at_k(pts, ann, k) != oracle) {
      ok = false;
      detail << "recall@" << k << " mismatch";
    }
  }

  // point_in_hull vs convex-combination certificates: 200 probes per hull
  for (int hull_id = 0; hull_id < 3 && ok; ++hull_id) {
    std::vector<Vec3> points;
    for (int i = 0; i < 40; ++i)
      points.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const ConvexHull3 hull(points);
    for (int i = 0; i < 100 && ok; ++i) {
      std::vector<double> w(points.size());
      double total = 0.0;
      for (double& x : w) {
        x = rng.uniform01();
        total += x;
      }
      Vec3 p;
      for (std::size_t k = 0; k < points.size(); ++k)
        p += (w[k] / total) * points[k];
      if (!point_in_hull(hull, p)) {
        ok = false;
        detail << "convex combination rejected (hull " << hull_id << ")";
      }
    }
    for (int i = 0; i < 100 && ok; ++i) {
      Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
      dir *= 1.0 / norm(dir);
      double support = -1e300;
      Vec3 arg;
      for (const Vec3& q : points)
        if (dot(dir, q) > support) {
          support = dot(dir, q);
          arg = q;
        }
      const Vec3 p = arg + (0.02 * hull.diameter()) * dir;
      if (point_in_hull(hull, p)) {
        ok = false;
        detail << "outside certificate accepted (hull " << hull_id << ")";
      }
    }
  }
  report(4, "nearest-voxel, recall@k, and hull membership match brute force",
         ok, detail.str());
}

// --- criterion 5: metric boundaries --------------------------------------------

void criterion_metric_boundaries() {
  bool ok = true;
  std::ostringstream detail;

  SyntheticAtlasSpec spec;
  spec.dims = {40, 40, 40};
  spec.resolution_mm = 1.0;
  spec.organs.push_back({"dot", {}, "g", BoxShape{{5, 5, 5}, {5, 5, 5}}});
  spec.organs.push_back({"box", {}, "g", BoxShape{{20, 20, 20}, {22, 22, 22}}});
  const Atlas atlas = generate_synthetic_atlas(spec, 0);
  const GroundingEvaluator eval(atlas);

  if (!eval.ior_hit({5, 5, 14.9}, {1})) { ok = false; detail << "9.9mm missed; "; }
  if (eval.ior_hit({5, 5, 15.0}, {1})) { ok = false; detail << "10.0mm hit; "; }
  if (!eval.ior_hit({5.4, 4.6, 5.0}, {1})) { ok = false; detail << "membership missed; "; }

  Rng rng(1005);
  for (int i = 0; i < 500 && ok; ++i) {
    const Vec3 p{rng.uniform(0, 39), rng.uniform(0, 39), rng.uniform(0, 39)};
    const double nvd = eval.nvd_cm(p, {1, 2});
    const VoxelIndex v = round_to_voxel(p, atlas.dims);
    const bool inside = atlas.label_at(v) == 1 || atlas.label_at(v) == 2;
    if ((nvd == 0.0) != inside) { ok = false; detail << "nvd=0 iff inside violated; "; }
    const bool hit = eval.ior_hit(p, {1, 2});
    if (nvd == 0.0 && !hit) { ok = false; detail << "nvd 0 but miss; "; }
    if (nvd >= 1.0 && hit) { ok = false; detail << "nvd >= 1cm but hit; "; }
  }

  for (int trial = 0; trial < 50 && ok; ++trial) {
    std::vector<double> samples;
    const int n = 1 + static_cast<int>(rng.uniform_index(20));
    for (int i = 0; i < n; ++i)
      samples.push_back(rng.bernoulli(0.5) ? 0.0 : rng.uniform(0.01, 4.0));
    const MetricEntry nvd = aggregate("nvd", samples);
    const MetricEntry nvdo = nvd_o_cm(samples);
    if (nvdo.count > 0 && *nvdo.mean < *nvd.mean - 1e-12) {
      ok = false;
      detail << "nvd-o below nvd; ";
    }
  }
  report(5, "IOR strict 10 mm boundary, NVD zero-inside, NVD-O dominance", ok,
         detail.str());
}

// --- criterion 6: synthetic benchmark -------------------------------------------

double lookup(const Table& t, const std::string& method,
              const std::string& metric, const std::string& organ = "") {
  for (const auto& row : t.rows) {
    if (std::get<std::string>(row[0]) != method) continue;
    if (organ.empty()) {
      if (std::get<std::string>(row[1]) != metric) continue;
      if (const auto* d = std::get_if<double>(&row[2])) return *d;
      return std::nan("");
    }
    if (std::get<std::string>(row[1]) != organ) continue;
    if (std::get<std::string>(row[2]) != metric) continue;
    if (const auto* d = std::get_if<double>(&row[3])) return *d;
    return std::nan("");
  }
  return std::nan("");
}

void criterion_benchmark() {
  const auto t0 = Clock::now();
  const fs::path config_dir(ATLASGROUND_CONFIG_DIR);
  std::ifstream f(config_dir / "benchmark.plan.json");
  std::stringstream ss;
  ss << f.rdbuf();
  const ExperimentPlan plan = plan_from_json_text(ss.str(), config_dir);
  const PlanContext ctx = prepare_context(plan);

  const Table general = run_general_eval(
      ctx, GeneralExperiment{{"sod", "mse", "classifier", "random", "center",
                              "frequency"}});
  const double sod_ior = lookup(general, "sod", "ior");
  const double sod_nvdo = lookup(general, "sod", "nvd_o_cm");
  const double cls_nvdo = lookup(general, "classifier", "nvd_o_cm");
  {
    std::ostringstream d;
    d << "sod ior " << sod_ior;
    report(6, "(a) trained SOD IOR >= 0.80 on the benchmark test split",
           sod_ior >= 0.80, d.str());
  }
  {
    std::ostringstream d;
    d << "sod " << sod_nvdo << " vs classifier " << cls_nvdo;
    const bool ok =
        !std::isnan(sod_nvdo) && !std::isnan(cls_nvdo) && sod_nvdo < cls_nvdo;
    report(6, "(b) SOD NVD-O below Classifier NVD-O", ok, d.str());
  }

  const Table merged =
      run_merged_experiment(ctx, MergedExperiment{{"alpha", "delta"}});
  const double sod_merged = lookup(merged, "sod_merged", "ior", "micro");
  const double cls_merged = lookup(merged, "classifier", "ior", "micro");
  {
    std::ostringstream d;
    d << "sod_merged " << sod_merged << " vs classifier " << cls_merged;
    report(6, "(c) merged-pair SOD micro IOR beats Classifier by >= 0.10",
           sod_merged >= cls_merged + 0.10, d.str());
  }

  const auto heldout = run_heldout_experiment(
      ctx, HeldoutExperiment{{"sod", "classifier", "random", "center"}});
  const double sod_igr = lookup(heldout[0], "sod", "igr", "macro");
  const double center_igr = lookup(heldout[0], "center", "igr", "macro");
  const double random_igr = lookup(heldout[0], "random", "igr", "macro");
  {
    std::ostringstream d;
    d << "sod " << sod_igr << ", center " << center_igr << ", random "
      << random_igr;
    report(6, "(d) held-out SOD IGR above Center and Random",
           sod_igr > center_igr && sod_igr > random_igr, d.str());
  }

  const Table selfsup = run_selfsupervised(
      ctx, SelfSupervisedExperiment{{"sod", "sod_masked", "classifier",
                                     "classifier_masked", "random_occurrence"}});
  const double ss_sod = lookup(selfsup, "sod", "ior");
  const double ss_masked = lookup(selfsup, "sod_masked", "ior");
  {
    std::ostringstream d;
    d << "masked " << ss_masked << " vs plain " << ss_sod;
    report(6, "(e) self-supervised masking does not hurt SOD IOR",
           ss_masked >= ss_sod, d.str());
  }

  const Table retrieval = run_retrieval(ctx, RetrievalExperiment{16, {1, 5, 10}});
  const double sod_r1 = lookup(retrieval, "sod", "recall@1");
  const double rnd_r1 = lookup(retrieval, "random_embedding", "recall@1");
  {
    std::ostringstream d;
    d << "sod " << sod_r1 << " vs random " << rnd_r1 << ", total "
      << seconds_since(t0) << " s";
    report(6, "(f) retrieval SOD R@1 beats a random embedding by >= 0.10",
           sod_r1 >= rnd_r1 + 0.10, d.str());
  }
  const double elapsed = seconds_since(t0);
  report(6, "(runtime) benchmark completes within the 10-minute budget",
         elapsed < 600.0, std::to_string(elapsed) + " s");
}

// --- criterion 7: ablation grid ---------------------------------------------------

void criterion_ablation() {
  const fs::path config_dir(ATLASGROUND_CONFIG_DIR);
  std::ifstream f(config_dir / "ablation.plan.json");
  std::stringstream ss;
  ss << f.rdbuf();
  const ExperimentPlan plan = plan_from_json_text(ss.str(), config_dir);

  const fs::path out1 = fs::temp_directory_path() / "ag_accept_ablation1";
  const fs::path out2 = fs::temp_directory_path() / "ag_accept_ablation2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  run_plan(plan, out1);
  run_plan(plan, out2);
  unsetenv("SOURCE_DATE_EPOCH");

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const std::string a = slurp(out1 / "ablation" / "ablation.tsv");
  const std::string b = slurp(out2 / "ablation" / "ablation.tsv");
  const Table t = read_table(out1 / "ablation" / "ablation.tsv");
  std::set<std::tuple<double, double, std::int64_t>> cells;
  for (const auto& row : t.rows)
    cells.insert({std::get<double>(row[0]), std::get<double>(row[1]),
                  std::get<std::int64_t>(row[2])});
  std::ostringstream detail;
  detail << cells.size() << " cells, " << t.rows.size() << " rows, rerun "
         << (a == b ? "identical" : "differs");
  report(7, "ablation grid emits all 12 cells and reruns byte-identically",
         cells.size() == 12 && t.rows.size() == 36 && !a.empty() && a == b,
         detail.str());
  fs::remove_all(out1);
  fs::remove_all(out2);
}

// --- criterion 8: CLI determinism ---------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(ATLASGROUND_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  std::size_t count = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++count;
    const fs::path rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel)) return false;
    if (slurp(entry.path()) != slurp(b / rel)) return false;
  }
  return count > 0;
}

void criterion_cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "ag_accept_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);

  auto write_file = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
  };
  write_file(root / "atlas.json", R"({
    "dims": [30, 30, 30], "resolution_mm": 2.0,
    "organs": [
      {"name": "alpha", "synonyms": ["alpha organ"], "group": "g1",
       "shape": {"kind": "ball", "center": [8, 8, 8], "radius": 3.0}},
      {"name": "delta", "synonyms": ["delta organ"], "group": "g2",
       "shape": {"kind": "ball", "center": [22, 22, 22], "radius": 3.0}}
    ]})");
  write_file(root / "corpus.json", R"({
    "docs_per_organ_single": 15, "docs_per_organ_multi": 10,
    "filler_vocab_size": 30, "bandwidth_mm": 40.0, "tokens_per_doc": 10})");
  write_file(root / "train.json", R"({
    "learning_rate": 0.02, "epochs": 2, "batch_size": 16, "n_points": 16,
    "hash_dims": 256, "hidden_dims": 8, "seed": 3})");
  write_file(root / "plan.json", R"({
    "name": "accept", "seed": 12,
    "atlas": {"spec_path": "atlas.json"},
    "corpus": {"spec_path": "corpus.json"},
    "train": {"learning_rate": 0.02, "epochs": 2, "batch_size": 16,
              "n_points": 16, "hash_dims": 256, "hidden_dims": 8},
    "experiments": [
      {"kind": "general", "methods": ["sod", "center"]},
      {"kind": "retrieval", "siamese_embed_dims": 4, "ks": [1]},
      {"kind": "ablation", "gamma_p": [0.1], "gamma_o": [1.0], "n_points": [8]}
    ]})");

  bool ok = true;
  std::ostringstream detail;
  auto step = [&](const std::string& what, const std::string& args1,
                  const std::string& args2, const fs::path& o1,
                  const fs::path& o2) {
    if (!ok) return;
    if (run_cli(args1) != 0 || run_cli(args2) != 0) {
      ok = false;
      detail << what << " failed to run; ";
      return;
    }
    if (!trees_identical(o1, o2)) {
      ok = false;
      detail << what << " not reproducible; ";
    }
  };

  const std::string atlas_cfg = (root / "atlas.json").string();
  step("generate-atlas",
       "generate-atlas --config " + atlas_cfg + " --out " + (root / "a1").string() + " --seed 7",
       "generate-atlas --config " + atlas_cfg + " --out " + (root / "a2").string() + " --seed 7",
       root / "a1", root / "a2");

  const std::string corpus_cfg = (root / "corpus.json").string();
  step("generate-corpus",
       "generate-corpus --config " + corpus_cfg + " --atlas " + (root / "a1").string() +
           " --out " + (root / "c1").string() + " --seed 9",
       "generate-corpus --config " + corpus_cfg + " --atlas " + (root / "a1").string() +
           " --out " + (root / "c2").string() + " --seed 9",
       root / "c1", root / "c2");

  const std::string train_cfg = (root / "train.json").string();
  const std::string corpus_file = (root / "c1" / "corpus.jsonl").string();
  step("train",
       "train --config " + train_cfg + " --atlas " + (root / "a1").string() +
           " --corpus " + corpus_file + " --out " + (root / "m1").string() + " --seed 3",
       "train --config " + train_cfg + " --atlas " + (root / "a1").string() +
           " --corpus " + corpus_file + " --out " + (root / "m2").string() + " --seed 3",
       root / "m1", root / "m2");

  if (ok) {
    const std::string model = (root / "m1" / "model.ckpt").string();
    step("evaluate",
         "evaluate --model " + model + " --atlas " + (root / "a1").string() +
             " --corpus " + corpus_file + " --out " + (root / "e1").string() + " --seed 3",
         "evaluate --model " + model + " --atlas " + (root / "a1").string() +
             " --corpus " + corpus_file + " --out " + (root / "e2").string() + " --seed 3",
         root / "e1", root / "e2");
  }

  const std::string plan_cfg = (root / "plan.json").string();
  step("run-plan",
       "run-plan --config " + plan_cfg + " --out " + (root / "p1").string(),
       "run-plan --config " + plan_cfg + " --out " + (root / "p2").string(),
       root / "p1", root / "p2");
  step("ablate",
       "ablate --config " + plan_cfg + " --out " + (root / "ab1").string(),
       "ablate --config " + plan_cfg + " --out " + (root / "ab2").string(),
       root / "ab1", root / "ab2");
  step("retrieve",
       "retrieve --config " + plan_cfg + " --out " + (root / "r1").string(),
       "retrieve --config " + plan_cfg + " --out " + (root / "r2").string(),
       root / "r1", root / "r2");

  unsetenv("SOURCE_DATE_EPOCH");
  report(8, "every CLI subcommand reruns byte-for-byte with a fixed seed", ok,
         detail.str());
  fs::remove_all(root);
}

// --- criterion 9: optimizer unit values -----------------------------------------------

void criterion_optimizer() {
  bool ok = true;
  std::ostringstream detail;

  AdamWParams hp;
  hp.lr = 0.1;
  hp.weight_decay = 0.01;
  std::vector<double> p{1.0};
  std::vector<std::vector<double>*> params{&p};
  AdamWState state;
  adamw_step(params, {{1.0}}, state, hp);
  if (std::abs(p[0] - 0.899100000999) > 1e-12) {
    ok = false;
    detail << "step1 " << p[0] << "; ";
  }
  adamw_step(params, {{-0.5}}, state, hp);
  if (std::abs(p[0] - 0.8715938310725333) > 1e-12) {
    ok = false;
    detail << "step2 " << p[0] << "; ";
  }

  std::vector<std::vector<double>> g{{3.0}, {4.0}};
  clip_global_norm(g, 2.0);
  if (std::abs(g[0][0] - 1.2) > 1e-12 || std::abs(g[1][0] - 1.6) > 1e-12) {
    ok = false;
    detail << "clip (" << g[0][0] << ", " << g[1][0] << ")";
  }
  report(9, "hand-traced AdamW steps and (3,4)->(1.2,1.6) clipping", ok,
         detail.str());
}

}  // namespace

int main() {
  set_log_level(LogLevel::kWarn);  // keep criterion lines readable
  criterion_gradients();
  criterion_limits();
  criterion_invariances();
  criterion_geometry();
  criterion_metric_boundaries();
  criterion_benchmark();
  criterion_ablation();
  criterion_cli_determinism();
  criterion_optimizer();

  if (g_failures == 0) {
    std::cout << "ALL CRITERIA PASSED" << std::endl;
    return 0;
  }
  std::cout << g_failures << " CRITERIA FAILED" << std::endl;
  return 1;
}
