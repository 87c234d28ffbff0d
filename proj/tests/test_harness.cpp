#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "gcsam/harness.hpp"

using namespace gcsam;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gcsam_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json small_config(const std::string& opt_kind) {
  nlohmann::json j;
  j["version"] = 1;
  j["seed"] = 42;
  j["model"] = {{"layer_sizes", {2, 4, 2}}, {"activation", "relu"},
                {"loss", "softmax_xent"}, {"init", "glorot_uniform"}};
  j["data"] = {{"generator", "two_moons"}, {"n", 80}, {"noise_sigma", 0.2}, {"seed", 7},
               {"split", {{"test_fraction", 0.25}, {"seed", 3}}}};
  if (opt_kind == "sgd") {
    j["optimizer"] = {{"kind", "sgd"}, {"lr", 0.1}};
  } else if (opt_kind == "adam") {
    j["optimizer"] = {{"kind", "adam"}, {"lr", 0.005}};
  } else if (opt_kind == "sam") {
    j["optimizer"] = {{"kind", "sam"}, {"rho", 0.05},
                      {"base", {{"kind", "sgd"}, {"lr", 0.1}}}};
  } else {
    j["optimizer"] = {{"kind", "gcsam"}, {"rho", 0.05},
                      {"base", {{"kind", "adam"}, {"lr", 0.005}}}};
  }
  j["train"] = {{"epochs", 2}, {"batch_size", 16}};
  j["sharpness"] = {{"rho", 0.05}, {"num_directions", 4}, {"ascent_steps", 2}};
  return j;
}

nlohmann::json strip_timing(nlohmann::json j) {
  j.erase("total_wall_ns");
  j.erase("mean_step_wall_ns");
  j.erase("relative_speed");
  return j;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// steps.csv with the step_wall_ns column removed.
std::string steps_csv_without_wall(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line, out;
  while (std::getline(in, line)) {
    auto pos = line.rfind(',');
    out += line.substr(0, pos) + "\n";
  }
  return out;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(GCSAM_CLI) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ConfigParse, AcceptsFullConfig) {
  RunConfig cfg = parse_run_config(small_config("gcsam"));
  EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::kGcsam);
  EXPECT_TRUE(cfg.optimizer.base_is_adam);
  EXPECT_DOUBLE_EQ(cfg.optimizer.sam.rho, 0.05);
  EXPECT_TRUE(cfg.optimizer.sam.centralize_ascent);
  EXPECT_TRUE(cfg.optimizer.sam.centralize_descent);
  EXPECT_EQ(cfg.data.n, 80u);
  EXPECT_EQ(cfg.train.batch_size, 16u);
}

TEST(ConfigParse, UnknownKeysAreErrors) {
  nlohmann::json j = small_config("sgd");
  j["mystery"] = 1;
  EXPECT_THROW(parse_run_config(j), ConfigError);

  j = small_config("sgd");
  j["model"]["dropout"] = 0.5;
  EXPECT_THROW(parse_run_config(j), ConfigError);

  j = small_config("sam");
  j["optimizer"]["centralize_ascent"] = true;  // sam has no GC switches
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(ConfigParse, VersionAndRequiredKeys) {
  nlohmann::json j = small_config("sgd");
  j["version"] = 2;
  EXPECT_THROW(parse_run_config(j), ConfigError);

  j = small_config("sgd");
  j.erase("optimizer");
  EXPECT_THROW(parse_run_config(j), ConfigError);

  j = small_config("sgd");
  j["train"].erase("epochs");
  EXPECT_THROW(parse_run_config(j), ConfigError);

  j = small_config("sgd");
  j["optimizer"]["lr"] = "fast";
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(Run, DeterministicUpToTimingFields) {
  fs::path dir = temp_dir("determinism");
  RunConfig cfg = parse_run_config(small_config("gcsam"));
  RunOptions a;
  a.out_dir = (dir / "a").string();
  RunOptions b;
  b.out_dir = (dir / "b").string();
  run_experiment(cfg, a);
  run_experiment(cfg, b);

  nlohmann::json ra, rb;
  std::ifstream(dir / "a/report.json") >> ra;
  std::ifstream(dir / "b/report.json") >> rb;
  EXPECT_EQ(strip_timing(ra), strip_timing(rb));
  EXPECT_EQ(read_file(dir / "a/checkpoint.json"), read_file(dir / "b/checkpoint.json"));
  EXPECT_EQ(steps_csv_without_wall(dir / "a/steps.csv"),
            steps_csv_without_wall(dir / "b/steps.csv"));
  fs::remove_all(dir);
}

TEST(Run, SamRhoZeroMatchesSgdEndToEnd) {
  fs::path dir = temp_dir("rho_zero");
  nlohmann::json sgd_json = small_config("sgd");
  nlohmann::json sam_json = small_config("sam");
  sam_json["optimizer"]["rho"] = 0.0;

  RunOptions oa;
  oa.out_dir = (dir / "sgd").string();
  RunOptions ob;
  ob.out_dir = (dir / "sam").string();
  RunReport ra = run_experiment(parse_run_config(sgd_json), oa);
  RunReport rb = run_experiment(parse_run_config(sam_json), ob);
  ASSERT_TRUE(ra.final_test_accuracy && rb.final_test_accuracy);
  EXPECT_DOUBLE_EQ(*ra.final_test_accuracy, *rb.final_test_accuracy);
  EXPECT_EQ(read_file(dir / "sgd/checkpoint.json"), read_file(dir / "sam/checkpoint.json"));
  fs::remove_all(dir);
}

TEST(Run, GcsamTelemetrySatisfiesNormInequality) {
  fs::path dir = temp_dir("gc_telemetry");
  RunConfig cfg = parse_run_config(small_config("gcsam"));
  RunOptions opts;
  opts.out_dir = dir.string();
  run_experiment(cfg, opts);

  std::ifstream in(dir / "steps.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,loss_clean,loss_perturbed,eps_norm,orig_sq_norm,gc_sq_norm,step_wall_ns");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double cols[6];
    std::size_t pos = 0;
    for (int c = 0; c < 7; ++c) {
      std::size_t next = line.find(',', pos);
      std::string cell = line.substr(pos, next - pos);
      if (c >= 1 && c <= 6) cols[c - 1] = std::strtod(cell.c_str(), nullptr);
      pos = next + 1;
    }
    EXPECT_LE(cols[4], cols[3] * (1.0 + 1e-14));  // gc_sq_norm <= orig_sq_norm
    EXPECT_FALSE(std::isnan(cols[1]));            // loss_perturbed present for gcsam
    ++rows;
  }
  EXPECT_EQ(rows, 8);  // 60 train rows (80 - 20 test), batch 16 -> 4 steps x 2 epochs
  fs::remove_all(dir);
}

TEST(Run, FailedRunIsMarkedWithLastGoodStep) {
  // A learning rate this size overflows the second forward pass to inf/nan.
  nlohmann::json j = small_config("sgd");
  j["optimizer"]["lr"] = 1e300;
  j["sharpness"] = {{"enabled", false}};
  fs::path dir = temp_dir("failed");
  RunOptions opts;
  opts.out_dir = dir.string();
  RunReport rep = run_experiment(parse_run_config(j), opts);
  EXPECT_TRUE(rep.failed);
  nlohmann::json on_disk;
  std::ifstream(dir / "report.json") >> on_disk;
  EXPECT_TRUE(on_disk["failed"].get<bool>());
  EXPECT_TRUE(on_disk.contains("last_good_step"));
  fs::remove_all(dir);
}

TEST(Run, EarlyStoppingTriggersAndRecordsEpoch) {
  // A frozen net keeps val accuracy constant, so no epoch improves on the
  // first and patience runs out.
  nlohmann::json j = small_config("sgd");
  j["optimizer"]["lr"] = 1e-6;
  j["train"]["epochs"] = 10;
  j["train"]["early_stop"] = {{"patience", 2}, {"metric", "val_accuracy"}, {"val_fraction", 0.2}};
  fs::path dir = temp_dir("early_stop");
  RunOptions opts;
  opts.out_dir = dir.string();
  RunReport rep = run_experiment(parse_run_config(j), opts);
  ASSERT_TRUE(rep.early_stopped_epoch.has_value());
  EXPECT_LT(*rep.early_stopped_epoch, 9);
  EXPECT_LT(static_cast<long long>(rep.epochs.size()), 10);
  fs::remove_all(dir);
}

TEST(Run, MaxStepsCapsTraining) {
  nlohmann::json j = small_config("sgd");
  j["train"].erase("epochs");
  j["train"]["max_steps"] = 5;
  RunOptions opts;
  opts.out_dir = temp_dir("max_steps").string();
  opts.write_outputs = false;
  RunReport rep = run_experiment(parse_run_config(j), opts);
  EXPECT_EQ(rep.steps, 5);
  EXPECT_EQ(rep.telemetry_steps, 5);
}

TEST(Run, CsvDataPath) {
  fs::path dir = temp_dir("csv_run");
  Dataset d = gen_two_moons(60, 0.2, 8);
  std::string csv = (dir / "data.csv").string();
  save_csv(d, csv);

  nlohmann::json j = small_config("sgd");
  j["data"] = {{"csv_path", csv}, {"label_column", "label"},
               {"split", {{"test_fraction", 0.25}, {"seed", 3}}}};
  RunOptions opts;
  opts.out_dir = (dir / "out").string();
  RunReport rep = run_experiment(parse_run_config(j), opts);
  EXPECT_FALSE(rep.failed);
  EXPECT_EQ(rep.provenance.kind, "csv");
  EXPECT_EQ(rep.provenance.content_hash.size(), 16u);
  ASSERT_TRUE(rep.final_test_accuracy.has_value());
  fs::remove_all(dir);
}

TEST(Run, BoundSectionEmbedsDiagnosticBound) {
  nlohmann::json j = small_config("adam");
  j["bound"] = {{"delta", 0.05}, {"eta", 1.0}, {"rho", 0.05}};
  RunConfig cfg = parse_run_config(j);
  RunOptions opts;
  opts.out_dir = temp_dir("bound").string();
  opts.write_outputs = false;
  RunReport rep = run_experiment(cfg, opts);
  ASSERT_TRUE(rep.bound.has_value());
  ASSERT_TRUE(rep.sharpness.has_value());

  BoundParams bp;
  bp.n = 60;  // 80 rows, 25% test split
  bp.k = 2 * 4 + 4 + 4 * 2 + 2;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.rho = 0.05;
  double expect = eval_bound(rep.sharpness->base_loss + rep.sharpness->estimate,
                             rep.final_w_sq_norm, bp)
                      .value;
  EXPECT_DOUBLE_EQ(rep.bound->value, expect);

  // eta is a required choice.
  nlohmann::json missing_eta = small_config("adam");
  missing_eta["bound"] = {{"delta", 0.05}, {"rho", 0.05}};
  EXPECT_THROW(parse_run_config(missing_eta), ConfigError);
}

TEST(Run, BaselineProducesRelativeSpeed) {
  fs::path dir = temp_dir("baseline");
  RunConfig cfg = parse_run_config(small_config("adam"));
  RunOptions base;
  base.out_dir = (dir / "base").string();
  run_experiment(cfg, base);

  RunConfig sam_cfg = parse_run_config(small_config("sam"));
  RunOptions opts;
  opts.out_dir = (dir / "sam").string();
  opts.baseline = (dir / "base").string();
  RunReport rep = run_experiment(sam_cfg, opts);
  ASSERT_TRUE(rep.relative_speed.has_value());
  EXPECT_GT(*rep.relative_speed, 0.0);
  fs::remove_all(dir);
}

TEST(Compare, FirstRowSpeedIsOneByConstruction) {
  fs::path dir = temp_dir("compare");
  std::vector<RunConfig> configs = {parse_run_config(small_config("adam")),
                                    parse_run_config(small_config("gcsam"))};
  CompareOptions opts;
  opts.out_dir = dir.string();
  CompareResult res = compare_runs(configs, {1, 2}, opts);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(res.rows[0].relative_speed, 1.0);
  EXPECT_EQ(res.rows[0].optimizer, "adam");
  EXPECT_EQ(res.rows[0].runs, 2);

  // Statistics must equal recomputation from the persisted run reports.
  for (int ci = 0; ci < 2; ++ci) {
    std::vector<double> accs;
    for (std::uint64_t seed : {1, 2}) {
      fs::path run_dir = dir / ("run_" + std::to_string(ci) + "_" +
                                res.rows[ci].optimizer + "_s" + std::to_string(seed));
      nlohmann::json j;
      std::ifstream(run_dir / "report.json") >> j;
      accs.push_back(j["final_test_accuracy"].get<double>());
    }
    double mean = (accs[0] + accs[1]) / 2.0;
    EXPECT_DOUBLE_EQ(res.rows[ci].acc_mean, mean);
  }
  fs::remove_all(dir);
}

TEST(Compare, ApplesToApplesGuard) {
  nlohmann::json a = small_config("adam");
  nlohmann::json b = small_config("gcsam");
  b["model"]["layer_sizes"] = {2, 8, 2};
  CompareOptions opts;
  opts.out_dir = temp_dir("compare_guard").string();
  opts.write_outputs = false;
  EXPECT_THROW(
      compare_runs({parse_run_config(a), parse_run_config(b)}, {1}, opts),
      ValidationError);
  EXPECT_THROW(compare_runs({parse_run_config(a)}, {1}, opts), ValidationError);
  EXPECT_THROW(compare_runs({parse_run_config(a), parse_run_config(a)}, {}, opts),
               ValidationError);
}

TEST(GridSearch, SingleCellReturnsIt) {
  fs::path dir = temp_dir("grid_one");
  RunConfig tpl = parse_run_config(small_config("sam"));
  GridSearchOptions opts;
  opts.alphas = {0.1};
  opts.rhos = {0.05};
  opts.seeds = {1};
  opts.out_dir = dir.string();
  GridSearchResult res = grid_search(tpl, opts);
  ASSERT_TRUE(res.best.has_value());
  EXPECT_DOUBLE_EQ(res.best->alpha, 0.1);
  EXPECT_DOUBLE_EQ(res.best->rho, 0.05);
  ASSERT_EQ(res.cells.size(), 1u);
  fs::remove_all(dir);
}

TEST(GridSearch, SelectionInvariantToEnumerationOrder) {
  fs::path dir = temp_dir("grid_perm");
  RunConfig tpl = parse_run_config(small_config("sam"));
  GridSearchOptions fwd;
  fwd.alphas = {0.02, 0.1};
  fwd.rhos = {0.0, 0.05};
  fwd.seeds = {1};
  fwd.out_dir = (dir / "fwd").string();
  fwd.write_outputs = false;
  GridSearchOptions rev = fwd;
  rev.alphas = {0.1, 0.02};
  rev.rhos = {0.05, 0.0};
  rev.out_dir = (dir / "rev").string();
  GridSearchResult a = grid_search(tpl, fwd);
  GridSearchResult b = grid_search(tpl, rev);
  ASSERT_TRUE(a.best && b.best);
  EXPECT_DOUBLE_EQ(a.best->alpha, b.best->alpha);
  EXPECT_DOUBLE_EQ(a.best->rho, b.best->rho);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.cells[i].mean_test_accuracy, b.cells[i].mean_test_accuracy);
  }
  fs::remove_all(dir);
}

TEST(GridSearch, RhoZeroSamCellEqualsSgdBaseline) {
  fs::path dir = temp_dir("grid_rho0");
  RunConfig tpl = parse_run_config(small_config("sam"));
  GridSearchOptions opts;
  opts.alphas = {0.1};
  opts.rhos = {0.0};
  opts.seeds = {5};
  opts.out_dir = dir.string();
  opts.write_outputs = false;
  GridSearchResult res = grid_search(tpl, opts);

  RunConfig sgd_cfg = parse_run_config(small_config("sgd"));
  RunOptions ro;
  ro.out_dir = (dir / "sgd").string();
  ro.seed_override = 5;
  ro.write_outputs = false;
  RunReport sgd_rep = run_experiment(sgd_cfg, ro);
  ASSERT_TRUE(res.best.has_value());
  EXPECT_DOUBLE_EQ(res.best->mean_test_accuracy, *sgd_rep.final_test_accuracy);
  fs::remove_all(dir);
}

TEST(GridSearch, RhoGridRejectedForBaseOptimizers) {
  RunConfig tpl = parse_run_config(small_config("adam"));
  GridSearchOptions opts;
  opts.alphas = {0.01};
  opts.rhos = {0.1};
  opts.seeds = {1};
  opts.out_dir = temp_dir("grid_bad").string();
  EXPECT_THROW(grid_search(tpl, opts), ValidationError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  fs::path dir = temp_dir("checkpoint");
  Rng rng(77);
  ParamSet p;
  p.add("W0", rng.normal_tensor({3, 2}));
  p.add("b0", rng.normal_tensor({3}));
  // Values that stress the format: negative zero, denormal, huge.
  p.value("b0").data[0] = -0.0;
  p.value("b0").data[1] = 5e-324;
  p.value("b0").data[2] = 1.7976931348623157e308;
  std::string path = (dir / "ck.json").string();
  save_checkpoint(path, p, "abc123");
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.spec_hash, "abc123");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& orig = p.entry(i).value;
    const auto& back = ck.params.value(p.entry(i).name);
    ASSERT_EQ(orig.shape, back.shape);
    for (std::size_t k = 0; k < orig.size(); ++k) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(orig.data[k]),
                std::bit_cast<std::uint64_t>(back.data[k]));
    }
  }
  fs::remove_all(dir);
}

TEST(Landscape, ChecksSpecHashAndShapes) {
  fs::path dir = temp_dir("landscape_guard");
  RunConfig cfg = parse_run_config(small_config("sgd"));
  MlpSpec spec = cfg.model;
  spec.seed = cfg.resolved_model_seed();
  ParamSet params = init_params(spec);
  std::string good = (dir / "good.json").string();
  save_checkpoint(good, params, model_spec_hash(spec));

  LandscapeOptions opts;
  opts.seed = 3;
  opts.a_steps = 3;
  opts.b_steps = 3;
  opts.out_dir = (dir / "out").string();
  opts.write_outputs = false;
  EXPECT_NO_THROW(run_landscape(cfg, good, opts));

  std::string bad_hash = (dir / "bad_hash.json").string();
  save_checkpoint(bad_hash, params, "deadbeefdeadbeef");
  EXPECT_THROW(run_landscape(cfg, bad_hash, opts), ValidationError);

  ParamSet wrong;
  wrong.add("W0", Tensor::zeros({5, 5}));
  std::string bad_shape = (dir / "bad_shape.json").string();
  save_checkpoint(bad_shape, wrong, model_spec_hash(spec));
  try {
    run_landscape(cfg, bad_shape, opts);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("W0"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Landscape, DeterministicCsvBytes) {
  fs::path dir = temp_dir("landscape_det");
  RunConfig cfg = parse_run_config(small_config("sgd"));
  MlpSpec spec = cfg.model;
  spec.seed = cfg.resolved_model_seed();
  ParamSet params = init_params(spec);
  std::string ck = (dir / "ck.json").string();
  save_checkpoint(ck, params, model_spec_hash(spec));

  LandscapeOptions opts;
  opts.seed = 11;
  opts.a_steps = 5;
  opts.b_steps = 5;
  opts.a_min = -0.5;
  opts.a_max = 0.5;
  opts.b_min = -0.5;
  opts.b_max = 0.5;
  opts.out_dir = (dir / "one").string();
  run_landscape(cfg, ck, opts);
  opts.out_dir = (dir / "two").string();
  run_landscape(cfg, ck, opts);
  EXPECT_EQ(read_file(dir / "one/landscape.csv"), read_file(dir / "two/landscape.csv"));
  EXPECT_NE(read_file(dir / "one/landscape.csv"), "");
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  fs::path dir = temp_dir("cli");
  {
    std::ofstream out(dir / "good.json");
    out << small_config("sgd").dump(2);
  }
  {
    std::ofstream out(dir / "bad.json");
    nlohmann::json j = small_config("sgd");
    j["surprise"] = true;
    out << j.dump(2);
  }
  EXPECT_EQ(run_cli("run --config " + (dir / "good.json").string() + " --out " +
                    (dir / "out").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "out/report.json"));
  EXPECT_TRUE(fs::exists(dir / "out/steps.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/checkpoint.json"));
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " +
                    (dir / "out2").string()),
            1);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string() + " --out " +
                    (dir / "out3").string()),
            1);
  fs::remove_all(dir);
}
