#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcsam/gcsam.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, std::optional<std::string> baseline,
            bool timing_isolated) {
  gcsam::RunConfig cfg = gcsam::load_run_config(config_path);
  gcsam::RunOptions opts;
  opts.out_dir = out_dir;
  opts.baseline = baseline;
  opts.timing_isolated = timing_isolated;
  opts.seed_override = seed;
  gcsam::RunReport report = gcsam::run_experiment(cfg, opts);
  std::cout << "run: optimizer=" << report.optimizer << " seed=" << report.seed
            << " steps=" << report.steps;
  if (report.final_test_accuracy) std::cout << " test_accuracy=" << *report.final_test_accuracy;
  if (report.sharpness) std::cout << " sharpness=" << report.sharpness->estimate;
  std::cout << "\nreport: " << out_dir << "/report.json" << std::endl;
  if (report.failed) {
    std::cerr << "run failed at step " << (report.last_good_step ? *report.last_good_step + 1 : 0)
              << ": " << report.failure << std::endl;
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                bool timing_isolated) {
  std::vector<gcsam::RunConfig> configs;
  configs.reserve(config_paths.size());
  for (const auto& p : config_paths) configs.push_back(gcsam::load_run_config(p));
  gcsam::CompareOptions opts;
  opts.out_dir = out_dir;
  opts.timing_isolated = timing_isolated;
  gcsam::CompareResult res = gcsam::compare_runs(configs, seeds, opts);
  std::cout << res.text_table;
  std::cout << "table: " << out_dir << "/comparison.json" << std::endl;
  return kExitOk;
}

int cmd_landscape(const std::string& config_path, const std::string& checkpoint,
                  const std::string& out_dir, std::uint64_t seed, double amin, double amax,
                  std::size_t asteps, double bmin, double bmax, std::size_t bsteps,
                  const std::string& normalization) {
  gcsam::RunConfig cfg = gcsam::load_run_config(config_path);
  gcsam::LandscapeOptions opts;
  opts.seed = seed;
  opts.a_min = amin;
  opts.a_max = amax;
  opts.a_steps = asteps;
  opts.b_min = bmin;
  opts.b_max = bmax;
  opts.b_steps = bsteps;
  opts.out_dir = out_dir;
  if (normalization == "raw")
    opts.normalization = gcsam::DirectionNormalization::kRaw;
  else if (normalization == "per_layer")
    opts.normalization = gcsam::DirectionNormalization::kPerLayer;
  else
    throw gcsam::ValidationError("--normalization must be raw or per_layer");
  gcsam::LandscapeGrid grid = gcsam::run_landscape(cfg, checkpoint, opts);
  std::cout << "landscape: " << grid.a_values.size() << "x" << grid.b_values.size()
            << " cells, base loss " << grid.base_loss << "\ncsv: " << out_dir
            << "/landscape.csv" << std::endl;
  return kExitOk;
}

int cmd_grid_search(const std::string& config_path, const std::vector<double>& alphas,
                    const std::vector<double>& rhos, const std::vector<std::uint64_t>& seeds,
                    const std::string& out_dir, bool timing_isolated) {
  gcsam::RunConfig tpl = gcsam::load_run_config(config_path);
  gcsam::GridSearchOptions opts;
  opts.alphas = alphas;
  opts.rhos = rhos;
  opts.seeds = seeds;
  opts.out_dir = out_dir;
  opts.timing_isolated = timing_isolated;
  gcsam::GridSearchResult res = gcsam::grid_search(tpl, opts);
  for (const auto& c : res.cells) {
    std::cout << "alpha=" << c.alpha << " rho=" << c.rho << " runs=" << c.runs
              << " mean_acc=" << c.mean_test_accuracy << " mean_sharpness=" << c.mean_sharpness;
    if (!c.failures.empty()) std::cout << " failures=" << c.failures.size();
    std::cout << "\n";
  }
  if (res.best) {
    std::cout << "best: alpha=" << res.best->alpha << " rho=" << res.best->rho
              << " mean_acc=" << res.best->mean_test_accuracy << std::endl;
  } else {
    std::cout << "best: none (all cells failed)" << std::endl;
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_verify() {
  std::vector<gcsam::CheckResult> results = gcsam::run_verification();
  int failures = 0;
  for (const auto& r : results) {
    std::cout << (r.pass ? "ok   " : "FAIL ") << r.name << " - " << r.detail << "\n";
    if (!r.pass) ++failures;
  }
  std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
            << std::endl;
  return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GCSAM: sharpness-aware optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint, normalization = "raw";
  std::vector<std::string> config_paths;
  std::optional<std::uint64_t> seed_opt;
  std::uint64_t seed = 0;
  std::optional<std::string> baseline;
  bool timing_isolated = false;
  std::vector<std::uint64_t> seeds;
  std::vector<double> alphas, rhos;
  double amin = -1.0, amax = 1.0, bmin = -1.0, bmax = 1.0;
  std::size_t asteps = 21, bsteps = 21;

  auto* run = app.add_subcommand("run", "execute one seeded training run");
  run->add_option("--config", config_path, "run config JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed_opt, "override the config's master seed");
  run->add_option("--baseline", baseline, "baseline run dir (adds relative_speed)");
  run->add_flag("--timing-isolated", timing_isolated, "serial execution for timing claims");

  auto* compare = app.add_subcommand("compare", "run several configs over shared seeds");
  compare->add_option("--config", config_paths, "run config JSON (repeat, >= 2)")->required();
  compare->add_option("--seeds", seeds, "shared seeds")->required();
  compare->add_option("--out", out_dir, "output directory");
  compare->add_flag("--timing-isolated", timing_isolated, "serial execution for timing claims");

  auto* landscape = app.add_subcommand("landscape", "sample a loss landscape around a checkpoint");
  landscape->add_option("--config", config_path, "run config JSON")->required();
  landscape->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  landscape->add_option("--out", out_dir, "output directory");
  landscape->add_option("--seed", seed, "direction seed");
  landscape->add_option("--amin", amin);
  landscape->add_option("--amax", amax);
  landscape->add_option("--asteps", asteps);
  landscape->add_option("--bmin", bmin);
  landscape->add_option("--bmax", bmax);
  landscape->add_option("--bsteps", bsteps);
  landscape->add_option("--normalization", normalization, "raw | per_layer");

  auto* grid = app.add_subcommand("grid-search", "grid search over alpha and rho");
  grid->add_option("--config", config_path, "template config JSON")->required();
  grid->add_option("--alphas", alphas, "learning rates")->required();
  grid->add_option("--rhos", rhos, "perturbation radii (sam/gcsam only)");
  grid->add_option("--seeds", seeds, "seeds")->required();
  grid->add_option("--out", out_dir, "output directory");
  grid->add_flag("--timing-isolated", timing_isolated, "serial execution for timing claims");

  app.add_subcommand("verify", "run the property suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, out_dir, seed_opt, baseline, timing_isolated);
    if (compare->parsed()) return cmd_compare(config_paths, seeds, out_dir, timing_isolated);
    if (landscape->parsed())
      return cmd_landscape(config_path, checkpoint, out_dir, seed, amin, amax, asteps, bmin,
                           bmax, bsteps, normalization);
    if (grid->parsed())
      return cmd_grid_search(config_path, alphas, rhos, seeds, out_dir, timing_isolated);
    return cmd_verify();
  } catch (const gcsam::ValidationError& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return kExitValidation;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return kExitRuntime;
  }
}
