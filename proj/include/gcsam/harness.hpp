#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gcsam/analysis.hpp"
#include "gcsam/checkpoint.hpp"
#include "gcsam/data.hpp"
#include "gcsam/models.hpp"
#include "gcsam/optim.hpp"

namespace gcsam {

inline constexpr const char* kReportFormat = "gcsam.report.v1";
inline constexpr int kConfigVersion = 1;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

enum class OptimizerKind { kSgd, kAdam, kSam, kGcsam };

inline std::string optimizer_kind_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kSam: return "sam";
    case OptimizerKind::kGcsam: return "gcsam";
  }
  return "?";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  SgdConfig sgd;
  AdamConfig adam;
  bool base_is_adam = false;  // base optimizer for sam/gcsam
  SamConfig sam;

  bool two_eval() const { return kind == OptimizerKind::kSam || kind == OptimizerKind::kGcsam; }
  double learning_rate() const {
    if (two_eval()) return base_is_adam ? adam.lr : sgd.lr;
    return kind == OptimizerKind::kAdam ? adam.lr : sgd.lr;
  }
};

struct DataConfig {
  std::string generator;  // "two_moons" | "gaussian_blobs"; empty for csv
  std::size_t n = 0;
  double noise_sigma = 0.0;
  std::vector<std::vector<double>> centers;
  double sigma = 0.0;
  std::optional<std::uint64_t> seed;
  std::string csv_path;
  std::string label_column;
  double test_fraction = 0.2;
  std::optional<std::uint64_t> split_seed;
};

struct EarlyStopConfig {
  int patience = 5;
  std::string metric = "val_loss";  // val_loss | val_accuracy
  double val_fraction = 0.1;
};

struct TrainConfig {
  std::optional<long long> epochs;
  std::optional<long long> max_steps;
  std::size_t batch_size = 32;
  bool shuffle = true;
  std::optional<std::uint64_t> seed;
  std::optional<EarlyStopConfig> early_stop;
};

struct SharpnessConfig {
  bool enabled = true;
  double rho = 0.05;
  int num_directions = 32;
  int ascent_steps = 5;
  std::optional<std::uint64_t> seed;
};

/// Optional generalization-bound evaluation at the trained weights. eta has
/// no default on purpose; configs must choose a prior scale explicitly.
struct BoundSection {
  double delta = 0.05;
  double eta = 0.0;
  std::optional<double> rho;
  std::optional<double> sigma;
  double constant_term = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  MlpSpec model;  // seed resolved at run time
  std::optional<std::uint64_t> model_seed;
  DataConfig data;
  OptimizerConfig optimizer;
  TrainConfig train;
  SharpnessConfig sharpness;
  std::optional<BoundSection> bound;
  nlohmann::json raw;  // echoed into reports

  std::uint64_t resolved_model_seed() const { return model_seed.value_or(derive_seed(seed, 1)); }
  std::uint64_t resolved_data_seed() const {
    return data.seed.value_or(derive_seed(seed, 2));
  }
  std::uint64_t resolved_split_seed() const {
    return data.split_seed.value_or(derive_seed(seed, 3));
  }
  std::uint64_t resolved_train_seed() const {
    return train.seed.value_or(derive_seed(seed, 4));
  }
  std::uint64_t resolved_sharpness_seed() const {
    return sharpness.seed.value_or(derive_seed(seed, 5));
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_required(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("config: missing key '" + key + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: key '" + key + "' in " + where + " has the wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& where, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: key '" + key + "' in " + where + " has the wrong type");
  }
}

inline SgdConfig parse_sgd(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"kind", "lr", "momentum", "weight_decay"});
  SgdConfig c;
  c.lr = get_required<double>(j, where, "lr");
  c.momentum = get_or<double>(j, where, "momentum", 0.0);
  c.weight_decay = get_or<double>(j, where, "weight_decay", 0.0);
  c.validate();
  return c;
}

inline AdamConfig parse_adam(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"kind", "lr", "beta1", "beta2", "eps_stab", "weight_decay"});
  AdamConfig c;
  c.lr = get_required<double>(j, where, "lr");
  c.beta1 = get_or<double>(j, where, "beta1", 0.9);
  c.beta2 = get_or<double>(j, where, "beta2", 0.999);
  c.eps_stab = get_or<double>(j, where, "eps_stab", 1e-8);
  c.weight_decay = get_or<double>(j, where, "weight_decay", 0.0);
  c.validate();
  return c;
}

inline GcConfig parse_gc(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"enabled", "min_rank", "column_axis"});
  GcConfig c;
  c.enabled = get_or<bool>(j, where, "enabled", true);
  c.min_rank = get_or<int>(j, where, "min_rank", 2);
  c.column_axis = get_or<int>(j, where, "column_axis", -1);
  c.validate();
  return c;
}

}  // namespace detail

inline OptimizerConfig parse_optimizer_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_or;
  using detail::get_required;
  OptimizerConfig oc;
  std::string kind = get_required<std::string>(j, "optimizer", "kind");
  if (kind == "sgd") {
    oc.kind = OptimizerKind::kSgd;
    oc.sgd = detail::parse_sgd(j, "optimizer");
  } else if (kind == "adam") {
    oc.kind = OptimizerKind::kAdam;
    oc.adam = detail::parse_adam(j, "optimizer");
  } else if (kind == "sam" || kind == "gcsam") {
    oc.kind = kind == "sam" ? OptimizerKind::kSam : OptimizerKind::kGcsam;
    if (kind == "sam") {
      check_keys(j, "optimizer", {"kind", "rho", "base", "zero_grad_tolerance"});
    } else {
      check_keys(j, "optimizer",
                 {"kind", "rho", "base", "zero_grad_tolerance", "centralize_ascent",
                  "centralize_descent", "gc"});
    }
    oc.sam.rho = get_required<double>(j, "optimizer", "rho");
    oc.sam.zero_grad_tolerance = get_or<double>(j, "optimizer", "zero_grad_tolerance", 1e-12);
    if (kind == "gcsam") {
      oc.sam.centralize_ascent = get_or<bool>(j, "optimizer", "centralize_ascent", true);
      oc.sam.centralize_descent = get_or<bool>(j, "optimizer", "centralize_descent", true);
      if (j.contains("gc")) oc.sam.gc = detail::parse_gc(j.at("gc"), "optimizer.gc");
    } else {
      oc.sam.centralize_ascent = false;
      oc.sam.centralize_descent = false;
    }
    oc.sam.validate();
    if (!j.contains("base")) throw ConfigError("config: optimizer '" + kind + "' needs a base");
    const auto& base = j.at("base");
    std::string base_kind = get_required<std::string>(base, "optimizer.base", "kind");
    if (base_kind == "sgd") {
      oc.base_is_adam = false;
      oc.sgd = detail::parse_sgd(base, "optimizer.base");
    } else if (base_kind == "adam") {
      oc.base_is_adam = true;
      oc.adam = detail::parse_adam(base, "optimizer.base");
    } else {
      throw ConfigError("config: optimizer.base.kind must be sgd or adam");
    }
  } else {
    throw ConfigError("config: optimizer.kind must be one of sgd, adam, sam, gcsam");
  }
  return oc;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_or;
  using detail::get_required;

  check_keys(j, "top level", {"version", "seed", "model", "data", "optimizer", "train",
                              "sharpness", "bound"});
  int version = get_required<int>(j, "top level", "version");
  if (version != kConfigVersion) {
    throw ConfigError("config: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kConfigVersion) + ")");
  }

  RunConfig cfg;
  cfg.raw = j;
  cfg.seed = get_required<std::uint64_t>(j, "top level", "seed");

  const auto& jm = j.contains("model") ? j.at("model") : nlohmann::json();
  check_keys(jm, "model", {"layer_sizes", "activation", "loss", "init", "seed"});
  cfg.model.layer_sizes = get_required<std::vector<std::size_t>>(jm, "model", "layer_sizes");
  std::string act = get_or<std::string>(jm, "model", "activation", "relu");
  if (act == "relu")
    cfg.model.activation = Activation::kRelu;
  else if (act == "tanh")
    cfg.model.activation = Activation::kTanh;
  else
    throw ConfigError("config: model.activation must be relu or tanh");
  std::string loss = get_or<std::string>(jm, "model", "loss", "softmax_xent");
  if (loss == "softmax_xent")
    cfg.model.loss = LossKind::kSoftmaxXent;
  else if (loss == "mse")
    cfg.model.loss = LossKind::kMse;
  else
    throw ConfigError("config: model.loss must be softmax_xent or mse");
  std::string init = get_or<std::string>(jm, "model", "init", "glorot_uniform");
  if (init == "glorot_uniform")
    cfg.model.init = InitKind::kGlorotUniform;
  else if (init == "he_uniform")
    cfg.model.init = InitKind::kHeUniform;
  else
    throw ConfigError("config: model.init must be glorot_uniform or he_uniform");
  if (jm.contains("seed")) cfg.model_seed = jm.at("seed").get<std::uint64_t>();
  cfg.model.validate();

  const auto& jd = j.contains("data") ? j.at("data") : nlohmann::json();
  if (jd.contains("csv_path")) {
    check_keys(jd, "data", {"csv_path", "label_column", "split"});
    cfg.data.csv_path = get_required<std::string>(jd, "data", "csv_path");
    cfg.data.label_column = get_required<std::string>(jd, "data", "label_column");
  } else {
    std::string gen = get_required<std::string>(jd, "data", "generator");
    cfg.data.generator = gen;
    if (gen == "two_moons") {
      check_keys(jd, "data", {"generator", "n", "noise_sigma", "seed", "split"});
      cfg.data.n = get_required<std::size_t>(jd, "data", "n");
      cfg.data.noise_sigma = get_required<double>(jd, "data", "noise_sigma");
    } else if (gen == "gaussian_blobs") {
      check_keys(jd, "data", {"generator", "n", "centers", "sigma", "seed", "split"});
      cfg.data.n = get_required<std::size_t>(jd, "data", "n");
      cfg.data.centers = get_required<std::vector<std::vector<double>>>(jd, "data", "centers");
      cfg.data.sigma = get_required<double>(jd, "data", "sigma");
    } else {
      throw ConfigError("config: data.generator must be two_moons or gaussian_blobs");
    }
    if (jd.contains("seed")) cfg.data.seed = jd.at("seed").get<std::uint64_t>();
  }
  if (!jd.contains("split")) throw ConfigError("config: data.split is required");
  const auto& js = jd.at("split");
  check_keys(js, "data.split", {"test_fraction", "seed"});
  cfg.data.test_fraction = get_required<double>(js, "data.split", "test_fraction");
  if (js.contains("seed")) cfg.data.split_seed = js.at("seed").get<std::uint64_t>();

  if (!j.contains("optimizer")) throw ConfigError("config: missing key 'optimizer'");
  cfg.optimizer = parse_optimizer_config(j.at("optimizer"));

  if (!j.contains("train")) throw ConfigError("config: missing key 'train'");
  const auto& jt = j.at("train");
  check_keys(jt, "train",
             {"epochs", "max_steps", "batch_size", "shuffle", "seed", "early_stop"});
  if (jt.contains("epochs")) cfg.train.epochs = jt.at("epochs").get<long long>();
  if (jt.contains("max_steps")) cfg.train.max_steps = jt.at("max_steps").get<long long>();
  if (!cfg.train.epochs && !cfg.train.max_steps)
    throw ConfigError("config: train needs epochs or max_steps");
  if (cfg.train.epochs && *cfg.train.epochs < 0)
    throw ConfigError("config: train.epochs must be >= 0");
  if (cfg.train.max_steps && *cfg.train.max_steps < 0)
    throw ConfigError("config: train.max_steps must be >= 0");
  cfg.train.batch_size = get_required<std::size_t>(jt, "train", "batch_size");
  cfg.train.shuffle = get_or<bool>(jt, "train", "shuffle", true);
  if (jt.contains("seed")) cfg.train.seed = jt.at("seed").get<std::uint64_t>();
  if (jt.contains("early_stop") && !jt.at("early_stop").is_null()) {
    const auto& je = jt.at("early_stop");
    detail::check_keys(je, "train.early_stop", {"patience", "metric", "val_fraction"});
    EarlyStopConfig es;
    es.patience = get_required<int>(je, "train.early_stop", "patience");
    es.metric = get_or<std::string>(je, "train.early_stop", "metric", "val_loss");
    es.val_fraction = get_or<double>(je, "train.early_stop", "val_fraction", 0.1);
    if (es.patience < 1) throw ConfigError("config: early_stop.patience must be >= 1");
    if (es.metric != "val_loss" && es.metric != "val_accuracy")
      throw ConfigError("config: early_stop.metric must be val_loss or val_accuracy");
    if (!(es.val_fraction > 0.0 && es.val_fraction < 1.0))
      throw ConfigError("config: early_stop.val_fraction must be in (0, 1)");
    cfg.train.early_stop = es;
  }

  if (j.contains("sharpness")) {
    const auto& jsh = j.at("sharpness");
    check_keys(jsh, "sharpness", {"enabled", "rho", "num_directions", "ascent_steps", "seed"});
    cfg.sharpness.enabled = get_or<bool>(jsh, "sharpness", "enabled", true);
    cfg.sharpness.rho = get_or<double>(jsh, "sharpness", "rho", 0.05);
    cfg.sharpness.num_directions = get_or<int>(jsh, "sharpness", "num_directions", 32);
    cfg.sharpness.ascent_steps = get_or<int>(jsh, "sharpness", "ascent_steps", 5);
    if (jsh.contains("seed")) cfg.sharpness.seed = jsh.at("seed").get<std::uint64_t>();
  }

  if (j.contains("bound")) {
    const auto& jb = j.at("bound");
    check_keys(jb, "bound", {"delta", "eta", "rho", "sigma", "constant_term"});
    BoundSection bs;
    bs.delta = get_or<double>(jb, "bound", "delta", 0.05);
    bs.eta = get_required<double>(jb, "bound", "eta");
    if (jb.contains("rho")) bs.rho = jb.at("rho").get<double>();
    if (jb.contains("sigma")) bs.sigma = jb.at("sigma").get<double>();
    bs.constant_term = get_or<double>(jb, "bound", "constant_term", 0.0);
    if (!bs.rho && !bs.sigma)
      throw ConfigError("config: bound needs rho or sigma");
    cfg.bound = bs;
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + ex.what());
  }
  try {
    return parse_run_config(j);
  } catch (const ConfigError& ex) {
    throw ConfigError(std::string(ex.what()) + " (in '" + path + "')");
  }
}

/// Hash of the architecture-defining part of the model spec; stored in
/// checkpoints so a landscape run can refuse a mismatched model.
inline std::string model_spec_hash(const MlpSpec& spec) {
  std::string s = "layers=";
  for (std::size_t v : spec.layer_sizes) s += std::to_string(v) + ",";
  s += ";act=" + std::to_string(static_cast<int>(spec.activation));
  s += ";loss=" + std::to_string(static_cast<int>(spec.loss));
  s += ";init=" + std::to_string(static_cast<int>(spec.init));
  return detail::fnv1a_hex(s);
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

struct RunOptions {
  std::string out_dir;
  std::optional<std::string> baseline;  // run directory or report.json path
  bool timing_isolated = false;
  std::optional<std::uint64_t> seed_override;
  bool write_outputs = true;
};

struct EpochStats {
  long long epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct RunReport {
  nlohmann::json config_echo;
  std::uint64_t seed = 0;
  std::string optimizer;
  std::vector<EpochStats> epochs;
  double final_test_loss = 0.0;
  std::optional<double> final_test_accuracy;
  long long steps = 0;
  long long total_wall_ns = 0;
  std::optional<double> mean_step_wall_ns;
  std::optional<double> relative_speed;
  std::optional<SharpnessEstimate> sharpness;
  // Aggregate centralization statistics over the ascent reports: summed
  // norms (CentralizationReport semantics) plus per-step means.
  long long telemetry_steps = 0;
  CentralizationReport gc_aggregate;
  double mean_orig_sq_norm = 0.0;
  double mean_gc_sq_norm = 0.0;
  double mean_removed_sq_norm = 0.0;
  double max_gc_over_orig = 0.0;
  bool failed = false;
  std::optional<long long> last_good_step;
  std::string failure = "";
  std::optional<long long> early_stopped_epoch;
  Provenance provenance;
  bool timing_isolated = false;
  std::string out_dir;
  double final_w_sq_norm = 0.0;
  nlohmann::json resolved_seeds;  // every seed the run consumed
  std::optional<BoundEval> bound;
  nlohmann::json bound_inputs;
};

namespace detail {

inline nlohmann::json opt_to_json(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

inline nlohmann::json sharpness_to_json(const SharpnessEstimate& e) {
  nlohmann::json j;
  j["rho"] = e.rho;
  j["num_directions"] = e.num_directions;
  j["ascent_steps"] = e.ascent_steps;
  j["seed"] = e.seed;
  j["base_loss"] = e.base_loss;
  j["estimate"] = e.estimate;
  j["partial"] = e.partial;
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& d : e.directions) {
    dirs.push_back({{"direction", d.direction},
                    {"best_gap", d.best_gap},
                    {"evaluations", d.evaluations}});
  }
  j["directions"] = std::move(dirs);
  return j;
}

inline nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json j;
  j["kind"] = p.kind;
  j["name"] = p.name;
  j["detail"] = p.detail;
  j["seed"] = p.seed;
  if (!p.content_hash.empty()) j["content_hash"] = p.content_hash;
  return j;
}

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["format_version"] = kReportFormat;
  j["config"] = r.config_echo;
  j["seed"] = r.seed;
  j["seeds"] = r.resolved_seeds;
  j["optimizer"] = r.optimizer;
  j["rng_contract"] = Rng::kContract;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = e.train_loss;
    je["train_accuracy"] = e.train_accuracy;
    if (e.val_loss) je["val_loss"] = *e.val_loss;
    if (e.val_accuracy) je["val_accuracy"] = *e.val_accuracy;
    epochs.push_back(std::move(je));
  }
  j["epochs"] = std::move(epochs);
  j["final_test_loss"] = r.final_test_loss;
  j["final_test_accuracy"] = detail::opt_to_json(r.final_test_accuracy);
  j["steps"] = r.steps;
  j["total_wall_ns"] = r.total_wall_ns;
  j["mean_step_wall_ns"] = detail::opt_to_json(r.mean_step_wall_ns);
  if (r.relative_speed) j["relative_speed"] = *r.relative_speed;
  if (r.sharpness) j["sharpness"] = detail::sharpness_to_json(*r.sharpness);
  if (r.bound) {
    j["bound"] = {{"value", r.bound->value},
                  {"rho", r.bound->rho},
                  {"rho_derived_from_sigma", r.bound->rho_derived_from_sigma},
                  {"inputs", r.bound_inputs},
                  {"diagnostic_only", true}};
  }
  nlohmann::json gc;
  gc["steps"] = r.telemetry_steps;
  gc["orig_sq_norm"] = r.gc_aggregate.orig_sq_norm;
  gc["gc_sq_norm"] = r.gc_aggregate.gc_sq_norm;
  gc["removed_sq_norm"] = r.gc_aggregate.removed_sq_norm;
  gc["mean_orig_sq_norm"] = r.mean_orig_sq_norm;
  gc["mean_gc_sq_norm"] = r.mean_gc_sq_norm;
  gc["mean_removed_sq_norm"] = r.mean_removed_sq_norm;
  gc["max_gc_over_orig"] = r.max_gc_over_orig;
  j["centralization"] = std::move(gc);
  j["failed"] = r.failed;
  if (r.failed) {
    j["failure"] = r.failure;
    j["last_good_step"] = r.last_good_step ? nlohmann::json(*r.last_good_step)
                                           : nlohmann::json(nullptr);
  }
  j["early_stopped_epoch"] =
      r.early_stopped_epoch ? nlohmann::json(*r.early_stopped_epoch) : nlohmann::json(nullptr);
  j["provenance"] = detail::provenance_to_json(r.provenance);
  j["timing_isolated"] = r.timing_isolated;
  j["final_w_sq_norm"] = r.final_w_sq_norm;
  j["gc_column_convention"] =
      "columns extend along the fan-in axis of (fan_out x fan_in) weight matrices "
      "(column_axis -1 = last axis)";
  return j;
}

inline void write_steps_csv(const std::string& path, const std::vector<StepTelemetry>& steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_steps_csv: cannot open '" + path + "'");
  out << "step,loss_clean,loss_perturbed,eps_norm,orig_sq_norm,gc_sq_norm,step_wall_ns\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& t = steps[i];
    out << i << "," << detail::fmt_g17(t.loss_clean) << "," << detail::fmt_g17(t.loss_perturbed)
        << "," << detail::fmt_g17(t.eps_norm) << "," << detail::fmt_g17(t.orig_sq_norm) << ","
        << detail::fmt_g17(t.gc_sq_norm) << "," << t.step_wall_ns << "\n";
  }
}

inline Dataset build_dataset(const RunConfig& cfg) {
  if (!cfg.data.csv_path.empty()) {
    return load_csv(cfg.data.csv_path, cfg.data.label_column);
  }
  std::uint64_t seed = cfg.resolved_data_seed();
  if (cfg.data.generator == "two_moons") {
    return gen_two_moons(cfg.data.n, cfg.data.noise_sigma, seed);
  }
  return gen_gaussian_blobs(cfg.data.n, cfg.data.centers, cfg.data.sigma, seed);
}

inline double load_baseline_mean_step_ns(const std::string& baseline) {
  namespace fs = std::filesystem;
  fs::path p(baseline);
  if (fs::is_directory(p)) p /= "report.json";
  std::ifstream in(p);
  if (!in) throw ValidationError("baseline report '" + p.string() + "' not found");
  nlohmann::json j;
  in >> j;
  if (!j.contains("mean_step_wall_ns") || j["mean_step_wall_ns"].is_null()) {
    throw ValidationError("baseline report '" + p.string() + "' has no mean step time");
  }
  return j["mean_step_wall_ns"].get<double>();
}

/// Execute one seeded training run. Deterministic given (config, seed) in
/// every report field except the wall-time ones. Writes report.json,
/// steps.csv and checkpoint.json into opts.out_dir.
inline RunReport run_experiment(RunConfig cfg, const RunOptions& opts) {
  namespace fs = std::filesystem;
  auto run_t0 = std::chrono::steady_clock::now();

  if (opts.seed_override) {
    cfg.seed = *opts.seed_override;
    cfg.raw["seed"] = *opts.seed_override;
  }

  RunReport report;
  report.config_echo = cfg.raw;
  report.seed = cfg.seed;
  report.optimizer = optimizer_kind_name(cfg.optimizer.kind);
  report.timing_isolated = opts.timing_isolated;
  report.out_dir = opts.out_dir;
  report.resolved_seeds = {{"master", cfg.seed},
                           {"model", cfg.resolved_model_seed()},
                           {"data", cfg.resolved_data_seed()},
                           {"split", cfg.resolved_split_seed()},
                           {"train", cfg.resolved_train_seed()},
                           {"sharpness", cfg.resolved_sharpness_seed()}};

  Dataset full = build_dataset(cfg);
  report.provenance = full.provenance;
  SplitSpec split{cfg.data.test_fraction, cfg.resolved_split_seed()};
  auto [train_set, test_set] = split_dataset(full, split);

  // Optional held-out validation carve-out for early stopping.
  Dataset fit_set = train_set;
  Dataset val_set;
  bool has_val = false;
  if (cfg.train.early_stop) {
    SplitSpec vs{cfg.train.early_stop->val_fraction,
                 derive_seed(cfg.resolved_train_seed(), 0x1111)};
    auto [fit, val] = split_dataset(train_set, vs);
    fit_set = std::move(fit);
    val_set = std::move(val);
    has_val = true;
  }

  MlpSpec spec = cfg.model;
  spec.seed = cfg.resolved_model_seed();
  ParamSet params = init_params(spec);

  BaseStep base = cfg.optimizer.two_eval()
                      ? (cfg.optimizer.base_is_adam ? make_adam(cfg.optimizer.adam)
                                                    : make_sgd(cfg.optimizer.sgd))
                      : (cfg.optimizer.kind == OptimizerKind::kAdam
                             ? make_adam(cfg.optimizer.adam)
                             : make_sgd(cfg.optimizer.sgd));
  OptimizerState state;
  std::vector<StepTelemetry> telemetry;

  long long epochs = cfg.train.epochs.value_or(std::numeric_limits<long long>::max());
  long long max_steps = cfg.train.max_steps.value_or(std::numeric_limits<long long>::max());
  long long step = 0;

  ParamSet best_params = params.values_copy();
  double best_metric = std::numeric_limits<double>::infinity();
  long long best_epoch = -1;
  int stale_epochs = 0;

  std::uint64_t shuffle_seed = cfg.resolved_train_seed();
  bool done = false;
  for (long long epoch = 0; epoch < epochs && !done; ++epoch) {
    if (step >= max_steps) break;
    std::vector<Batch> batches =
        minibatches(fit_set, std::min(cfg.train.batch_size, fit_set.rows()),
                    derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)),
                    cfg.train.shuffle);
    for (const Batch& batch : batches) {
      if (step >= max_steps) {
        done = true;
        break;
      }
      GradientOracle oracle = make_batch_oracle(spec, batch);
      try {
        StepTelemetry tel;
        switch (cfg.optimizer.kind) {
          case OptimizerKind::kSgd:
          case OptimizerKind::kAdam:
            tel = base_only_step(params, oracle, base, state);
            break;
          case OptimizerKind::kSam:
            tel = sam_step(params, oracle, base, state, cfg.optimizer.sam);
            break;
          case OptimizerKind::kGcsam:
            tel = gcsam_step(params, oracle, base, state, cfg.optimizer.sam);
            break;
        }
        telemetry.push_back(std::move(tel));
      } catch (const std::exception& ex) {
        report.failed = true;
        report.failure = ex.what();
        report.last_good_step = step > 0 ? std::optional<long long>(step - 1) : std::nullopt;
        done = true;
        break;
      }
      ++step;
    }
    if (report.failed) break;

    EpochStats es;
    es.epoch = epoch;
    EvalResult tr = evaluate(spec, params, fit_set);
    es.train_loss = tr.mean_loss;
    es.train_accuracy = tr.accuracy.value_or(0.0);
    if (has_val) {
      EvalResult vr = evaluate(spec, params, val_set);
      es.val_loss = vr.mean_loss;
      es.val_accuracy = vr.accuracy;
      double metric = cfg.train.early_stop->metric == "val_loss"
                          ? vr.mean_loss
                          : -vr.accuracy.value_or(0.0);
      if (metric < best_metric) {
        best_metric = metric;
        best_params = params.values_copy();
        best_epoch = epoch;
        stale_epochs = 0;
      } else {
        ++stale_epochs;
        if (stale_epochs >= cfg.train.early_stop->patience) {
          report.early_stopped_epoch = epoch;
          done = true;
        }
      }
    }
    report.epochs.push_back(std::move(es));
  }
  report.steps = step;

  // Early stopping restores the best validation-metric weights.
  if (has_val && best_epoch >= 0) params = std::move(best_params);

  if (!report.failed) {
    EvalResult te = evaluate(spec, params, test_set);
    report.final_test_loss = te.mean_loss;
    report.final_test_accuracy = te.accuracy;
    report.final_w_sq_norm = params.global_sq_norm();

    if (cfg.sharpness.enabled) {
      GradientOracle train_oracle = make_dataset_oracle(spec, train_set);
      report.sharpness = estimate_sharpness(train_oracle, params, cfg.sharpness.rho,
                                            cfg.sharpness.num_directions,
                                            cfg.sharpness.ascent_steps,
                                            cfg.resolved_sharpness_seed());
    }

    // Diagnostic generalization bound at the trained weights; the worst
    // observed perturbed training loss stands in for the ball maximum.
    if (cfg.bound && report.sharpness) {
      BoundParams bp;
      bp.n = train_set.rows();
      bp.k = params.num_elements();
      bp.delta = cfg.bound->delta;
      bp.eta = cfg.bound->eta;
      bp.rho = cfg.bound->rho;
      bp.sigma = cfg.bound->sigma;
      bp.constant_term = cfg.bound->constant_term;
      double max_perturbed = report.sharpness->base_loss + report.sharpness->estimate;
      report.bound = eval_bound(max_perturbed, report.final_w_sq_norm, bp);
      report.bound_inputs = {{"n", bp.n},
                             {"k", bp.k},
                             {"delta", bp.delta},
                             {"eta", bp.eta},
                             {"constant_term", bp.constant_term},
                             {"max_perturbed_loss", max_perturbed},
                             {"w_sq_norm", report.final_w_sq_norm}};
    }
  }

  if (!telemetry.empty()) {
    NeumaierSum wall;
    double max_ratio = 0.0;
    for (const auto& t : telemetry) {
      report.gc_aggregate.accumulate(t.ascent_report);
      wall.add(static_cast<double>(t.step_wall_ns));
      if (t.orig_sq_norm > 0.0) max_ratio = std::max(max_ratio, t.gc_sq_norm / t.orig_sq_norm);
    }
    double n = static_cast<double>(telemetry.size());
    report.telemetry_steps = static_cast<long long>(telemetry.size());
    report.mean_orig_sq_norm = report.gc_aggregate.orig_sq_norm / n;
    report.mean_gc_sq_norm = report.gc_aggregate.gc_sq_norm / n;
    report.mean_removed_sq_norm = report.gc_aggregate.removed_sq_norm / n;
    report.max_gc_over_orig = max_ratio;
    report.mean_step_wall_ns = wall.value() / n;
  }

  if (opts.baseline) {
    double base_ns = load_baseline_mean_step_ns(*opts.baseline);
    if (report.mean_step_wall_ns && base_ns > 0.0) {
      report.relative_speed = *report.mean_step_wall_ns / base_ns;
    }
  }

  report.total_wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - run_t0)
                             .count();

  if (opts.write_outputs) {
    fs::create_directories(opts.out_dir);
    write_steps_csv((fs::path(opts.out_dir) / "steps.csv").string(), telemetry);
    save_checkpoint((fs::path(opts.out_dir) / "checkpoint.json").string(), params,
                    model_spec_hash(spec));
    std::ofstream out(fs::path(opts.out_dir) / "report.json", std::ios::binary);
    out << report_to_json(report).dump(2) << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Compare
// ---------------------------------------------------------------------------

struct CompareOptions {
  std::string out_dir;
  bool timing_isolated = false;
  bool write_outputs = true;
};

struct CompareRow {
  std::string optimizer;
  int runs = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double sharp_mean = 0.0, sharp_std = 0.0;
  double mean_step_ns = 0.0;
  double relative_speed = 1.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  nlohmann::json table;
  std::string text_table;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  NeumaierSum s;
  for (double v : xs) s.add(v);
  double mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  NeumaierSum q;
  for (double v : xs) q.add((v - mean) * (v - mean));
  return {mean, std::sqrt(q.value() / static_cast<double>(xs.size() - 1))};
}

/// The sections that must be identical for an apples-to-apples comparison.
inline nlohmann::json comparable_sections(const nlohmann::json& raw) {
  nlohmann::json j;
  for (const char* key : {"version", "model", "data", "train", "sharpness"}) {
    if (raw.contains(key)) j[key] = raw.at(key);
  }
  return j;
}

}  // namespace detail

/// Run every config with every shared seed and aggregate per-optimizer
/// statistics, with speed normalized so the first config reads 1.00. The
/// statistics are recomputed from the persisted per-run report.json files.
inline CompareResult compare_runs(const std::vector<RunConfig>& configs,
                                  const std::vector<std::uint64_t>& seeds,
                                  const CompareOptions& opts) {
  namespace fs = std::filesystem;
  if (configs.size() < 2) throw ValidationError("compare: need at least 2 configs");
  if (seeds.empty()) throw ValidationError("compare: need at least 1 seed");
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (detail::comparable_sections(configs[i].raw) !=
        detail::comparable_sections(configs[0].raw)) {
      throw ValidationError(
          "compare: configs must differ only in the optimizer section (config " +
          std::to_string(i) + " differs elsewhere)");
    }
  }

  std::vector<std::vector<std::string>> run_dirs(configs.size());
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    for (std::uint64_t seed : seeds) {
      RunOptions ro;
      ro.out_dir = (fs::path(opts.out_dir) /
                    ("run_" + std::to_string(ci) + "_" +
                     optimizer_kind_name(configs[ci].optimizer.kind) + "_s" +
                     std::to_string(seed)))
                       .string();
      ro.seed_override = seed;
      ro.timing_isolated = opts.timing_isolated;
      run_experiment(configs[ci], ro);
      run_dirs[ci].push_back(ro.out_dir);
    }
  }

  // Aggregate strictly from the persisted reports.
  CompareResult result;
  nlohmann::json rows = nlohmann::json::array();
  double first_mean_step = 0.0;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    std::vector<double> accs, sharps, step_ns;
    for (const auto& dir : run_dirs[ci]) {
      std::ifstream in(fs::path(dir) / "report.json");
      nlohmann::json j;
      in >> j;
      if (j.value("failed", false)) continue;
      if (j.contains("final_test_accuracy") && !j["final_test_accuracy"].is_null())
        accs.push_back(j["final_test_accuracy"].get<double>());
      if (j.contains("sharpness")) sharps.push_back(j["sharpness"]["estimate"].get<double>());
      if (j.contains("mean_step_wall_ns") && !j["mean_step_wall_ns"].is_null())
        step_ns.push_back(j["mean_step_wall_ns"].get<double>());
    }
    CompareRow row;
    row.optimizer = optimizer_kind_name(configs[ci].optimizer.kind);
    row.runs = static_cast<int>(accs.size());
    std::tie(row.acc_mean, row.acc_std) = detail::mean_std(accs);
    std::tie(row.sharp_mean, row.sharp_std) = detail::mean_std(sharps);
    auto [ns_mean, ns_std] = detail::mean_std(step_ns);
    row.mean_step_ns = ns_mean;
    if (ci == 0) {
      first_mean_step = ns_mean;
      row.relative_speed = 1.0;
    } else {
      row.relative_speed = first_mean_step > 0.0 ? ns_mean / first_mean_step : 0.0;
    }
    result.rows.push_back(row);
    rows.push_back({{"optimizer", row.optimizer},
                    {"runs", row.runs},
                    {"test_accuracy_mean", row.acc_mean},
                    {"test_accuracy_std", row.acc_std},
                    {"sharpness_mean", row.sharp_mean},
                    {"sharpness_std", row.sharp_std},
                    {"mean_step_wall_ns", row.mean_step_ns},
                    {"relative_speed", row.relative_speed}});
  }

  result.table["format_version"] = kReportFormat;
  result.table["seeds"] = seeds;
  result.table["rows"] = std::move(rows);
  result.table["timing_isolated"] = opts.timing_isolated;

  char line[256];
  std::string text =
      "optimizer    runs   test_acc (mean+/-std)   sharpness (mean+/-std)    speed\n";
  for (const auto& r : result.rows) {
    std::snprintf(line, sizeof(line), "%-12s %4d   %8.4f +/- %-8.4f   %10.6g +/- %-9.6g %6.2f\n",
                  r.optimizer.c_str(), r.runs, r.acc_mean, r.acc_std, r.sharp_mean, r.sharp_std,
                  r.relative_speed);
    text += line;
  }
  result.text_table = std::move(text);

  if (opts.write_outputs) {
    fs::create_directories(opts.out_dir);
    std::ofstream out(fs::path(opts.out_dir) / "comparison.json", std::ios::binary);
    out << result.table.dump(2) << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Landscape
// ---------------------------------------------------------------------------

struct LandscapeOptions {
  std::uint64_t seed = 0;
  double a_min = -1.0, a_max = 1.0;
  std::size_t a_steps = 21;
  double b_min = -1.0, b_max = 1.0;
  std::size_t b_steps = 21;
  DirectionNormalization normalization = DirectionNormalization::kRaw;
  std::string out_dir;
  bool write_outputs = true;
};

/// Sample the loss surface around a checkpoint over the training split of the
/// configured dataset and export landscape.csv (+ landscape_meta.json with
/// the direction seed).
inline LandscapeGrid run_landscape(const RunConfig& cfg, const std::string& checkpoint_path,
                                   const LandscapeOptions& opts) {
  namespace fs = std::filesystem;
  Checkpoint ck = load_checkpoint(checkpoint_path);
  MlpSpec spec = cfg.model;
  spec.seed = cfg.resolved_model_seed();
  std::string expect = model_spec_hash(spec);
  if (!ck.spec_hash.empty() && ck.spec_hash != expect) {
    throw ValidationError("landscape: checkpoint spec hash " + ck.spec_hash +
                          " does not match config model hash " + expect);
  }
  ParamSet reference = init_params(spec);
  for (const auto& e : reference) {
    if (!ck.params.contains(e.name) || !ck.params.value(e.name).same_shape(e.value)) {
      throw ValidationError("landscape: checkpoint tensor '" + e.name +
                            "' missing or shape-mismatched (expected " +
                            shape_str(e.value.shape) + ")");
    }
  }

  Dataset full = build_dataset(cfg);
  SplitSpec split{cfg.data.test_fraction, cfg.resolved_split_seed()};
  auto [train_set, test_set] = split_dataset(full, split);
  LossFn loss = make_dataset_loss(spec, train_set);

  auto [d1, d2] = orthogonal_gaussian_directions(ck.params, opts.seed, opts.normalization);
  LandscapeGrid grid = sample_landscape(loss, ck.params,
                                        landscape_axis(opts.a_min, opts.a_max, opts.a_steps),
                                        landscape_axis(opts.b_min, opts.b_max, opts.b_steps),
                                        d1, d2);
  grid.direction_seed = opts.seed;
  grid.normalization = opts.normalization;

  if (opts.write_outputs) {
    fs::create_directories(opts.out_dir);
    write_landscape_csv(grid, (fs::path(opts.out_dir) / "landscape.csv").string());
    nlohmann::json meta;
    meta["direction_seed"] = opts.seed;
    meta["normalization"] =
        opts.normalization == DirectionNormalization::kRaw ? "raw" : "per_layer";
    meta["checkpoint"] = checkpoint_path;
    meta["base_loss"] = grid.base_loss;
    meta["rng_contract"] = Rng::kContract;
    std::ofstream out(fs::path(opts.out_dir) / "landscape_meta.json", std::ios::binary);
    out << meta.dump(2) << "\n";
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridSearchOptions {
  std::vector<double> alphas;
  std::vector<double> rhos;  // ignored for sgd/adam templates
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  bool timing_isolated = false;
  bool write_outputs = true;
};

struct GridCellResult {
  double alpha = 0.0;
  double rho = 0.0;
  int runs = 0;
  double mean_test_accuracy = 0.0;
  double mean_sharpness = 0.0;
  std::vector<std::string> failures;
};

struct GridSearchResult {
  std::vector<GridCellResult> cells;  // sorted by (alpha, rho)
  std::optional<GridCellResult> best;
  nlohmann::json table;
};

/// Evaluate every (alpha, rho) cell with every seed; select by mean test
/// accuracy, ties broken by lower sharpness, then lower alpha, then lower
/// rho. Failed runs are recorded per cell, never fatal.
inline GridSearchResult grid_search(const RunConfig& tpl, const GridSearchOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.alphas.empty()) throw ValidationError("grid_search: empty alpha grid");
  if (opts.seeds.empty()) throw ValidationError("grid_search: need at least 1 seed");
  bool two_eval = tpl.optimizer.two_eval();
  std::vector<double> rhos = opts.rhos;
  if (!two_eval) {
    if (!rhos.empty())
      throw ValidationError("grid_search: rho grid given for a base-only optimizer");
    rhos = {0.0};
  }
  if (rhos.empty()) throw ValidationError("grid_search: empty rho grid");

  std::vector<double> alphas = opts.alphas;
  std::sort(alphas.begin(), alphas.end());
  std::sort(rhos.begin(), rhos.end());

  GridSearchResult result;
  for (double alpha : alphas) {
    for (double rho : rhos) {
      RunConfig cfg = tpl;
      if (two_eval) {
        cfg.optimizer.sam.rho = rho;
        cfg.raw["optimizer"]["rho"] = rho;
        if (cfg.optimizer.base_is_adam) {
          cfg.optimizer.adam.lr = alpha;
          cfg.raw["optimizer"]["base"]["lr"] = alpha;
        } else {
          cfg.optimizer.sgd.lr = alpha;
          cfg.raw["optimizer"]["base"]["lr"] = alpha;
        }
      } else if (cfg.optimizer.kind == OptimizerKind::kAdam) {
        cfg.optimizer.adam.lr = alpha;
        cfg.raw["optimizer"]["lr"] = alpha;
      } else {
        cfg.optimizer.sgd.lr = alpha;
        cfg.raw["optimizer"]["lr"] = alpha;
      }

      GridCellResult cell;
      cell.alpha = alpha;
      cell.rho = two_eval ? rho : 0.0;
      std::vector<double> accs, sharps;
      for (std::uint64_t seed : opts.seeds) {
        RunOptions ro;
        ro.out_dir = (fs::path(opts.out_dir) /
                      ("cell_a" + detail::fmt_g17(alpha) + "_r" + detail::fmt_g17(rho) + "_s" +
                       std::to_string(seed)))
                         .string();
        ro.seed_override = seed;
        ro.timing_isolated = opts.timing_isolated;
        ro.write_outputs = opts.write_outputs;
        try {
          RunReport rep = run_experiment(cfg, ro);
          if (rep.failed) {
            cell.failures.push_back("seed " + std::to_string(seed) + ": " + rep.failure);
            continue;
          }
          if (rep.final_test_accuracy) accs.push_back(*rep.final_test_accuracy);
          if (rep.sharpness) sharps.push_back(rep.sharpness->estimate);
        } catch (const std::exception& ex) {
          cell.failures.push_back("seed " + std::to_string(seed) + ": " + ex.what());
        }
      }
      cell.runs = static_cast<int>(accs.size());
      cell.mean_test_accuracy = detail::mean_std(accs).first;
      cell.mean_sharpness = detail::mean_std(sharps).first;
      result.cells.push_back(std::move(cell));
    }
  }

  for (const auto& cell : result.cells) {
    if (cell.runs == 0) continue;
    if (!result.best) {
      result.best = cell;
      continue;
    }
    const auto& b = *result.best;
    bool better = false;
    if (cell.mean_test_accuracy != b.mean_test_accuracy) {
      better = cell.mean_test_accuracy > b.mean_test_accuracy;
    } else if (cell.mean_sharpness != b.mean_sharpness) {
      better = cell.mean_sharpness < b.mean_sharpness;
    } else if (cell.alpha != b.alpha) {
      better = cell.alpha < b.alpha;
    } else {
      better = cell.rho < b.rho;
    }
    if (better) result.best = cell;
  }

  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"alpha", c.alpha},
                     {"rho", c.rho},
                     {"runs", c.runs},
                     {"mean_test_accuracy", c.mean_test_accuracy},
                     {"mean_sharpness", c.mean_sharpness},
                     {"failures", c.failures}});
  }
  result.table["format_version"] = kReportFormat;
  result.table["cells"] = std::move(cells);
  if (result.best) {
    result.table["best"] = {{"alpha", result.best->alpha},
                            {"rho", result.best->rho},
                            {"mean_test_accuracy", result.best->mean_test_accuracy}};
  } else {
    result.table["best"] = nullptr;
  }
  result.table["seeds"] = opts.seeds;

  if (opts.write_outputs) {
    fs::create_directories(opts.out_dir);
    std::ofstream out(fs::path(opts.out_dir) / "grid_search.json", std::ios::binary);
    out << result.table.dump(2) << "\n";
  }
  return result;
}

}  // namespace gcsam
