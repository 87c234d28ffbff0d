#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "gcsam/analysis.hpp"
#include "gcsam/centralization.hpp"
#include "gcsam/data.hpp"
#include "gcsam/models.hpp"
#include "gcsam/optim.hpp"
#include "gcsam/toys.hpp"

namespace gcsam {

/// Outcome of one property check run by the `verify` CLI subcommand.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace verify_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

inline Tensor random_matrix(Rng& rng, std::size_t max_dim) {
  std::size_t r = 1 + rng.next_u64() % max_dim;
  std::size_t c = 1 + rng.next_u64() % max_dim;
  return rng.normal_tensor({std::max<std::size_t>(r, 2), std::max<std::size_t>(c, 2)});
}

/// Brute-force per-column mean removal, the oracle the projection is checked
/// against. Deliberately written index-by-index, independent of
/// centralize_matrix.
inline Tensor naive_column_centralize(const Tensor& g) {
  Tensor out = g;
  std::size_t rows = g.shape[0], cols = g.shape[1];
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += g.at(i, j);
    mu /= static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = g.at(i, j) - mu;
  }
  return out;
}

}  // namespace verify_detail

/// Norm identity ||g_gc||^2 == ||g||^2 - sum_columns n*mu^2, plus the
/// contraction ||g_gc|| <= ||g||, over random matrices.
inline CheckResult check_norm_identity(int num_matrices = 200, std::size_t max_dim = 64) {
  Rng rng(20240001);
  GcConfig cfg;
  double worst = 0.0;
  for (int i = 0; i < num_matrices; ++i) {
    Tensor g = verify_detail::random_matrix(rng, max_dim);
    auto [gc, rep] = centralize_matrix(g, cfg);
    double lhs = rep.gc_sq_norm;
    double rhs = rep.orig_sq_norm - rep.removed_sq_norm;
    double rel = std::abs(lhs - rhs) / std::max(rep.orig_sq_norm, 1e-300);
    worst = std::max(worst, rel);
    if (lhs > rep.orig_sq_norm * (1.0 + 1e-15)) {
      return {"centralization.norm_identity", false,
              "||g_gc|| exceeded ||g|| on matrix " + std::to_string(i)};
    }
  }
  return {"centralization.norm_identity", worst <= 1e-10,
          "max relative identity error " + verify_detail::fmt(worst)};
}

inline CheckResult check_projection_algebra(int num_matrices = 100, std::size_t max_dim = 64) {
  Rng rng(20240002);
  GcConfig cfg;
  double worst_idem = 0.0, worst_mean = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < num_matrices; ++i) {
    Tensor g = verify_detail::random_matrix(rng, max_dim);
    worst_idem = std::max(worst_idem, projection_idempotence_residual(g, cfg));
    auto [gc, rep] = centralize_matrix(g, cfg);
    std::size_t rows = g.shape[0], cols = g.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += gc.at(r, c);
      worst_mean = std::max(worst_mean, std::abs(s));
    }
    Tensor oracle = verify_detail::naive_column_centralize(g);
    for (std::size_t k = 0; k < g.size(); ++k)
      worst_oracle = std::max(worst_oracle, std::abs(gc.data[k] - oracle.data[k]));
  }
  bool pass = worst_idem <= 1e-12 && worst_mean <= 1e-12 && worst_oracle <= 1e-12;
  return {"centralization.projection_algebra", pass,
          "idempotence " + verify_detail::fmt(worst_idem) + ", column sums " +
              verify_detail::fmt(worst_mean) + ", vs brute force " +
              verify_detail::fmt(worst_oracle)};
}

inline CheckResult check_centralization_linearity(int trials = 50) {
  Rng rng(20240003);
  GcConfig cfg;
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    Tensor g = rng.normal_tensor({8, 12});
    Tensor h = rng.normal_tensor({8, 12});
    double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    Tensor combo = add(scale(g, a), scale(h, b));
    Tensor lhs = centralize_matrix(combo, cfg).first;
    Tensor rhs = add(scale(centralize_matrix(g, cfg).first, a),
                     scale(centralize_matrix(h, cfg).first, b));
    for (std::size_t k = 0; k < lhs.size(); ++k)
      worst = std::max(worst, std::abs(lhs.data[k] - rhs.data[k]));
  }
  return {"centralization.linearity", worst <= 1e-10,
          "max deviation " + verify_detail::fmt(worst)};
}

inline CheckResult check_disabled_identity() {
  Rng rng(20240004);
  GcConfig cfg;
  cfg.enabled = false;
  Tensor g = rng.normal_tensor({16, 16});
  auto [out, rep] = centralize_matrix(g, cfg);
  bool bitwise = out.data == g.data;
  bool norms = rep.orig_sq_norm == rep.gc_sq_norm && rep.removed_sq_norm == 0.0;
  return {"centralization.disabled_identity", bitwise && norms,
          bitwise ? "bitwise identity" : "output differs from input"};
}

/// Reverse-mode gradients vs central finite differences over a small matrix
/// of MLP shapes covering both activations and both losses.
inline CheckResult check_gradients(int num_models = 8) {
  double worst = 0.0;
  int built = 0;
  for (int t = 0; built < num_models && t < num_models * 20; ++t) {
    MlpSpec spec;
    spec.layer_sizes = {3, 5, 4, 3};
    spec.activation = (t % 2 == 0) ? Activation::kRelu : Activation::kTanh;
    spec.loss = (t / 2 % 2 == 0) ? LossKind::kSoftmaxXent : LossKind::kMse;
    spec.seed = 9000 + static_cast<std::uint64_t>(t);
    ParamSet params = init_params(spec);
    Rng rng(spec.seed + 1);
    Batch batch;
    batch.features = rng.normal_tensor({4, 3});
    for (int i = 0; i < 4; ++i)
      batch.labels.push_back(static_cast<int>(rng.next_u64() % 3));
    if (spec.activation == Activation::kRelu &&
        preactivation_margin(spec, params, batch) < 1e-4) {
      continue;  // keep finite differences away from relu kinks
    }
    ++built;
    LossGrad lg = loss_and_grad(spec, params, batch);
    LossFn loss = [&](const ParamSet& p) { return loss_and_grad(spec, p, batch).loss; };
    FiniteDiffReport fd = finite_diff_gradient(loss, params, 1e-6);
    worst = std::max(worst, max_rel_error(lg.grads, fd.grads));
  }
  return {"grad_engine.finite_difference", worst <= 1e-5 && built == num_models,
          "max relative error " + verify_detail::fmt(worst) + " over " +
              std::to_string(built) + " models"};
}

inline CheckResult check_backward_seed_linearity() {
  Rng rng(20240005);
  Tape tape;
  Var w = tape.leaf(rng.normal_tensor({4, 4}));
  Var loss = tape.mse(tape.tanh(w), tape.constant(rng.normal_tensor({4, 4})));
  auto g1 = tape.backward(loss, 1.0);
  auto g1b = tape.backward(loss, 1.0);
  auto g3 = tape.backward(loss, 3.0);
  bool reuse_identical = g1[0].data == g1b[0].data;
  double worst = 0.0;
  for (std::size_t i = 0; i < g1[0].size(); ++i)
    worst = std::max(worst, std::abs(g3[0].data[i] - 3.0 * g1[0].data[i]));
  return {"grad_engine.seed_linearity", reuse_identical && worst <= 1e-12,
          reuse_identical ? "max linearity deviation " + verify_detail::fmt(worst)
                          : "tape reuse was not bitwise identical"};
}

inline CheckResult check_perturbation_contract() {
  SamConfig cfg;
  cfg.rho = 0.37;
  // Two parameters; the norm must be the global one.
  ParamSet grads;
  grads.add("a", Tensor::vec({3.0}));
  grads.add("b", Tensor::vec({4.0}));
  ParamSet eps = compute_perturbation(grads, cfg);
  double n = std::sqrt(eps.global_sq_norm());
  bool norm_ok = std::abs(n - cfg.rho) <= 1e-12 * cfg.rho;
  bool direction_ok = std::abs(eps.value("a").data[0] - cfg.rho * 0.6) <= 1e-12 &&
                      std::abs(eps.value("b").data[0] - cfg.rho * 0.8) <= 1e-12;
  ParamSet zero;
  zero.add("a", Tensor::vec({0.0}));
  ParamSet eps0 = compute_perturbation(zero, cfg);
  bool zero_ok = eps0.value("a").data[0] == 0.0;
  return {"optim.perturbation_contract", norm_ok && direction_ok && zero_ok,
          "||eps|| = " + verify_detail::fmt(n) + " for rho " + verify_detail::fmt(cfg.rho)};
}

inline CheckResult check_rho_zero_reduction(int steps = 25) {
  MlpSpec spec;
  spec.layer_sizes = {2, 6, 2};
  spec.seed = 77;
  Dataset d = gen_two_moons(64, 0.15, 33);
  double worst = 0.0;
  for (bool adam_base : {false, true}) {
    ParamSet base_params = init_params(spec);
    ParamSet sam_params = init_params(spec);
    OptimizerState base_state, sam_state;
    BaseStep mk_base = adam_base ? make_adam(AdamConfig{}) : make_sgd(SgdConfig{0.05, 0.9, 0.0});
    BaseStep mk_base2 = adam_base ? make_adam(AdamConfig{}) : make_sgd(SgdConfig{0.05, 0.9, 0.0});
    SamConfig cfg;
    cfg.rho = 0.0;
    GradientOracle oracle = make_dataset_oracle(spec, d);
    for (int s = 0; s < steps; ++s) {
      base_only_step(base_params, oracle, mk_base, base_state);
      sam_step(sam_params, oracle, mk_base2, sam_state, cfg);
    }
    for (std::size_t i = 0; i < base_params.size(); ++i) {
      const auto& a = base_params.entry(i).value.data;
      const auto& b = sam_params.entry(i).value.data;
      for (std::size_t k = 0; k < a.size(); ++k)
        worst = std::max(worst, std::abs(a[k] - b[k]));
    }
  }
  return {"optim.rho_zero_reduction", worst <= 1e-12,
          "max trajectory deviation " + verify_detail::fmt(worst)};
}

inline CheckResult check_eps_mean_shift_invariance() {
  Rng rng(20240006);
  SamConfig cfg;
  cfg.rho = 0.1;
  ParamSet grads;
  grads.add("W", rng.normal_tensor({5, 7}));
  auto [gc, rep] = centralize_param_set(grads, cfg.gc);
  ParamSet eps = compute_perturbation(gc, cfg);

  // Add a constant to one column slice (row 2 along the fan-in axis).
  ParamSet shifted = grads.values_copy();
  for (std::size_t j = 0; j < 7; ++j) shifted.value("W").at(2, j) += 1.75;
  auto [gc2, rep2] = centralize_param_set(shifted, cfg.gc);
  ParamSet eps2 = compute_perturbation(gc2, cfg);

  double worst = 0.0;
  for (std::size_t k = 0; k < eps.value("W").size(); ++k)
    worst = std::max(worst,
                     std::abs(eps.value("W").data[k] - eps2.value("W").data[k]));
  return {"optim.eps_mean_shift_invariance", worst <= 1e-10,
          "max eps deviation " + verify_detail::fmt(worst)};
}

inline CheckResult check_oracle_call_counts() {
  MlpSpec spec;
  spec.layer_sizes = {2, 4, 2};
  spec.seed = 5;
  Dataset d = gen_gaussian_blobs(32, {{-2.0, 0.0}, {2.0, 0.0}}, 0.3, 11);
  int calls = 0;
  GradientOracle counted = [&](const ParamSet& p) {
    ++calls;
    return loss_and_grad(spec, p, d.as_batch());
  };
  ParamSet params = init_params(spec);
  OptimizerState st;
  SamConfig cfg;
  calls = 0;
  sam_step(params, counted, make_sgd(SgdConfig{}), st, cfg);
  int sam_calls = calls;
  calls = 0;
  gcsam_step(params, counted, make_sgd(SgdConfig{}), st, cfg);
  int gcsam_calls = calls;
  calls = 0;
  base_only_step(params, counted, make_sgd(SgdConfig{}), st);
  int base_calls = calls;
  bool pass = sam_calls == 2 && gcsam_calls == 2 && base_calls == 1;
  return {"optim.oracle_call_counts", pass,
          "sam " + std::to_string(sam_calls) + ", gcsam " + std::to_string(gcsam_calls) +
              ", base " + std::to_string(base_calls)};
}

inline CheckResult check_data_determinism() {
  Dataset a = gen_two_moons(101, 0.1, 99);
  Dataset b = gen_two_moons(101, 0.1, 99);
  bool same = a.features.data == b.features.data && a.labels == b.labels;

  // One epoch of batches is a permutation partition of the dataset.
  std::vector<Batch> batches = minibatches(a, 7, 3, true);
  std::vector<int> seen(a.rows(), 0);
  std::size_t total = 0;
  for (const auto& bt : batches) total += bt.rows();
  std::vector<double> all_x;
  for (const auto& bt : batches)
    for (std::size_t r = 0; r < bt.rows(); ++r) all_x.push_back(bt.features.at(r, 0));
  std::vector<double> orig_x;
  for (std::size_t r = 0; r < a.rows(); ++r) orig_x.push_back(a.features.at(r, 0));
  std::sort(all_x.begin(), all_x.end());
  std::sort(orig_x.begin(), orig_x.end());
  bool partition = total == a.rows() && all_x == orig_x;

  auto [train, test] = split_dataset(a, SplitSpec{0.25, 4});
  bool split_ok = train.rows() + test.rows() == a.rows();
  return {"data.determinism_and_partition", same && partition && split_ok,
          same ? "generator deterministic, batches partition the set"
               : "same seed gave different datasets"};
}

inline CheckResult check_directions_orthogonality(int seeds = 20) {
  MlpSpec spec;
  spec.layer_sizes = {3, 8, 2};
  spec.seed = 3;
  ParamSet params = init_params(spec);
  double worst_dot = 0.0, worst_norm = 0.0;
  for (int s = 0; s < seeds; ++s) {
    auto [d1, d2] = orthogonal_gaussian_directions(params, 1000 + s);
    worst_dot = std::max(worst_dot, std::abs(ParamSet::global_dot(d1, d2)));
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(d1.global_sq_norm()) - 1.0));
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(d2.global_sq_norm()) - 1.0));
  }
  return {"analysis.direction_orthogonality", worst_dot <= 1e-10 && worst_norm <= 1e-12,
          "max |<d1,d2>| " + verify_detail::fmt(worst_dot) + ", norm deviation " +
              verify_detail::fmt(worst_norm)};
}

inline CheckResult check_landscape_quadratic() {
  ParamSet w;
  w.add("w", Tensor::zeros({6}));
  auto [d1, d2] = orthogonal_gaussian_directions(w, 17);
  LossFn loss = [](const ParamSet& p) { return 0.5 * p.global_sq_norm(); };
  LandscapeGrid grid = sample_landscape(loss, w, landscape_axis(-1.0, 1.0, 11),
                                        landscape_axis(-1.0, 1.0, 11), d1, d2);
  double worst = 0.0;
  for (std::size_t ia = 0; ia < grid.a_values.size(); ++ia)
    for (std::size_t ib = 0; ib < grid.b_values.size(); ++ib) {
      double a = grid.a_values[ia], b = grid.b_values[ib];
      worst = std::max(worst, std::abs(grid.losses.at(ia, ib) - 0.5 * (a * a + b * b)));
    }
  bool center = grid.losses.at(grid.center_a, grid.center_b) == grid.base_loss;
  return {"analysis.landscape_quadratic", worst <= 1e-10 && center,
          "max closed-form deviation " + verify_detail::fmt(worst)};
}

inline CheckResult check_bound_evaluator() {
  BoundParams bp;
  bp.n = 1000;
  bp.k = 100;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.rho = 0.05;
  double L = 0.3;
  // Zero-weight closed form.
  double expect = L + std::sqrt((4.0 * std::log(1000.0 / 0.05)) / 999.0);
  double got = eval_bound(L, 0.0, bp).value;
  bool zero_ok = std::abs(got - expect) <= 1e-12;
  bool mono_w = eval_bound(L, 2.0, bp).value > eval_bound(L, 1.0, bp).value;
  BoundParams bp2 = bp;
  bp2.n = 10000;
  bool mono_n = eval_bound(L, 1.0, bp2).value < eval_bound(L, 1.0, bp).value;
  BoundParams bp3 = bp;
  bp3.delta = 0.5;
  bool mono_delta = eval_bound(L, 1.0, bp3).value < eval_bound(L, 1.0, bp).value;
  return {"analysis.bound_evaluator", zero_ok && mono_w && mono_n && mono_delta,
          "zero-weight case off by " + verify_detail::fmt(std::abs(got - expect))};
}

inline CheckResult check_sharpness_estimator() {
  // 1-D quadratic: exact sharpness is 0.5 * lambda * rho^2.
  double lambda = 3.0, rho = 0.2;
  ParamSet w = scalar_param(0.0);
  SharpnessEstimate est =
      estimate_sharpness(quadratic_bowl_oracle(lambda), w, rho, 4, 3, 123);
  double expect = 0.5 * lambda * rho * rho;
  bool quad_ok = std::abs(est.estimate - expect) <= 1e-9;

  // Linear loss: max over the ball is rho * ||c||.
  ParamSet c;
  c.add("a", Tensor::vec({1.0, -2.0}));
  c.add("b", Tensor::vec({2.0}));
  ParamSet w2 = c.zeros_like();
  SharpnessEstimate est2 = estimate_sharpness(linear_oracle(c), w2, rho, 4, 3, 321);
  double expect2 = rho * 3.0;
  bool lin_ok = std::abs(est2.estimate - expect2) <= 1e-9;
  return {"analysis.sharpness_estimator", quad_ok && lin_ok,
          "quadratic off by " + verify_detail::fmt(std::abs(est.estimate - expect)) +
              ", linear off by " + verify_detail::fmt(std::abs(est2.estimate - expect2))};
}

/// The property suites behind `gcsam verify`.
inline std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> out;
  out.push_back(check_norm_identity());
  out.push_back(check_projection_algebra());
  out.push_back(check_centralization_linearity());
  out.push_back(check_disabled_identity());
  out.push_back(check_gradients());
  out.push_back(check_backward_seed_linearity());
  out.push_back(check_perturbation_contract());
  out.push_back(check_rho_zero_reduction());
  out.push_back(check_eps_mean_shift_invariance());
  out.push_back(check_oracle_call_counts());
  out.push_back(check_data_determinism());
  out.push_back(check_directions_orthogonality());
  out.push_back(check_landscape_quadratic());
  out.push_back(check_bound_evaluator());
  out.push_back(check_sharpness_estimator());
  return out;
}

}  // namespace gcsam
