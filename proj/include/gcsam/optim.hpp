#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "gcsam/centralization.hpp"
#include "gcsam/finite_diff.hpp"
#include "gcsam/param_set.hpp"

namespace gcsam {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("SgdConfig: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ValidationError("SgdConfig: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ValidationError("SgdConfig: weight_decay must be >= 0");
  }
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("AdamConfig: lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ValidationError("AdamConfig: beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ValidationError("AdamConfig: beta2 must be in [0, 1)");
    if (!(eps_stab > 0.0)) throw ValidationError("AdamConfig: eps_stab must be > 0");
    if (weight_decay < 0.0) throw ValidationError("AdamConfig: weight_decay must be >= 0");
  }
};

/// Knobs of the two-evaluation (ascent + descent) step. With both centralize
/// switches off this is plain SAM; with them on it is GCSAM: the ascent
/// perturbation follows the centralized gradient, eps = rho * g_gc / ||g_gc||,
/// and by default the descent gradient is centralized as well.
struct SamConfig {
  double rho = 0.05;
  int norm_order = 2;  // only the 2-norm is supported
  bool centralize_ascent = true;
  bool centralize_descent = true;
  GcConfig gc;
  double zero_grad_tolerance = 1e-12;

  void validate() const {
    if (rho < 0.0) throw ValidationError("SamConfig: rho must be >= 0");
    if (norm_order != 2) throw ValidationError("SamConfig: only norm_order 2 is supported");
    if (!(zero_grad_tolerance >= 0.0))
      throw ValidationError("SamConfig: zero_grad_tolerance must be >= 0");
    gc.validate();
  }
};

/// Per-parameter slots (momentum buffer, Adam moments) plus the step count.
/// One state belongs to exactly one ParamSet; nothing here is shared.
struct OptimizerState {
  long long t = 0;
  std::map<std::string, Tensor> momentum;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// One record per optimizer step; serialized to the per-step telemetry CSV as
/// columns step, loss_clean, loss_perturbed, eps_norm, orig_sq_norm,
/// gc_sq_norm, step_wall_ns.
struct StepTelemetry {
  double loss_clean = std::numeric_limits<double>::quiet_NaN();
  double loss_perturbed = std::numeric_limits<double>::quiet_NaN();
  double eps_norm = 0.0;
  double orig_sq_norm = std::numeric_limits<double>::quiet_NaN();
  double gc_sq_norm = std::numeric_limits<double>::quiet_NaN();
  long long step_wall_ns = 0;
  int oracle_calls = 0;
  CentralizationReport ascent_report;
  CentralizationReport descent_report;
};

namespace detail {

inline void require_finite_grads(const ParamSet& grads, const char* who) {
  for (const auto& e : grads) {
    if (!e.value.all_finite()) {
      throw EvalError(std::string(who) + ": non-finite gradient for parameter '" +
                      e.name + "'");
    }
  }
}

inline Tensor& slot(std::map<std::string, Tensor>& slots, const std::string& name,
                    const Tensor& like) {
  auto it = slots.find(name);
  if (it == slots.end()) it = slots.emplace(name, Tensor::zeros(like.shape)).first;
  if (!it->second.same_shape(like)) {
    throw ShapeError("optimizer state slot for '" + name + "' has shape " +
                     shape_str(it->second.shape) + ", expected " + shape_str(like.shape));
  }
  return it->second;
}

}  // namespace detail

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v.
/// With momentum 0 this reduces to w <- w - lr * (g + weight_decay * w).
inline void sgd_step(ParamSet& params, const ParamSet& grads, OptimizerState& state,
                     const SgdConfig& cfg) {
  cfg.validate();
  params.require_aligned(grads, "sgd_step");
  detail::require_finite_grads(grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params.entry(i).value;
    const auto& g = grads.entry(i).value;
    Tensor& buf = detail::slot(state.momentum, params.entry(i).name, w);
    for (std::size_t k = 0; k < w.size(); ++k) {
      double update = g.data[k] + cfg.weight_decay * w.data[k];
      buf.data[k] = cfg.momentum * buf.data[k] + update;
      w.data[k] -= cfg.lr * buf.data[k];
    }
  }
  state.t += 1;
}

/// Bias-corrected Adam; weight decay is added to the gradient before the
/// moment updates.
inline void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state,
                      const AdamConfig& cfg) {
  cfg.validate();
  params.require_aligned(grads, "adam_step");
  detail::require_finite_grads(grads, "adam_step");
  long long t = state.t + 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params.entry(i).value;
    const auto& g = grads.entry(i).value;
    const std::string& name = params.entry(i).name;
    Tensor& m = detail::slot(state.m, name, w);
    Tensor& v = detail::slot(state.v, name, w);
    for (std::size_t k = 0; k < w.size(); ++k) {
      double gk = g.data[k] + cfg.weight_decay * w.data[k];
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      w.data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_stab);
    }
  }
  state.t = t;
}

/// A base-optimizer update bound to its config: applies gradients to params.
using BaseStep = std::function<void(ParamSet&, const ParamSet&, OptimizerState&)>;

inline BaseStep make_sgd(SgdConfig cfg) {
  cfg.validate();
  return [cfg](ParamSet& p, const ParamSet& g, OptimizerState& s) { sgd_step(p, g, s, cfg); };
}

inline BaseStep make_adam(AdamConfig cfg) {
  cfg.validate();
  return [cfg](ParamSet& p, const ParamSet& g, OptimizerState& s) { adam_step(p, g, s, cfg); };
}

/// eps = rho * g / ||g||_2 with the 2-norm taken GLOBALLY over all gradient
/// tensors concatenated. Degenerate gradients (global norm at or below
/// zero_grad_tolerance) give eps = 0 everywhere.
inline ParamSet compute_perturbation(const ParamSet& grads, const SamConfig& cfg) {
  cfg.validate();
  detail::require_finite_grads(grads, "compute_perturbation");
  double norm = std::sqrt(grads.global_sq_norm());
  ParamSet eps;
  if (norm <= cfg.zero_grad_tolerance) {
    return grads.zeros_like();
  }
  double scale_factor = cfg.rho / norm;
  for (const auto& e : grads) eps.add(e.name, scale(e.value, scale_factor));
  return eps;
}

namespace detail {

/// Shared two-evaluation step. SAM is the centralization-off special case;
/// GCSAM centralizes the ascent gradient (and, by default, the descent
/// gradient, matching the g_GC(w + eps_GC) descent line).
inline StepTelemetry sam_family_step(ParamSet& params, const GradientOracle& oracle,
                                     const BaseStep& base, OptimizerState& state,
                                     const SamConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  StepTelemetry tel;

  LossGrad clean = oracle(params);
  tel.oracle_calls += 1;
  tel.loss_clean = clean.loss;
  require_finite_grads(clean.grads, "sam_step");

  ParamSet ascent_grads;
  if (cfg.centralize_ascent) {
    auto [gc, report] = centralize_param_set(clean.grads, cfg.gc);
    tel.ascent_report = std::move(report);
    ascent_grads = std::move(gc);
  } else {
    ascent_grads = clean.grads.values_copy();
    tel.ascent_report.orig_sq_norm = ascent_grads.global_sq_norm();
    tel.ascent_report.gc_sq_norm = tel.ascent_report.orig_sq_norm;
  }
  tel.orig_sq_norm = tel.ascent_report.orig_sq_norm;
  tel.gc_sq_norm = tel.ascent_report.gc_sq_norm;

  ParamSet eps = compute_perturbation(ascent_grads, cfg);
  tel.eps_norm = std::sqrt(eps.global_sq_norm());

  // Evaluate at the perturbed point; params themselves stay at w so a failing
  // oracle leaves them untouched.
  ParamSet perturbed = params.values_copy();
  perturbed.axpy(1.0, eps);
  LossGrad adv;
  try {
    adv = oracle(perturbed);
  } catch (const std::exception& ex) {
    throw EvalError(std::string("sam_step: oracle failed at the perturbed point (step "
                                "aborted, parameters unchanged): ") +
                    ex.what());
  }
  tel.oracle_calls += 1;
  tel.loss_perturbed = adv.loss;
  require_finite_grads(adv.grads, "sam_step (perturbed point)");

  ParamSet descent_grads;
  if (cfg.centralize_descent) {
    auto [gc, report] = centralize_param_set(adv.grads, cfg.gc);
    tel.descent_report = std::move(report);
    descent_grads = std::move(gc);
  } else {
    descent_grads = adv.grads.values_copy();
    tel.descent_report.orig_sq_norm = descent_grads.global_sq_norm();
    tel.descent_report.gc_sq_norm = tel.descent_report.orig_sq_norm;
  }

  base(params, descent_grads, state);

  tel.step_wall_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0)
          .count();
  return tel;
}

}  // namespace detail

/// SAM step: (loss1, g) at w; eps = rho*g/||g||; (loss2, g_adv) at w + eps;
/// base update applied at the original w with g_adv. Exactly two oracle calls.
inline StepTelemetry sam_step(ParamSet& params, const GradientOracle& oracle,
                              const BaseStep& base, OptimizerState& state, SamConfig cfg) {
  cfg.centralize_ascent = false;
  cfg.centralize_descent = false;
  return detail::sam_family_step(params, oracle, base, state, cfg);
}

/// GCSAM step: as sam_step but the ascent direction is the centralized
/// gradient (and the descent gradient is centralized when
/// cfg.centralize_descent). Exactly two oracle calls, same as SAM.
inline StepTelemetry gcsam_step(ParamSet& params, const GradientOracle& oracle,
                                const BaseStep& base, OptimizerState& state,
                                const SamConfig& cfg) {
  return detail::sam_family_step(params, oracle, base, state, cfg);
}

/// Single-evaluation step for the base optimizers, producing the same
/// telemetry shape as the SAM family (loss_perturbed stays NaN).
inline StepTelemetry base_only_step(ParamSet& params, const GradientOracle& oracle,
                                    const BaseStep& base, OptimizerState& state) {
  auto t0 = std::chrono::steady_clock::now();
  StepTelemetry tel;
  LossGrad clean = oracle(params);
  tel.oracle_calls = 1;
  tel.loss_clean = clean.loss;
  double sq = clean.grads.global_sq_norm();
  tel.orig_sq_norm = sq;
  tel.gc_sq_norm = sq;
  tel.ascent_report.orig_sq_norm = sq;
  tel.ascent_report.gc_sq_norm = sq;
  base(params, clean.grads, state);
  tel.step_wall_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0)
          .count();
  return tel;
}

}  // namespace gcsam
