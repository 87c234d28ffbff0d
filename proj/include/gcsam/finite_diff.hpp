#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gcsam/param_set.hpp"

namespace gcsam {

/// Scalar loss as a function of parameter values.
using LossFn = std::function<double(const ParamSet&)>;

/// (loss, gradients) at given parameter values; gradients are returned as a
/// ParamSet aligned with the input. Must be deterministic: same params give
/// bitwise-identical results.
struct LossGrad {
  double loss = 0.0;
  ParamSet grads;
};
using GradientOracle = std::function<LossGrad(const ParamSet&)>;

/// A coordinate where the one-sided differences disagree, i.e. the loss looks
/// non-differentiable there.
struct NonsmoothFlag {
  std::string param;
  std::size_t index = 0;
  double forward_diff = 0.0;
  double backward_diff = 0.0;
};

struct FiniteDiffReport {
  ParamSet grads;  // central-difference estimate per coordinate
  std::vector<NonsmoothFlag> nonsmooth;
  double h = 0.0;
};

/// Central finite differences, (L(w + h e_i) - L(w - h e_i)) / (2h), per
/// coordinate. Independent of the reverse-mode path; used as its oracle.
/// Coordinates where forward and backward one-sided differences disagree by
/// more than `nonsmooth_tol` (relative to their scale) are flagged.
inline FiniteDiffReport finite_diff_gradient(const LossFn& loss, const ParamSet& params,
                                             double h, double nonsmooth_tol = 1e-3) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_gradient: h must be > 0");
  ParamSet work = params.values_copy();
  double base = loss(work);
  if (!std::isfinite(base)) {
    throw EvalError("finite_diff_gradient: loss not finite at the base point");
  }
  FiniteDiffReport report;
  report.h = h;
  report.grads = params.zeros_like();
  for (std::size_t pi = 0; pi < work.size(); ++pi) {
    auto& e = work.entry(pi);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double orig = e.value.data[i];
      e.value.data[i] = orig + h;
      double fp = loss(work);
      e.value.data[i] = orig - h;
      double fm = loss(work);
      e.value.data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw EvalError("finite_diff_gradient: loss not finite near '" + e.name +
                        "' index " + std::to_string(i));
      }
      report.grads.entry(pi).value.data[i] = (fp - fm) / (2.0 * h);
      double fwd = (fp - base) / h;
      double bwd = (base - fm) / h;
      double scale = std::max({std::abs(fwd), std::abs(bwd), 1.0});
      if (std::abs(fwd - bwd) > nonsmooth_tol * scale) {
        report.nonsmooth.push_back(NonsmoothFlag{e.name, i, fwd, bwd});
      }
    }
  }
  return report;
}

/// |a - b| <= abs_tol + rel_tol * max(|a|, |b|)
inline bool close(double a, double b, double rel_tol, double abs_tol) {
  return std::abs(a - b) <= abs_tol + rel_tol * std::max(std::abs(a), std::abs(b));
}

/// Worst relative error over two aligned gradient sets, with an absolute
/// floor so near-zero entries do not dominate.
inline double max_rel_error(const ParamSet& a, const ParamSet& b, double floor = 1e-7) {
  a.require_aligned(b, "max_rel_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entry(i).value.data;
    const auto& y = b.entry(i).value.data;
    for (std::size_t k = 0; k < x.size(); ++k) {
      double denom = std::max({std::abs(x[k]), std::abs(y[k]), floor});
      worst = std::max(worst, std::abs(x[k] - y[k]) / denom);
    }
  }
  return worst;
}

}  // namespace gcsam
