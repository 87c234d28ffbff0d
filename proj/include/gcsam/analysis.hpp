#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gcsam/data.hpp"
#include "gcsam/finite_diff.hpp"
#include "gcsam/param_set.hpp"
#include "gcsam/rng.hpp"

namespace gcsam {

/// Lower-bound estimate of max_{||eps|| <= rho} L(w + eps) - L(w), obtained
/// from m random directions each refined by full-step normalized gradient
/// ascent on the radius-rho sphere. The best observed gap over all
/// evaluations is reported, so the estimate never exceeds the true maximum.
struct SharpnessEstimate {
  double rho = 0.0;
  int num_directions = 0;
  int ascent_steps = 0;
  std::uint64_t seed = 0;
  double base_loss = 0.0;
  double estimate = 0.0;  // best observed gap
  struct DirectionRecord {
    int direction = 0;
    double best_gap = 0.0;
    int evaluations = 0;
  };
  std::vector<DirectionRecord> directions;
  bool partial = false;  // oracle failed on some direction
};

inline SharpnessEstimate estimate_sharpness(const GradientOracle& oracle,
                                            const ParamSet& params, double rho, int m,
                                            int ascent_steps, std::uint64_t seed,
                                            double zero_grad_tolerance = 1e-12) {
  if (!(rho > 0.0)) throw ValidationError("estimate_sharpness: rho must be > 0");
  if (m < 1) throw ValidationError("estimate_sharpness: need at least one direction");
  if (ascent_steps < 0) throw ValidationError("estimate_sharpness: ascent_steps must be >= 0");

  SharpnessEstimate est;
  est.rho = rho;
  est.num_directions = m;
  est.ascent_steps = ascent_steps;
  est.seed = seed;
  est.base_loss = oracle(params).loss;
  est.estimate = -std::numeric_limits<double>::infinity();

  Rng rng(seed);
  for (int j = 0; j < m; ++j) {
    // Random unit direction, then eps = rho * d on the sphere.
    ParamSet d;
    for (const auto& e : params) d.add(e.name, rng.normal_tensor(e.value.shape));
    double dn = std::sqrt(d.global_sq_norm());
    if (dn <= zero_grad_tolerance) continue;  // astronomically unlikely

    ParamSet probe = params.values_copy();
    probe.axpy(rho / dn, d);

    SharpnessEstimate::DirectionRecord rec;
    rec.direction = j;
    rec.best_gap = -std::numeric_limits<double>::infinity();
    try {
      for (int s = 0;; ++s) {
        LossGrad lg = oracle(probe);
        ++rec.evaluations;
        rec.best_gap = std::max(rec.best_gap, lg.loss - est.base_loss);
        if (s == ascent_steps) break;
        double gn = std::sqrt(lg.grads.global_sq_norm());
        if (gn <= zero_grad_tolerance) break;
        // Full-step ascent: jump to the sphere point aligned with the local
        // gradient. Exact in one step for linear and centered quadratic
        // losses.
        probe = params.values_copy();
        probe.axpy(rho / gn, lg.grads);
      }
    } catch (const std::exception&) {
      est.partial = true;
    }
    est.estimate = std::max(est.estimate, rec.best_gap);
    est.directions.push_back(rec);
  }
  return est;
}

enum class DirectionNormalization { kRaw, kPerLayer };

/// Two Gaussian-sampled directions over the parameter shapes. d2 is
/// Gram-Schmidt orthogonalized against d1 (global inner product <= 1e-10
/// afterwards, both modes). kRaw scales both to unit global norm. kPerLayer
/// scales each tensor of d1 to unit norm (filter-normalization style) and
/// does the same to d2 before orthogonalization, after which d2 is rescaled
/// globally to d1's norm; d2's per-layer norms are then approximately, not
/// exactly, one.
inline std::pair<ParamSet, ParamSet> orthogonal_gaussian_directions(
    const ParamSet& params, std::uint64_t seed,
    DirectionNormalization normalization = DirectionNormalization::kRaw) {
  if (params.empty())
    throw ValidationError("orthogonal_gaussian_directions: empty parameter set");
  if (params.num_elements() < 2)
    throw ValidationError(
        "orthogonal_gaussian_directions: need at least 2 total dimensions for an "
        "orthogonal pair");

  auto sample = [&params](Rng& rng) {
    ParamSet d;
    for (const auto& e : params) d.add(e.name, rng.normal_tensor(e.value.shape));
    return d;
  };
  auto normalize = [&](ParamSet& d) {
    if (normalization == DirectionNormalization::kRaw) {
      double n = std::sqrt(d.global_sq_norm());
      if (n == 0.0) throw EvalError("orthogonal_gaussian_directions: zero direction");
      for (auto& e : d) e.value = scale(e.value, 1.0 / n);
    } else {
      for (auto& e : d) {
        double n = std::sqrt(sq_norm(e.value));
        if (n == 0.0) throw EvalError("orthogonal_gaussian_directions: zero layer direction");
        e.value = scale(e.value, 1.0 / n);
      }
    }
  };

  Rng rng(seed);
  ParamSet d1 = sample(rng);
  normalize(d1);

  for (int attempt = 0;; ++attempt) {
    ParamSet d2 = sample(rng);
    normalize(d2);
    double proj = ParamSet::global_dot(d2, d1) / d1.global_sq_norm();
    d2.axpy(-proj, d1);
    double resid = std::sqrt(d2.global_sq_norm());
    if (resid > 1e-8) {
      // Match d2's global norm to d1's; this keeps the coefficient axes
      // comparable and preserves orthogonality.
      double target = normalization == DirectionNormalization::kRaw
                          ? 1.0
                          : std::sqrt(d1.global_sq_norm());
      for (auto& e : d2) e.value = scale(e.value, target / resid);
      return {std::move(d1), std::move(d2)};
    }
    if (attempt >= 1) {
      throw EvalError(
          "orthogonal_gaussian_directions: sampled directions are degenerate after resampling");
    }
  }
}

/// Loss values over the affine slice w + a*d1 + b*d2. The center cell is the
/// unperturbed loss, bitwise.
struct LandscapeGrid {
  std::vector<double> a_values;
  std::vector<double> b_values;
  Tensor losses;  // (len(a_values) x len(b_values)); non-finite cells stay NaN
  double base_loss = 0.0;
  std::uint64_t direction_seed = 0;
  DirectionNormalization normalization = DirectionNormalization::kRaw;
  std::size_t center_a = 0;
  std::size_t center_b = 0;
};

/// Evenly spaced axis that must contain 0; the value nearest zero is snapped
/// to exactly 0.0 so the center cell is evaluated at w itself.
inline std::vector<double> landscape_axis(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw ValidationError("landscape axis needs at least 2 steps");
  if (!(lo < hi)) throw ValidationError("landscape axis needs lo < hi");
  std::vector<double> v(steps);
  double h = (hi - lo) / static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i) v[i] = lo + h * static_cast<double>(i);
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < steps; ++i)
    if (std::abs(v[i]) < std::abs(v[nearest])) nearest = i;
  if (std::abs(v[nearest]) > 1e-9 * std::max(std::abs(lo), std::abs(hi))) {
    throw ValidationError("landscape axis must include 0");
  }
  v[nearest] = 0.0;
  return v;
}

/// Sample the loss over the full grid, against one fixed loss function (use a
/// whole-dataset loss so the surface is noise-free). Non-finite losses are
/// recorded as NaN cells, never dropped.
inline LandscapeGrid sample_landscape(const LossFn& loss, const ParamSet& params,
                                      std::vector<double> a_values,
                                      std::vector<double> b_values, const ParamSet& d1,
                                      const ParamSet& d2) {
  params.require_aligned(d1, "sample_landscape");
  params.require_aligned(d2, "sample_landscape");
  LandscapeGrid grid;
  grid.a_values = std::move(a_values);
  grid.b_values = std::move(b_values);
  bool has_center = false;
  for (std::size_t ia = 0; ia < grid.a_values.size(); ++ia)
    for (std::size_t ib = 0; ib < grid.b_values.size(); ++ib)
      if (grid.a_values[ia] == 0.0 && grid.b_values[ib] == 0.0) {
        grid.center_a = ia;
        grid.center_b = ib;
        has_center = true;
      }
  if (!has_center) throw ValidationError("sample_landscape: axes must include (0, 0)");

  grid.base_loss = loss(params);
  grid.losses = Tensor::full({grid.a_values.size(), grid.b_values.size()},
                             std::numeric_limits<double>::quiet_NaN());
  for (std::size_t ia = 0; ia < grid.a_values.size(); ++ia) {
    for (std::size_t ib = 0; ib < grid.b_values.size(); ++ib) {
      double a = grid.a_values[ia], b = grid.b_values[ib];
      double cell;
      if (a == 0.0 && b == 0.0) {
        cell = grid.base_loss;
      } else {
        ParamSet p = params.values_copy();
        if (a != 0.0) p.axpy(a, d1);
        if (b != 0.0) p.axpy(b, d2);
        try {
          cell = loss(p);
        } catch (const std::exception&) {
          cell = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(cell)) cell = std::numeric_limits<double>::quiet_NaN();
      }
      grid.losses.at(ia, ib) = cell;
    }
  }
  return grid;
}

/// CSV export: header `a,b,loss`, row-major over the grid, 17 significant
/// digits.
inline void write_landscape_csv(const LandscapeGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_landscape_csv: cannot open '" + path + "'");
  out << "a,b,loss\n";
  for (std::size_t ia = 0; ia < grid.a_values.size(); ++ia)
    for (std::size_t ib = 0; ib < grid.b_values.size(); ++ib)
      out << detail::fmt_g17(grid.a_values[ia]) << "," << detail::fmt_g17(grid.b_values[ib])
          << "," << detail::fmt_g17(grid.losses.at(ia, ib)) << "\n";
}

/// Inputs of the generalization-bound expression. Either rho is given
/// directly or it is derived from sigma as sqrt(k) * sigma * (1 +
/// sqrt(log(n)/k)) / n; which path was used is recorded in the result.
struct BoundParams {
  std::size_t n = 0;          // dataset size
  std::size_t k = 0;          // parameter count
  double delta = 0.05;        // confidence level
  double eta = 0.0;           // prior scale
  std::optional<double> rho;  // perturbation radius
  std::optional<double> sigma;
  double constant_term = 0.0;  // stands in for the unspecified O(1)

  void validate() const {
    if (n < 2) throw ValidationError("BoundParams: n must be >= 2");
    if (k < 1) throw ValidationError("BoundParams: k must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
      throw ValidationError("BoundParams: delta must be in (0, 1)");
    if (!(eta > 0.0)) throw ValidationError("BoundParams: eta must be > 0");
    if (!rho && !sigma)
      throw ValidationError("BoundParams: provide rho directly or sigma to derive it");
    if (rho && !(*rho > 0.0)) throw ValidationError("BoundParams: rho must be > 0");
    if (sigma && !(*sigma > 0.0)) throw ValidationError("BoundParams: sigma must be > 0");
  }
};

struct BoundEval {
  double value = 0.0;
  double rho = 0.0;
  bool rho_derived_from_sigma = false;
};

/// Evaluate
///   max_perturbed_loss
///     + sqrt( (1/(n-1)) * ( k*log(1 + (||w||^2/(eta^2 rho^2)) * (1+sqrt(log n / k))^2)
///                           + 4*log(n/delta) + constant_term ) ).
/// Diagnostic only: the unspecified O(1) makes absolute values conventional.
inline BoundEval eval_bound(double max_perturbed_loss, double w_sq_norm, const BoundParams& bp) {
  bp.validate();
  if (!std::isfinite(max_perturbed_loss))
    throw ValidationError("eval_bound: max_perturbed_loss must be finite");
  if (w_sq_norm < 0.0) throw ValidationError("eval_bound: w_sq_norm must be >= 0");

  double n = static_cast<double>(bp.n);
  double k = static_cast<double>(bp.k);
  BoundEval res;
  if (bp.rho) {
    res.rho = *bp.rho;
  } else {
    res.rho = std::sqrt(k) * (*bp.sigma) * (1.0 + std::sqrt(std::log(n) / k)) / n;
    res.rho_derived_from_sigma = true;
  }
  double ratio = 1.0 + std::sqrt(std::log(n) / k);
  double inside_log = 1.0 + (w_sq_norm / (bp.eta * bp.eta * res.rho * res.rho)) * ratio * ratio;
  double radicand =
      (k * std::log(inside_log) + 4.0 * std::log(n / bp.delta) + bp.constant_term) / (n - 1.0);
  if (radicand < 0.0) {
    throw DomainError("eval_bound: negative radicand (constant_term too negative)");
  }
  res.value = max_perturbed_loss + std::sqrt(radicand);
  return res;
}

}  // namespace gcsam
