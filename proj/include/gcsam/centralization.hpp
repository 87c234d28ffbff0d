#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gcsam/param_set.hpp"
#include "gcsam/tensor.hpp"

namespace gcsam {

/// Gradient Centralization settings. Centralization subtracts, from every
/// column slice of a gradient tensor, the mean of that slice - the projection
/// P = I - e e^T with e the unit vector of equal components, applied per
/// column. The projection is realized as mean subtraction; P is never
/// materialized.
struct GcConfig {
  bool enabled = true;
  /// Minimum tensor rank for centralization to apply. Biases (rank 1) pass
  /// through untouched by default.
  int min_rank = 2;
  /// Axis along which a column slice extends; the mean is taken over this
  /// axis. -1 selects the last axis, which for (fan_out x fan_in) weight
  /// matrices is the fan-in axis.
  int column_axis = -1;

  void validate() const {
    if (min_rank < 1) throw ValidationError("GcConfig: min_rank must be >= 1");
  }

  std::size_t resolve_axis(const Tensor& t) const {
    int ax = column_axis < 0 ? static_cast<int>(t.rank()) + column_axis : column_axis;
    if (ax < 0 || static_cast<std::size_t>(ax) >= t.rank()) {
      throw ValidationError("GcConfig: column_axis " + std::to_string(column_axis) +
                            " invalid for tensor of shape " + shape_str(t.shape));
    }
    return static_cast<std::size_t>(ax);
  }
};

/// Norm bookkeeping for one centralization: the squared norm before, after,
/// and of the removed per-column mean component. The identity
///   gc_sq_norm == orig_sq_norm - removed_sq_norm
/// holds per column (and summed), which is the machine-checkable form of the
/// bound's norm argument.
struct CentralizationReport {
  double orig_sq_norm = 0.0;
  double gc_sq_norm = 0.0;
  double removed_sq_norm = 0.0;  // sum over columns of n * mu^2
  std::vector<double> column_means;

  void accumulate(const CentralizationReport& o) {
    orig_sq_norm += o.orig_sq_norm;
    gc_sq_norm += o.gc_sq_norm;
    removed_sq_norm += o.removed_sq_norm;
  }
};

/// Subtract each column slice's mean from a rank >= min_rank tensor.
/// Columns extend along cfg.column_axis; all other indices enumerate them.
inline std::pair<Tensor, CentralizationReport> centralize_matrix(const Tensor& grad,
                                                                 const GcConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(grad.rank()) < cfg.min_rank) {
    throw ValidationError("centralize_matrix: tensor of shape " + shape_str(grad.shape) +
                          " is below min_rank " + std::to_string(cfg.min_rank) +
                          "; callers must route such tensors around GC");
  }
  if (!grad.all_finite()) {
    throw ValidationError("centralize_matrix: non-finite gradient input");
  }

  CentralizationReport report;
  Tensor out = grad;
  report.orig_sq_norm = sq_norm(grad);

  if (!cfg.enabled) {
    report.gc_sq_norm = report.orig_sq_norm;
    return {std::move(out), std::move(report)};
  }

  std::size_t axis = cfg.resolve_axis(grad);
  std::size_t n = grad.shape[axis];

  // Row-major strides; a column's elements are `stride` apart.
  std::size_t stride = 1;
  for (std::size_t d = axis + 1; d < grad.rank(); ++d) stride *= grad.shape[d];
  std::size_t inner = stride;               // index range below the axis
  std::size_t outer = grad.size() / (n * inner);  // index range above the axis

  NeumaierSum removed;
  report.column_means.reserve(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * n * inner + in;
      NeumaierSum s;
      for (std::size_t j = 0; j < n; ++j) s.add(out.data[base + j * stride]);
      double mu = s.value() / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) out.data[base + j * stride] -= mu;
      report.column_means.push_back(mu);
      removed.add(static_cast<double>(n) * mu * mu);
    }
  }
  report.removed_sq_norm = removed.value();
  report.gc_sq_norm = sq_norm(out);
  return {std::move(out), std::move(report)};
}

/// Centralize every gradient tensor of rank >= min_rank; lower-rank tensors
/// (biases) pass through unchanged but still contribute to the aggregate
/// norms. Input gradients are carried as ParamSet values.
inline std::pair<ParamSet, CentralizationReport> centralize_param_set(const ParamSet& grads,
                                                                      const GcConfig& cfg) {
  cfg.validate();
  ParamSet out;
  CentralizationReport aggregate;
  for (const auto& e : grads) {
    if (!e.value.all_finite()) {
      throw ValidationError("centralize_param_set: non-finite gradient for '" + e.name + "'");
    }
    if (cfg.enabled && static_cast<int>(e.value.rank()) >= cfg.min_rank) {
      try {
        auto [t, r] = centralize_matrix(e.value, cfg);
        aggregate.accumulate(r);
        out.add(e.name, std::move(t));
      } catch (const ValidationError& err) {
        throw ValidationError("parameter '" + e.name + "': " + err.what());
      }
    } else {
      double s = sq_norm(e.value);
      aggregate.orig_sq_norm += s;
      aggregate.gc_sq_norm += s;
      out.add(e.name, e.value);
    }
  }
  return {std::move(out), std::move(aggregate)};
}

/// || centralize(centralize(g)) - centralize(g) ||_inf. The projection is
/// idempotent, so this is a pure test instrument; anything above rounding
/// noise indicates a defect.
inline double projection_idempotence_residual(const Tensor& grad, const GcConfig& cfg) {
  auto [once, r1] = centralize_matrix(grad, cfg);
  auto [twice, r2] = centralize_matrix(once, cfg);
  double residual = 0.0;
  for (std::size_t i = 0; i < once.size(); ++i) {
    residual = std::max(residual, std::abs(twice.data[i] - once.data[i]));
  }
  return residual;
}

}  // namespace gcsam
