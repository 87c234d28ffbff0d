#pragma once

#include <cmath>
#include <vector>

#include "gcsam/finite_diff.hpp"
#include "gcsam/param_set.hpp"

namespace gcsam {

/// L(w) = 0.5 * lambda * ||w||^2 over all parameters; gradient lambda * w.
inline GradientOracle quadratic_bowl_oracle(double lambda = 1.0) {
  return [lambda](const ParamSet& p) {
    LossGrad out;
    out.loss = 0.5 * lambda * p.global_sq_norm();
    for (const auto& e : p) out.grads.add(e.name, scale(e.value, lambda));
    return out;
  };
}

/// L(w) = <c, w>; gradient is the constant c.
inline GradientOracle linear_oracle(ParamSet c) {
  return [c = std::move(c)](const ParamSet& p) {
    LossGrad out;
    out.loss = ParamSet::global_dot(c, p);
    out.grads = c.values_copy();
    return out;
  };
}

/// One-dimensional asymmetric double well: two negative Gaussians, a wide
/// shallow one and a narrow one about 5% deeper. The narrow well is a sharp
/// minimum (width ratio 12x); a perturbation radius larger than its width
/// makes it invisible to the SAM objective while the flat well stays
/// attractive. Parameters are fixed here and validated against a dense-grid
/// brute-force oracle in the acceptance suite.
struct DoubleWellParams {
  double flat_center = 0.0;
  double flat_amp = 1.0;
  double flat_sigma = 1.2;
  double sharp_center = 1.2;
  double sharp_amp = 0.4405;
  double sharp_sigma = 0.1;

  double sharp_width() const { return 2.0 * sharp_sigma; }
};

inline double double_well_loss(double w, const DoubleWellParams& p = {}) {
  double df = w - p.flat_center;
  double ds = w - p.sharp_center;
  return -p.flat_amp * std::exp(-df * df / (2.0 * p.flat_sigma * p.flat_sigma)) -
         p.sharp_amp * std::exp(-ds * ds / (2.0 * p.sharp_sigma * p.sharp_sigma));
}

inline double double_well_grad(double w, const DoubleWellParams& p = {}) {
  double df = w - p.flat_center;
  double ds = w - p.sharp_center;
  return p.flat_amp * (df / (p.flat_sigma * p.flat_sigma)) *
             std::exp(-df * df / (2.0 * p.flat_sigma * p.flat_sigma)) +
         p.sharp_amp * (ds / (p.sharp_sigma * p.sharp_sigma)) *
             std::exp(-ds * ds / (2.0 * p.sharp_sigma * p.sharp_sigma));
}

/// The double well as a gradient oracle over a single scalar parameter "w"
/// (rank 1, so centralization passes it through).
inline GradientOracle double_well_oracle(const DoubleWellParams& p = {}) {
  return [p](const ParamSet& ps) {
    double w = ps.value("w").data[0];
    LossGrad out;
    out.loss = double_well_loss(w, p);
    out.grads.add("w", Tensor::vec({double_well_grad(w, p)}));
    return out;
  };
}

inline ParamSet scalar_param(double w) {
  ParamSet p;
  p.add("w", Tensor::vec({w}));
  return p;
}

}  // namespace gcsam
