#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gcsam/data.hpp"
#include "gcsam/finite_diff.hpp"
#include "gcsam/param_set.hpp"
#include "gcsam/rng.hpp"
#include "gcsam/tape.hpp"

namespace gcsam {

enum class Activation { kRelu, kTanh };
enum class LossKind { kSoftmaxXent, kMse };
enum class InitKind { kGlorotUniform, kHeUniform };

/// Feedforward network description. Weight matrices are stored
/// (fan_out x fan_in); biases start at zero.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input ... output
  Activation activation = Activation::kRelu;
  LossKind loss = LossKind::kSoftmaxXent;
  InitKind init = InitKind::kGlorotUniform;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_sizes.size() < 2)
      throw ValidationError("MlpSpec: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
      if (s < 1) throw ValidationError("MlpSpec: layer sizes must be >= 1");
  }

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_width() const { return layer_sizes.front(); }
  std::size_t output_width() const { return layer_sizes.back(); }

  static std::string weight_name(std::size_t l) { return "W" + std::to_string(l); }
  static std::string bias_name(std::size_t l) { return "b" + std::to_string(l); }
};

/// Deterministic initialization: uniform weights in [-bound, bound] with
/// bound sqrt(6 / (fan_in + fan_out)) (glorot) or sqrt(6 / fan_in) (he),
/// zero biases.
inline ParamSet init_params(const MlpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ParamSet params;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    std::size_t fan_in = spec.layer_sizes[l];
    std::size_t fan_out = spec.layer_sizes[l + 1];
    double bound = spec.init == InitKind::kGlorotUniform
                       ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                       : std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({fan_out, fan_in});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    params.add(MlpSpec::weight_name(l), std::move(w));
    params.add(MlpSpec::bias_name(l), Tensor::zeros({fan_out}));
  }
  return params;
}

namespace detail {

inline Tensor one_hot(const std::vector<int>& labels, std::size_t k) {
  Tensor t = Tensor::zeros({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValidationError("label " + std::to_string(labels[i]) + " out of range [0, " +
                            std::to_string(k) + ")");
    }
    t.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

inline void check_batch(const MlpSpec& spec, const ParamSet& params, const Batch& batch) {
  if (batch.rows() == 0) throw ValidationError("empty batch");
  if (batch.features.rank() != 2 || batch.features.shape[1] != spec.input_width()) {
    throw ShapeError("batch features " + shape_str(batch.features.shape) +
                     " do not match model input width " +
                     std::to_string(spec.input_width()));
  }
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (!params.contains(MlpSpec::weight_name(l)) || !params.contains(MlpSpec::bias_name(l)))
      throw ValidationError("params missing layer " + std::to_string(l));
  }
  if (!batch.classification()) {
    if (batch.targets.rank() != 2 || batch.targets.shape[1] != spec.output_width())
      throw ShapeError("batch targets " + shape_str(batch.targets.shape) +
                       " do not match model output width " +
                       std::to_string(spec.output_width()));
    if (spec.loss == LossKind::kSoftmaxXent)
      throw ValidationError("softmax_xent loss requires class labels");
  }
}

}  // namespace detail

/// Plain forward pass (no tape): logits = act(...act(X W0^T + b0)...) W_L^T + b_L.
/// Uses the same tensor primitives as the taped path, so losses computed
/// either way agree bitwise.
inline Tensor forward_logits(const MlpSpec& spec, const ParamSet& params, const Tensor& x) {
  Tensor h = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Tensor z = add_rowvec(matmul(h, transpose(params.value(MlpSpec::weight_name(l)))),
                          params.value(MlpSpec::bias_name(l)));
    if (l + 1 < spec.num_layers()) {
      h = spec.activation == Activation::kRelu ? relu(z) : tanh(z);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

/// Smallest |preactivation| reached anywhere in the forward pass. Gradient
/// checks reject cases where this is tiny, since relu is not differentiable
/// at 0.
inline double preactivation_margin(const MlpSpec& spec, const ParamSet& params,
                                   const Batch& batch) {
  double margin = std::numeric_limits<double>::infinity();
  Tensor h = batch.features;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Tensor z = add_rowvec(matmul(h, transpose(params.value(MlpSpec::weight_name(l)))),
                          params.value(MlpSpec::bias_name(l)));
    if (l + 1 < spec.num_layers()) {
      for (double v : z.data) margin = std::min(margin, std::abs(v));
      h = spec.activation == Activation::kRelu ? relu(z) : tanh(z);
    }
  }
  return margin;
}

/// Minibatch-mean loss and exact reverse-mode gradients at `params`.
/// Deterministic: identical inputs give bitwise-identical outputs.
inline LossGrad loss_and_grad(const MlpSpec& spec, const ParamSet& params, const Batch& batch) {
  spec.validate();
  detail::check_batch(spec, params, batch);

  Tape tape;
  std::vector<std::string> names;
  Var h = tape.constant(batch.features);
  std::vector<Var> leaves;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Var w = tape.leaf(params.value(MlpSpec::weight_name(l)));
    Var b = tape.leaf(params.value(MlpSpec::bias_name(l)));
    names.push_back(MlpSpec::weight_name(l));
    names.push_back(MlpSpec::bias_name(l));
    leaves.push_back(w);
    leaves.push_back(b);
    Var z = tape.add_rowvec(tape.matmul(h, tape.transpose(w)), b);
    if (l + 1 < spec.num_layers()) {
      h = spec.activation == Activation::kRelu ? tape.relu(z) : tape.tanh(z);
    } else {
      h = z;
    }
  }

  Var loss;
  if (spec.loss == LossKind::kSoftmaxXent) {
    if (!batch.classification())
      throw ValidationError("softmax_xent loss requires class labels");
    loss = tape.softmax_cross_entropy(h, batch.labels);
  } else {
    Tensor targets = batch.classification()
                         ? detail::one_hot(batch.labels, spec.output_width())
                         : batch.targets;
    loss = tape.mse(h, tape.constant(std::move(targets)));
  }

  LossGrad out;
  out.loss = tape.value(loss).data[0];
  if (!std::isfinite(out.loss)) throw EvalError("loss_and_grad: non-finite loss");
  std::vector<Tensor> grads = tape.backward(loss, 1.0);
  for (std::size_t i = 0; i < names.size(); ++i)
    out.grads.add(names[i], std::move(grads[i]));
  return out;
}

struct EvalResult {
  double mean_loss = 0.0;
  /// argmax-match fraction for classification (ties resolve to the lowest
  /// class index); absent for regression targets.
  std::optional<double> accuracy;
};

/// Full-dataset forward pass: mean loss, plus accuracy for classification.
inline EvalResult evaluate(const MlpSpec& spec, const ParamSet& params, const Dataset& dataset) {
  spec.validate();
  if (dataset.rows() == 0) throw ValidationError("evaluate: empty dataset");
  Batch all = dataset.as_batch();
  detail::check_batch(spec, params, all);
  Tensor logits = forward_logits(spec, params, all.features);

  EvalResult res;
  std::size_t m = logits.shape[0], k = logits.shape[1];
  if (spec.loss == LossKind::kSoftmaxXent) {
    NeumaierSum loss;
    for (std::size_t i = 0; i < m; ++i) {
      double mx = logits.at(i, 0);
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) denom += std::exp(logits.at(i, j) - mx);
      loss.add(mx + std::log(denom) - logits.at(i, static_cast<std::size_t>(all.labels[i])));
    }
    res.mean_loss = loss.value() / static_cast<double>(m);
  } else {
    Tensor targets = all.classification() ? detail::one_hot(all.labels, k) : all.targets;
    NeumaierSum loss;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      double d = logits.data[i] - targets.data[i];
      loss.add(d * d);
    }
    res.mean_loss = loss.value() / static_cast<double>(logits.size());
  }

  if (dataset.classification()) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      if (static_cast<int>(best) == all.labels[i]) ++hits;
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(m);
  }
  return res;
}

/// Gradient oracle bound to a fixed batch: params -> (loss, grads).
inline GradientOracle make_batch_oracle(const MlpSpec& spec, Batch batch) {
  return [spec, batch = std::move(batch)](const ParamSet& p) {
    return loss_and_grad(spec, p, batch);
  };
}

/// Gradient oracle over a whole dataset (no minibatch noise); the loss
/// surface the analysis instruments probe.
inline GradientOracle make_dataset_oracle(const MlpSpec& spec, const Dataset& dataset) {
  return make_batch_oracle(spec, dataset.as_batch());
}

/// Loss-only view of the full-dataset surface (forward pass only). The
/// evaluation loop mirrors the taped loss ops exactly, so the value agrees
/// bitwise with the oracle's loss.
inline LossFn make_dataset_loss(const MlpSpec& spec, const Dataset& dataset) {
  return [spec, dataset](const ParamSet& p) { return evaluate(spec, p, dataset).mean_loss; };
}

}  // namespace gcsam
