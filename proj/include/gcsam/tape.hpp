#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "gcsam/tensor.hpp"

namespace gcsam {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  const Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Record of one forward evaluation: a topologically ordered list of
/// primitive ops with local partial-derivative closures. A tape is reusable;
/// backward() never mutates it, so repeated passes are bitwise identical.
class Tape {
 public:
  /// Tracked input; its gradient is produced by backward().
  Var leaf(Tensor v) {
    std::size_t id = push(std::move(v), -1, -1, true, nullptr);
    nodes_[id].leaf_index = static_cast<int>(leaves_.size());
    leaves_.push_back(id);
    return Var{this, id};
  }

  /// Untracked constant (dataset batches, targets, ...).
  Var constant(Tensor v) { return Var{this, push(std::move(v), -1, -1, false, nullptr)}; }

  const Tensor& value(Var x) const {
    own(x);
    return nodes_[x.id].value;
  }

  std::size_t num_leaves() const { return leaves_.size(); }

  Var add(Var a, Var b) {
    own(a), own(b);
    Tensor out = gcsam::add(nodes_[a.id].value, nodes_[b.id].value);
    return make(std::move(out), a, b,
                [](const Tape&, const Tensor& g, Tensor* ga, Tensor* gb) {
                  if (ga)
                    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i];
                  if (gb)
                    for (std::size_t i = 0; i < g.size(); ++i) gb->data[i] += g.data[i];
                });
  }

  Var mul(Var a, Var b) {
    own(a), own(b);
    Tensor out = gcsam::mul(nodes_[a.id].value, nodes_[b.id].value);
    std::size_t ia = a.id, ib = b.id;
    return make(std::move(out), a, b,
                [ia, ib](const Tape& t, const Tensor& g, Tensor* ga, Tensor* gb) {
                  const Tensor& av = t.nodes_[ia].value;
                  const Tensor& bv = t.nodes_[ib].value;
                  if (ga)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      ga->data[i] += g.data[i] * bv.data[i];
                  if (gb)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gb->data[i] += g.data[i] * av.data[i];
                });
  }

  Var scale(Var a, double c) {
    own(a);
    Tensor out = gcsam::scale(nodes_[a.id].value, c);
    return make(std::move(out), a, Var{},
                [c](const Tape&, const Tensor& g, Tensor* ga, Tensor*) {
                  if (ga)
                    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += c * g.data[i];
                });
  }

  Var sum(Var a) {
    own(a);
    Tensor out = Tensor::scalar(sum_all(nodes_[a.id].value));
    return make(std::move(out), a, Var{},
                [](const Tape&, const Tensor& g, Tensor* ga, Tensor*) {
                  if (ga)
                    for (double& v : ga->data) v += g.data[0];
                });
  }

  Var matmul(Var a, Var b) {
    own(a), own(b);
    Tensor out = gcsam::matmul(nodes_[a.id].value, nodes_[b.id].value);
    std::size_t ia = a.id, ib = b.id;
    return make(std::move(out), a, b,
                [ia, ib](const Tape& t, const Tensor& g, Tensor* ga, Tensor* gb) {
                  const Tensor& av = t.nodes_[ia].value;
                  const Tensor& bv = t.nodes_[ib].value;
                  std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
                  if (ga) {  // dA = g . B^T
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                          s += g.data[i * n + j] * bv.data[p * n + j];
                        ga->data[i * k + p] += s;
                      }
                  }
                  if (gb) {  // dB = A^T . g
                    for (std::size_t p = 0; p < k; ++p)
                      for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                          s += av.data[i * k + p] * g.data[i * n + j];
                        gb->data[p * n + j] += s;
                      }
                  }
                });
  }

  Var transpose(Var a) {
    own(a);
    Tensor out = gcsam::transpose(nodes_[a.id].value);
    return make(std::move(out), a, Var{},
                [](const Tape&, const Tensor& g, Tensor* ga, Tensor*) {
                  if (ga) {
                    std::size_t r = g.shape[0], c = g.shape[1];
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        ga->data[j * r + i] += g.data[i * c + j];
                  }
                });
  }

  Var relu(Var a) {
    own(a);
    Tensor out = gcsam::relu(nodes_[a.id].value);
    std::size_t ia = a.id;
    // Subgradient at 0 is fixed to 0.
    return make(std::move(out), a, Var{},
                [ia](const Tape& t, const Tensor& g, Tensor* ga, Tensor*) {
                  if (ga) {
                    const Tensor& av = t.nodes_[ia].value;
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (av.data[i] > 0.0) ga->data[i] += g.data[i];
                  }
                });
  }

  Var tanh(Var a) {
    own(a);
    Tensor out = gcsam::tanh(nodes_[a.id].value);
    std::size_t self_id = nodes_.size();
    return make(std::move(out), a, Var{},
                [self_id](const Tape& t, const Tensor& g, Tensor* ga, Tensor*) {
                  if (ga) {
                    const Tensor& y = t.nodes_[self_id].value;
                    for (std::size_t i = 0; i < g.size(); ++i)
                      ga->data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                  }
                });
  }

  /// Broadcast bias add: (m x n) matrix plus length-n row vector.
  Var add_rowvec(Var m, Var r) {
    own(m), own(r);
    Tensor out = gcsam::add_rowvec(nodes_[m.id].value, nodes_[r.id].value);
    return make(std::move(out), m, r,
                [](const Tape&, const Tensor& g, Tensor* gm, Tensor* gr) {
                  std::size_t rows = g.shape[0], cols = g.shape[1];
                  if (gm)
                    for (std::size_t i = 0; i < g.size(); ++i) gm->data[i] += g.data[i];
                  if (gr)
                    for (std::size_t i = 0; i < rows; ++i)
                      for (std::size_t j = 0; j < cols; ++j)
                        gr->data[j] += g.data[i * cols + j];
                });
  }

  /// Mean over rows of per-row cross entropy with softmax probabilities.
  /// logits: (m x k), labels: m class indices in [0, k).
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    own(logits);
    const Tensor& z = nodes_[logits.id].value;
    if (z.rank() != 2) {
      throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " +
                       shape_str(z.shape));
    }
    std::size_t m = z.shape[0], k = z.shape[1];
    if (labels.size() != m) {
      throw ValidationError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(m) + " rows");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= k) {
        throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(k) + ")");
      }
    }
    // Forward with the max-shift trick; cache probabilities for backward.
    Tensor probs = Tensor::zeros({m, k});
    NeumaierSum loss;
    for (std::size_t i = 0; i < m; ++i) {
      double mx = z.at(i, 0);
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z.at(i, j));
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) denom += std::exp(z.at(i, j) - mx);
      for (std::size_t j = 0; j < k; ++j) probs.at(i, j) = std::exp(z.at(i, j) - mx) / denom;
      loss.add(mx + std::log(denom) - z.at(i, static_cast<std::size_t>(labels[i])));
    }
    Tensor out = Tensor::scalar(loss.value() / static_cast<double>(m));
    std::vector<int> labels_copy = labels;
    return make(std::move(out), logits, Var{},
                [probs = std::move(probs), labels = std::move(labels_copy)](
                    const Tape&, const Tensor& g, Tensor* ga, Tensor*) {
                  if (!ga) return;
                  std::size_t m = probs.shape[0], k = probs.shape[1];
                  double inv_m = 1.0 / static_cast<double>(m);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                      double p = probs.data[i * k + j];
                      double ind = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                      ga->data[i * k + j] += g.data[0] * (p - ind) * inv_m;
                    }
                });
  }

  /// Mean of squared differences over all elements.
  Var mse(Var pred, Var target) {
    own(pred), own(target);
    const Tensor& p = nodes_[pred.id].value;
    const Tensor& t = nodes_[target.id].value;
    check_same_shape(p, t, "mse");
    NeumaierSum s;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double d = p.data[i] - t.data[i];
      s.add(d * d);
    }
    std::size_t n = p.size();
    Tensor out = Tensor::scalar(s.value() / static_cast<double>(n));
    std::size_t ip = pred.id, it = target.id;
    return make(std::move(out), pred, target,
                [ip, it, n](const Tape& tp, const Tensor& g, Tensor* ga, Tensor* gb) {
                  const Tensor& pv = tp.nodes_[ip].value;
                  const Tensor& tv = tp.nodes_[it].value;
                  double c = 2.0 * g.data[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < pv.size(); ++i) {
                    double d = pv.data[i] - tv.data[i];
                    if (ga) ga->data[i] += c * d;
                    if (gb) gb->data[i] -= c * d;
                  }
                });
  }

  /// Reverse pass from a scalar output node, seeded with `seed`. Returns one
  /// gradient tensor per leaf, in leaf registration order. The tape is left
  /// untouched and may be used again.
  std::vector<Tensor> backward(Var out, double seed = 1.0) const {
    own(out);
    const Node& on = nodes_[out.id];
    if (!on.value.is_scalar()) {
      throw ValidationError("backward: output must be a scalar, got shape " +
                            shape_str(on.value.shape));
    }
    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i <= out.id; ++i)
      if (nodes_[i].track) grads[i] = Tensor::zeros(nodes_[i].value.shape);

    std::vector<Tensor> result;
    result.reserve(leaves_.size());
    if (!on.track) {
      for (std::size_t lid : leaves_) result.push_back(Tensor::zeros(nodes_[lid].value.shape));
      return result;
    }
    grads[out.id].data[0] = seed;

    for (std::size_t i = out.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!n.track || !n.pull) continue;
      Tensor* ga = (n.a >= 0 && nodes_[n.a].track) ? &grads[static_cast<std::size_t>(n.a)] : nullptr;
      Tensor* gb = (n.b >= 0 && nodes_[n.b].track) ? &grads[static_cast<std::size_t>(n.b)] : nullptr;
      n.pull(*this, grads[i], ga, gb);
    }
    for (std::size_t lid : leaves_) {
      result.push_back(lid <= out.id ? std::move(grads[lid])
                                     : Tensor::zeros(nodes_[lid].value.shape));
    }
    return result;
  }

 private:
  using PullFn = std::function<void(const Tape&, const Tensor&, Tensor*, Tensor*)>;

  struct Node {
    Tensor value;
    int a = -1;
    int b = -1;
    bool track = false;
    int leaf_index = -1;
    PullFn pull;
  };

  std::size_t push(Tensor v, int a, int b, bool track, PullFn pull) {
    nodes_.push_back(Node{std::move(v), a, b, track, -1, std::move(pull)});
    return nodes_.size() - 1;
  }

  Var make(Tensor out, Var a, Var b, PullFn pull) {
    int ia = a.tape ? static_cast<int>(a.id) : -1;
    int ib = b.tape ? static_cast<int>(b.id) : -1;
    bool track = (ia >= 0 && nodes_[ia].track) || (ib >= 0 && nodes_[ib].track);
    return Var{this, push(std::move(out), ia, ib, track, track ? std::move(pull) : nullptr)};
  }

  void own(Var x) const {
    if (x.tape != this || x.id >= nodes_.size()) {
      throw ValidationError("variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaves_;
};

}  // namespace gcsam
