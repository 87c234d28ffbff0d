#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcsam/tensor.hpp"

namespace gcsam {

/// Ordered, named collection of tensors with an optional paired gradient per
/// entry. Iteration order is insertion order and is the deterministic order
/// every optimizer and serializer walks. Also used for gradient collections
/// and direction vectors (entries without grads).
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    std::optional<Tensor> grad;
  };

  void add(std::string name, Tensor value) {
    if (index_.count(name)) {
      throw ValidationError("duplicate parameter name '" + name + "'");
    }
    index_[name] = entries_.size();
    entries_.push_back(Entry{std::move(name), std::move(value), std::nullopt});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  Tensor& value(const std::string& name) { return entries_[at(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[at(name)].value; }

  void set_grad(const std::string& name, Tensor g) {
    Entry& e = entries_[at(name)];
    if (!e.value.same_shape(g)) {
      throw ShapeError("gradient shape " + shape_str(g.shape) + " for '" + name +
                       "' does not match value shape " + shape_str(e.value.shape));
    }
    e.grad = std::move(g);
  }
  const std::optional<Tensor>& grad(const std::string& name) const {
    return entries_[at(name)].grad;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Same names in the same order with matching shapes.
  bool aligned_with(const ParamSet& o) const {
    if (size() != o.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (entries_[i].name != o.entries_[i].name) return false;
      if (!entries_[i].value.same_shape(o.entries_[i].value)) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.value.all_finite()) return false;
    return true;
  }

  /// this.value += c * d.value, elementwise across all entries.
  void axpy(double c, const ParamSet& d) {
    require_aligned(d, "axpy");
    for (std::size_t i = 0; i < size(); ++i) {
      auto& dst = entries_[i].value.data;
      const auto& src = d.entries_[i].value.data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c * src[k];
    }
  }

  double global_sq_norm() const {
    NeumaierSum s;
    for (const auto& e : entries_)
      for (double v : e.value.data) s.add(v * v);
    return s.value();
  }

  static double global_dot(const ParamSet& a, const ParamSet& b) {
    a.require_aligned(b, "global_dot");
    NeumaierSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& x = a.entries_[i].value.data;
      const auto& y = b.entries_[i].value.data;
      for (std::size_t k = 0; k < x.size(); ++k) s.add(x[k] * y[k]);
    }
    return s.value();
  }

  /// Total number of scalar elements across all values.
  std::size_t num_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Copy with the same names/shapes and all values zero; grads dropped.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor::zeros(e.value.shape));
    return out;
  }

  /// Copy of names and values only; grads dropped.
  ParamSet values_copy() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, e.value);
    return out;
  }

  void require_aligned(const ParamSet& o, const char* op) const {
    if (!aligned_with(o)) {
      throw ValidationError(std::string(op) +
                            ": parameter sets are not aligned (names/shapes differ)");
    }
  }

 private:
  std::size_t at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw ValidationError("unknown parameter name '" + name + "'");
    }
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gcsam
