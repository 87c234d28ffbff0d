#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "gcsam/errors.hpp"

namespace gcsam {

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t e : shape) p *= e;
  return p;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

/// Dense row-major tensor of doubles. Rank 0 is a scalar (shape {}, one
/// element). All compute in this library is 64-bit.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (shape_product(shape) != data.size()) {
      throw ShapeError("tensor shape " + shape_str(shape) + " expects " +
                       std::to_string(shape_product(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = shape_product(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = shape_product(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vec(std::vector<double> d) {
    std::size_t n = d.size();
    return Tensor({n}, std::move(d));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return data.size() == 1 && shape.empty(); }

  std::size_t rows() const { return shape.size() > 0 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": operand shapes " + shape_str(a.shape) +
                     " and " + shape_str(b.shape) + " do not match");
  }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) v *= c;
  return out;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(a.shape));
  }
  Tensor out = Tensor::zeros({a.shape[1], a.shape[0]});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape) +
                     " and " + shape_str(b.shape));
  }
  if (a.shape[1] != b.shape[0]) {
    throw ShapeError("matmul: inner dimensions of " + shape_str(a.shape) + " and " +
                     shape_str(b.shape) + " differ");
  }
  std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double av = a.data[i * k + p];
      const double* brow = &b.data[p * n];
      double* orow = &out.data[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

/// Broadcast-add a length-n row vector to every row of an (m x n) matrix.
inline Tensor add_rowvec(const Tensor& m, const Tensor& r) {
  if (m.rank() != 2 || r.rank() != 1 || m.shape[1] != r.shape[0]) {
    throw ShapeError("add_rowvec: shapes " + shape_str(m.shape) + " and " +
                     shape_str(r.shape) + " do not conform");
  }
  Tensor out = m;
  for (std::size_t i = 0; i < m.shape[0]; ++i)
    for (std::size_t j = 0; j < m.shape[1]; ++j) out.at(i, j) += r.data[j];
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = std::tanh(v);
  return out;
}

/// Compensated (Neumaier) summation; keeps norm identities tight.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  NeumaierSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a.data[i] * b.data[i]);
  return s.value();
}

inline double sq_norm(const Tensor& a) {
  NeumaierSum s;
  for (double v : a.data) s.add(v * v);
  return s.value();
}

inline double inf_norm(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

inline double sum_all(const Tensor& a) {
  NeumaierSum s;
  for (double v : a.data) s.add(v);
  return s.value();
}

}  // namespace gcsam
