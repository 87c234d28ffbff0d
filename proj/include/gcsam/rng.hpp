#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gcsam/tensor.hpp"

namespace gcsam {

/// Deterministic random source with a pinned bit-level contract so runs
/// reproduce across builds ("gcsam.rng.v1"):
///   - engine: std::mt19937_64 (sequence fixed by the C++ standard)
///   - uniform01: top 53 bits, (x >> 11) * 2^-53, in [0, 1)
///   - normal: Box-Muller cosine branch, two uniform draws per variate
/// std::random distributions are avoided on purpose; their output is
/// implementation-defined.
class Rng {
 public:
  static constexpr const char* kContract = "gcsam.rng.v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal. Uses u1 in (0, 1] so log(u1) is finite.
  double normal() {
    double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// i.i.d. N(0, 1) entries.
  Tensor normal_tensor(std::vector<std::size_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = normal();
    return t;
  }

  /// In-place Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_u64() % i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive independent sub-stream seeds from a
/// master seed, e.g. derive_seed(seed, epoch).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace gcsam
