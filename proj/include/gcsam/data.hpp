#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gcsam/rng.hpp"
#include "gcsam/tensor.hpp"

namespace gcsam {

/// Where a dataset came from: generator name + parameters + seed, or file
/// path + content hash. Echoed into run reports.
struct Provenance {
  std::string kind;    // "generator" | "csv"
  std::string name;    // generator name or file path
  std::string detail;  // human-readable parameter string
  std::uint64_t seed = 0;
  std::string content_hash;  // FNV-1a 64 of the file bytes, for csv
};

/// One batch of rows: features plus either integer class labels or real
/// targets (exactly one is populated).
struct Batch {
  Tensor features;  // (rows x width)
  std::vector<int> labels;
  Tensor targets;  // (rows x target_width)

  bool classification() const { return !labels.empty(); }
  std::size_t rows() const { return features.rank() > 0 ? features.shape[0] : 0; }
};

struct Dataset {
  Tensor features;
  std::vector<int> labels;
  Tensor targets;
  Provenance provenance;

  bool classification() const { return !labels.empty(); }
  std::size_t rows() const { return features.rank() > 0 ? features.shape[0] : 0; }
  std::size_t width() const { return features.rank() > 1 ? features.shape[1] : 0; }

  int num_classes() const {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    return k;
  }

  Batch as_batch() const { return Batch{features, labels, targets}; }

  Batch take(const std::vector<std::size_t>& idx) const {
    Batch b;
    std::size_t w = width();
    b.features = Tensor::zeros({idx.size(), w});
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < w; ++c) b.features.at(r, c) = features.at(idx[r], c);
    if (classification()) {
      b.labels.reserve(idx.size());
      for (std::size_t r : idx) b.labels.push_back(labels[r]);
    } else {
      std::size_t tw = targets.shape[1];
      b.targets = Tensor::zeros({idx.size(), tw});
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < tw; ++c) b.targets.at(r, c) = targets.at(idx[r], c);
    }
    return b;
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Batch b = take(idx);
    Dataset d;
    d.features = std::move(b.features);
    d.labels = std::move(b.labels);
    d.targets = std::move(b.targets);
    d.provenance = provenance;
    return d;
  }
};

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
      throw ValidationError("SplitSpec: test_fraction must be in (0, 1)");
  }
};

/// Two interleaved half-moons: class 0 on the upper unit semicircle centered
/// at (0, 0), class 1 on the lower unit semicircle centered at (1, 0.5).
/// Gaussian noise of std noise_sigma is added to both coordinates. Classes
/// are balanced to within one point.
inline Dataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw ValidationError("gen_two_moons: n must be >= 2");
  if (noise_sigma < 0.0) throw ValidationError("gen_two_moons: noise_sigma must be >= 0");
  Rng rng(seed);
  std::size_t n0 = (n + 1) / 2;
  Dataset d;
  d.features = Tensor::zeros({n, 2});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int cls = i < n0 ? 0 : 1;
    double t = M_PI * rng.uniform01();
    double x, y;
    if (cls == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    double nx = rng.normal();
    double ny = rng.normal();
    d.features.at(i, 0) = x + noise_sigma * nx;
    d.features.at(i, 1) = y + noise_sigma * ny;
    d.labels[i] = cls;
  }
  d.provenance = Provenance{"generator", "two_moons",
                            "n=" + std::to_string(n) +
                                " noise_sigma=" + std::to_string(noise_sigma),
                            seed, ""};
  return d;
}

/// Isotropic Gaussian blobs, one class per center, assigned round-robin so
/// classes stay balanced to within one point.
inline Dataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers,
                                  double sigma, std::uint64_t seed) {
  if (n < 2) throw ValidationError("gen_gaussian_blobs: n must be >= 2");
  if (centers.empty()) throw ValidationError("gen_gaussian_blobs: need at least one center");
  if (sigma < 0.0) throw ValidationError("gen_gaussian_blobs: sigma must be >= 0");
  std::size_t dim = centers[0].size();
  for (const auto& c : centers) {
    if (c.size() != dim)
      throw ValidationError("gen_gaussian_blobs: centers have inconsistent dimensions");
  }
  Rng rng(seed);
  Dataset d;
  d.features = Tensor::zeros({n, dim});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cls = i % centers.size();
    for (std::size_t j = 0; j < dim; ++j)
      d.features.at(i, j) = centers[cls][j] + sigma * rng.normal();
    d.labels[i] = static_cast<int>(cls);
  }
  d.provenance = Provenance{"generator", "gaussian_blobs",
                            "n=" + std::to_string(n) + " k=" + std::to_string(centers.size()) +
                                " sigma=" + std::to_string(sigma),
                            seed, ""};
  return d;
}

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last) {
    throw IngestError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                      ", column " + std::to_string(col) + " (1-based)");
  }
  return v;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace detail

/// Load a comma-separated file with a header row. The named label column
/// becomes class labels when every value is a non-negative integer, real
/// targets otherwise. Row order is preserved; provenance records an FNV-1a
/// hash of the file bytes.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("load_csv: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();

  std::istringstream lines(bytes);
  std::string line;
  if (!std::getline(lines, line)) throw IngestError("load_csv: '" + path + "' is empty");
  std::vector<std::string> header = detail::split_fields(line);
  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = i;
  if (label_idx == header.size()) {
    std::string available;
    for (std::size_t i = 0; i < header.size(); ++i)
      available += (i ? ", " : "") + header[i];
    throw IngestError("load_csv: label column '" + label_column +
                      "' not found; available columns: " + available);
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> label_vals;
  std::size_t row_no = 1;  // header is row 1
  while (std::getline(lines, line)) {
    ++row_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw IngestError("load_csv: row " + std::to_string(row_no) + " has " +
                        std::to_string(fields.size()) + " cells, header has " +
                        std::to_string(header.size()));
    }
    std::vector<double> feat;
    feat.reserve(header.size() - 1);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = detail::parse_cell(fields[c], row_no, c + 1);
      if (c == label_idx)
        label_vals.push_back(v);
      else
        feat.push_back(v);
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw IngestError("load_csv: '" + path + "' has no data rows");

  Dataset d;
  std::size_t w = rows[0].size();
  d.features = Tensor::zeros({rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < w; ++c) d.features.at(r, c) = rows[r][c];

  bool integral = true;
  for (double v : label_vals) {
    if (!(v >= 0.0) || v != std::floor(v)) {
      integral = false;
      break;
    }
  }
  if (integral) {
    d.labels.reserve(label_vals.size());
    for (double v : label_vals) d.labels.push_back(static_cast<int>(v));
  } else {
    d.targets = Tensor::zeros({label_vals.size(), 1});
    for (std::size_t r = 0; r < label_vals.size(); ++r) d.targets.at(r, 0) = label_vals[r];
  }
  d.provenance = Provenance{"csv", path, "label_column=" + label_column, 0,
                            detail::fnv1a_hex(bytes)};
  return d;
}

/// Write a dataset as CSV with feature columns f0..f{k-1} and a final label
/// column, 17 significant digits. load_csv(save_csv(d)) reproduces d.
inline void save_csv(const Dataset& d, const std::string& path,
                     const std::string& label_column = "label") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("save_csv: cannot open '" + path + "' for writing");
  std::size_t w = d.width();
  for (std::size_t c = 0; c < w; ++c) out << "f" << c << ",";
  out << label_column << "\n";
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < w; ++c) out << detail::fmt_g17(d.features.at(r, c)) << ",";
    if (d.classification())
      out << d.labels[r];
    else
      out << detail::fmt_g17(d.targets.at(r, 0));
    out << "\n";
  }
}

/// Seeded partition into (train, test). Indices are shuffled with the
/// documented RNG, the first round(n * test_fraction) going to test.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d, const SplitSpec& spec) {
  spec.validate();
  std::size_t n = d.rows();
  if (n < 2) throw ValidationError("split_dataset: need at least 2 rows");
  std::size_t n_test = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) * spec.test_fraction));
  n_test = std::max<std::size_t>(1, std::min(n_test, n - 1));
  Rng rng(spec.seed);
  std::vector<std::size_t> perm = rng.permutation(n);
  std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + n_test);
  std::vector<std::size_t> train_idx(perm.begin() + n_test, perm.end());
  return {d.subset(train_idx), d.subset(test_idx)};
}

/// One epoch of minibatches: a seeded permutation (or the original order when
/// shuffle is false) cut into consecutive chunks of size b; the last batch
/// may be smaller. The union of batches is the dataset, exactly once.
inline std::vector<Batch> minibatches(const Dataset& d, std::size_t b, std::uint64_t seed,
                                      bool shuffle) {
  std::size_t n = d.rows();
  if (b < 1 || b > n) {
    throw ValidationError("minibatches: batch size " + std::to_string(b) +
                          " invalid for dataset of " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> order;
  if (shuffle) {
    Rng rng(seed);
    order = rng.permutation(n);
  } else {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < n; start += b) {
    std::size_t end = std::min(start + b, n);
    std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
    out.push_back(d.take(idx));
  }
  return out;
}

}  // namespace gcsam
