#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "gcsam/data.hpp"
#include "gcsam/param_set.hpp"

namespace gcsam {

/// Versioned checkpoint container: named tensors with shapes and exact 64-bit
/// payloads (IEEE-754 bit patterns as 16-digit hex), plus the hash of the
/// model spec that produced them. Loading reproduces values bit for bit.
inline constexpr const char* kCheckpointFormat = "gcsam.checkpoint.v1";

namespace detail {

inline std::string double_to_hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return std::string(buf);
}

inline double hex_to_double(const std::string& s) {
  if (s.size() != 16) throw ValidationError("checkpoint: bad payload word '" + s + "'");
  std::uint64_t bits = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9')
      d = c - '0';
    else if (c >= 'a' && c <= 'f')
      d = c - 'a' + 10;
    else
      throw ValidationError("checkpoint: bad payload word '" + s + "'");
    bits = (bits << 4) | static_cast<std::uint64_t>(d);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            const std::string& spec_hash) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["spec_hash"] = spec_hash;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : params) {
    nlohmann::json t;
    t["name"] = e.name;
    t["shape"] = e.value.shape;
    nlohmann::json data = nlohmann::json::array();
    for (double v : e.value.data) data.push_back(detail::double_to_hex(v));
    t["data"] = std::move(data);
    tensors.push_back(std::move(t));
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("save_checkpoint: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

struct Checkpoint {
  ParamSet params;
  std::string spec_hash;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("load_checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("load_checkpoint: '" + path + "' is not valid JSON: " + ex.what());
  }
  if (!j.contains("format") || j["format"] != kCheckpointFormat) {
    throw ValidationError("load_checkpoint: '" + path + "' is not a " +
                          std::string(kCheckpointFormat) + " file");
  }
  Checkpoint ck;
  ck.spec_hash = j.value("spec_hash", "");
  for (const auto& t : j.at("tensors")) {
    std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> data;
    data.reserve(t.at("data").size());
    for (const auto& w : t.at("data")) data.push_back(detail::hex_to_double(w.get<std::string>()));
    ck.params.add(t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

}  // namespace gcsam
