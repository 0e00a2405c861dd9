// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, all integers little-endian:
//   magic "RAMC" | u32 version | u64 tensor count
//   per tensor: u64 name length | name bytes (UTF-8) | u8 tag (0 phi,
//   1 theta_t, 2 theta_s) | u64 rank | u64 dims[rank] | f64 values[...]

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ram/param_store.hpp"

namespace ram {

inline constexpr std::array<char, 4> kCheckpointMagic{'R', 'A', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  ParamTag tag;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline std::string serialize_checkpoint(const ParamStore& store) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, store.size());
  for (const auto& e : store.entries()) {
    detail::put_le<std::uint64_t>(out, e.name.size());
    out += e.name;
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.tag));
    const auto shape = e.tensor.shape();
    detail::put_le<std::uint64_t>(out, shape.size());
    for (auto d : shape) detail::put_le<std::uint64_t>(out, d);
    for (double v : e.tensor.value().data()) detail::put_le<double>(out, v);
  }
  return out;
}

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint " + path);
  const std::string bytes = serialize_checkpoint(store);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path);
}

inline std::vector<CheckpointTensor> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  std::array<char, 4> magic{};
  if (!f.read(magic.data(), 4) || magic != kCheckpointMagic) throw CheckpointError(path + ": bad magic");
  const auto version = detail::get_le<std::uint32_t>(f);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  }
  const auto count = detail::get_le<std::uint64_t>(f);
  std::vector<CheckpointTensor> out;
  for (std::uint64_t t = 0; t < count; ++t) {
    CheckpointTensor ct;
    const auto len = detail::get_le<std::uint64_t>(f);
    if (len > (1u << 20)) throw CheckpointError(path + ": implausible name length");
    ct.name.resize(len);
    if (!f.read(ct.name.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint truncated");
    const auto tag = detail::get_le<std::uint8_t>(f);
    if (tag > 2) throw CheckpointError(path + ": bad tag for " + ct.name);
    ct.tag = static_cast<ParamTag>(tag);
    const auto rank = detail::get_le<std::uint64_t>(f);
    if (rank > 8) throw CheckpointError(path + ": implausible rank for " + ct.name);
    std::uint64_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      ct.dims.push_back(detail::get_le<std::uint64_t>(f));
      n *= ct.dims.back();
      if (n > (std::uint64_t{1} << 34)) throw CheckpointError(path + ": implausible shape for " + ct.name);
    }
    ct.values.resize(n);
    for (auto& v : ct.values) v = detail::get_le<double>(f);
    out.push_back(std::move(ct));
  }
  return out;
}

/// Loads values into an existing store; names, tags and shapes must match.
inline void load_checkpoint(ParamStore& store, const std::string& path) {
  const auto tensors = read_checkpoint(path);
  if (tensors.size() != store.size()) {
    throw CheckpointError(path + ": holds " + std::to_string(tensors.size()) + " tensors, model has " +
                          std::to_string(store.size()));
  }
  for (const auto& ct : tensors) {
    if (!store.contains(ct.name)) throw CheckpointError(path + ": unknown tensor " + ct.name);
    const auto& e = store.entry(ct.name);
    const auto shape = e.tensor.shape();
    if (e.tag != ct.tag || shape.size() != ct.dims.size() ||
        !std::equal(shape.begin(), shape.end(), ct.dims.begin())) {
      throw CheckpointError(path + ": tensor " + ct.name + " does not match the model");
    }
  }
  for (const auto& ct : tensors) {
    Tensor t = store.get(ct.name);
    std::copy(ct.values.begin(), ct.values.end(), t.mutable_value().data().begin());
  }
}

}  // namespace ram
