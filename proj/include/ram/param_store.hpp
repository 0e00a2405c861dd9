// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ram/tensor.hpp"

namespace ram {

/// Parameter partition used by the alternating schedule.
///   kBase    - shared encoders, memory and decoder (phi)
///   kTeacher - layers only the response-aware teacher uses (theta_t)
///   kStudent - layers only the response-anticipating student uses (theta_s)
enum class ParamTag : std::uint8_t { kBase = 0, kTeacher = 1, kStudent = 2 };

inline const char* tag_name(ParamTag tag) {
  switch (tag) {
    case ParamTag::kBase: return "phi";
    case ParamTag::kTeacher: return "theta_t";
    case ParamTag::kStudent: return "theta_s";
  }
  return "?";
}

struct ParamEntry {
  std::string name;
  ParamTag tag;
  Tensor tensor;
  // Adam moments; reset when the tensor becomes trainable again.
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t steps = 0;
};

class TagSet {
 public:
  TagSet() = default;
  TagSet(std::initializer_list<ParamTag> tags) {
    for (auto t : tags) bits_ |= bit(t);
  }
  bool contains(ParamTag t) const { return (bits_ & bit(t)) != 0; }
  bool operator==(const TagSet&) const = default;

 private:
  static unsigned bit(ParamTag t) { return 1u << static_cast<unsigned>(t); }
  unsigned bits_ = 0;
};

/// Named registry of trainable tensors in registration order.
class ParamStore {
 public:
  Tensor add(const std::string& name, ParamTag tag, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry{name, tag, parameter(std::move(init)), {}, {}, 0});
    return entries_.back().tensor;
  }

  /// Uniform(-bound, bound) initialization drawn from `rng`.
  Tensor add_uniform(const std::string& name, ParamTag tag, std::size_t rows, std::size_t cols,
                     double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    return add(name, tag, std::move(m));
  }

  /// Fan-in scaled weight for right-multiplication (x * W, W is in x out).
  Tensor add_weight(const std::string& name, ParamTag tag, std::size_t in, std::size_t out,
                    Rng& rng) {
    return add_uniform(name, tag, in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }

  Tensor add_bias(const std::string& name, ParamTag tag, std::size_t width) {
    return add(name, tag, Matrix(1, width));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const ParamEntry& entry(const std::string& name) const { return entries_.at(lookup(name)); }
  Tensor get(const std::string& name) const { return entries_.at(lookup(name)).tensor; }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.value().size();
    return n;
  }

  /// Enables gradients exactly for the given tags.
  void set_trainable(const TagSet& tags) {
    for (auto& e : entries_) e.tensor.set_requires_grad(tags.contains(e.tag));
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  std::vector<Tensor> tensors(const TagSet& tags) const {
    std::vector<Tensor> out;
    for (const auto& e : entries_)
      if (tags.contains(e.tag)) out.push_back(e.tensor);
    return out;
  }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor.value());
    return out;
  }

  /// Restores values for entries whose tag is in `tags`.
  void restore(const std::vector<Matrix>& values, const TagSet& tags) {
    if (values.size() != entries_.size()) throw std::invalid_argument("ParamStore: snapshot size");
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (tags.contains(entries_[i].tag)) entries_[i].tensor.mutable_value() = values[i];
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
  }

  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ram
