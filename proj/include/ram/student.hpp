// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Response-anticipating student: estimates the teacher's importance from the
// context-aware document and the encoded context only.

#pragma once

#include <string>

#include "ram/memory.hpp"
#include "ram/param_store.hpp"

namespace ram {

class Student {
 public:
  Student() = default;
  Student(ParamStore& store, const std::string& prefix, Importance importance, std::size_t width,
          Rng& rng)
      : importance_(importance),
        bilinear_(store.add_weight(prefix + ".bilinear", ParamTag::kStudent, width, width, rng)) {
    if (importance == Importance::kToken) {
      mlp_w1_ = store.add_weight(prefix + ".mlp_w1", ParamTag::kStudent, width, width, rng);
      mlp_b1_ = store.add_bias(prefix + ".mlp_b1", ParamTag::kStudent, width);
      mlp_w2_ = store.add_weight(prefix + ".mlp_w2", ParamTag::kStudent, width, 1, rng);
      mlp_b2_ = store.add_bias(prefix + ".mlp_b2", ParamTag::kStudent, 1);
    } else {
      pair_weight_ = store.add_weight(prefix + ".pair", ParamTag::kStudent, width, width, rng);
    }
  }

  /// H = row-softmax(D W X^T) X over valid context positions; PAD document
  /// rows are zero.
  Tensor hidden(const ContextAwareDoc& D, const EncodedSequence& X) const {
    return student_hidden(D, X, bilinear_);
  }

  static Tensor student_hidden(const ContextAwareDoc& D, const EncodedSequence& X, const Tensor& W) {
    if (D.rows.cols() != W.rows() || X.reps.cols() != W.cols()) {
      throw DimensionError("student_hidden: document " + D.rows.value().shape_string() +
                           ", bilinear " + W.value().shape_string() + ", context " +
                           X.reps.value().shape_string());
    }
    Tensor scores = matmul_nt(matmul(D.rows, W), X.reps);
    return matmul(masked_row_softmax(scores, X.mask, D.mask), X.reps);
  }

  /// beta^_i = w2 . relu(W1 h_i + b1) + b2, as a 1 x |D| row (PAD -> 0).
  static Tensor estimate_beta(const Tensor& H, const std::vector<bool>& mask, const Tensor& w1,
                              const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    Tensor hidden = relu(add_row(matmul(H, w1), b1));
    Tensor out = add_row(matmul(hidden, w2), b2);
    return transpose(mask_rows(out, mask));
  }

  /// (H Wa H^T + (H Wa H^T)^T) / 2.
  static Tensor estimate_B(const Tensor& H, const std::vector<bool>& mask, const Tensor& Wa) {
    Tensor raw = matmul_nt(matmul(H, Wa), H);
    return mul_const(scale(add(raw, transpose(raw)), 0.5), detail::pair_mask(mask));
  }

  /// Importance estimate matching the configured variant: 1 x |D| or |D| x |D|.
  Tensor estimate(const ContextAwareDoc& D, const EncodedSequence& X) const {
    Tensor H = hidden(D, X);
    if (importance_ == Importance::kToken) return estimate_beta(H, D.mask, mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_);
    return estimate_B(H, D.mask, pair_weight_);
  }

  /// G assembled exactly as for the teacher, from the student's estimate.
  static WeightMatrix student_weight_matrix(const Tensor& estimate, const Variant& variant,
                                            const Variant& teacher_variant,
                                            const std::vector<bool>& mask, bool train, double tau,
                                            Rng* rng) {
    if (!(variant == teacher_variant)) {
      throw ConfigError("student variant " + variant.name() + " does not match teacher variant " +
                        teacher_variant.name());
    }
    return assemble_weights(variant, estimate, mask, WeightSource::kStudent, train, tau, rng);
  }

  Importance importance() const { return importance_; }
  const Tensor& bilinear() const { return bilinear_; }

 private:
  Importance importance_ = Importance::kToken;
  Tensor bilinear_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  Tensor pair_weight_;
};

}  // namespace ram
