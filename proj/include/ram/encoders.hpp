// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ram/param_store.hpp"
#include "ram/recurrent.hpp"
#include "ram/tensor.hpp"
#include "ram/text.hpp"

namespace ram {

/// Switches between training (dropout, relaxed sampling) and prediction.
struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;
  // Replace every weight matrix with all-ones (the base model's memory).
  bool unit_weights = false;

  Rng& random() const {
    if (!rng) throw std::logic_error("ForwardContext: stochastic op without an RNG");
    return *rng;
  }
};

/// Per-token representations; rows at PAD positions are zero.
struct EncodedSequence {
  Tensor reps;  // width x k
  std::vector<bool> mask;
  Tensor final_state;  // 1 x k
};

struct ContextAwareDoc {
  Tensor rows;  // |D| x k
  std::vector<bool> mask;
};

struct CrossAttentionResult {
  ContextAwareDoc doc;
  Tensor attention;  // |D| x |X|
  Tensor summary;    // |D| x k
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng) {
    Matrix m(vocab, dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t r = 0; r < vocab; ++r)
      for (std::size_t c = 0; c < dim; ++c)
        m(r, c) = r == static_cast<std::size_t>(kPadId) ? 0.0 : (2.0 * uniform01(rng) - 1.0) * bound;
    table_ = store.add(name, ParamTag::kBase, std::move(m));
  }

  /// PAD maps to a zero row and never receives gradient.
  Tensor embed(const std::vector<int>& ids) const { return gather_rows(table_, ids, kPadId); }

  /// Overwrites rows for tokens present in `pretrained`; returns rows set.
  std::size_t load_pretrained(const EmbeddingTable& pretrained, const Vocabulary& vocab) {
    std::size_t hits = 0;
    Matrix& m = table_.mutable_value();
    for (std::size_t id = kReservedTokens; id < vocab.size() && id < m.rows(); ++id) {
      auto it = pretrained.find(vocab.token(static_cast<int>(id)));
      if (it == pretrained.end()) continue;
      if (it->second.size() != m.cols()) {
        throw DataError("pretrained embedding width " + std::to_string(it->second.size()) +
                        " does not match " + std::to_string(m.cols()));
      }
      for (std::size_t c = 0; c < m.cols(); ++c) m(id, c) = it->second[c];
      ++hits;
    }
    return hits;
  }

  const Tensor& table() const { return table_; }
  std::size_t dim() const { return table_.cols(); }
  std::size_t vocab_size() const { return table_.rows(); }

 private:
  Tensor table_;
};

/// One bi-directional LSTM layer followed by a shared projection to width k.
class BiLstmEncoder {
 public:
  BiLstmEncoder() = default;
  BiLstmEncoder(ParamStore& store, const std::string& prefix, ParamTag tag, std::size_t input,
                std::size_t hidden, std::size_t width, double dropout, Rng& rng)
      : forward_(LstmParams::create(store, prefix + ".fwd", tag, input, hidden, rng)),
        backward_(LstmParams::create(store, prefix + ".bwd", tag, input, hidden, rng)),
        projection_(store.add_weight(prefix + ".proj", tag, 2 * hidden, width, rng)),
        projection_bias_(store.add_bias(prefix + ".proj_bias", tag, width)),
        dropout_(dropout) {}

  /// `embedded` is width x e with rows flagged by `mask` (valid prefix).
  EncodedSequence encode(const Tensor& embedded, const std::vector<bool>& mask,
                         const ForwardContext& ctx) const {
    std::size_t n = 0;
    while (n < mask.size() && mask[n]) ++n;
    if (n == 0) throw DimensionError("encode: empty sequence");
    for (std::size_t i = n; i < mask.size(); ++i)
      if (mask[i]) throw DimensionError("encode: mask is not a prefix");
    const std::size_t h = forward_.hidden_size();

    Tensor inputs = slice_rows(embedded, 0, n);
    if (ctx.train && dropout_ > 0.0) inputs = dropout(inputs, dropout_, true, ctx.random());

    std::vector<Tensor> fwd(n), bwd(n);
    LstmState s = LstmState::zeros(h);
    for (std::size_t t = 0; t < n; ++t) {
      s = lstm_step(forward_, row(inputs, t), s);
      fwd[t] = s.h;
    }
    s = LstmState::zeros(h);
    for (std::size_t t = n; t-- > 0;) {
      s = lstm_step(backward_, row(inputs, t), s);
      bwd[t] = s.h;
    }
    std::vector<Tensor> joined;
    joined.reserve(n + 1);
    for (std::size_t t = 0; t < n; ++t) joined.push_back(concat_cols(fwd[t], bwd[t]));
    joined.push_back(concat_cols(fwd[n - 1], bwd[0]));
    Tensor projected = add_row(matmul(stack_rows(joined), projection_), projection_bias_);

    EncodedSequence out;
    out.mask = mask;
    Tensor valid = slice_rows(projected, 0, n);
    if (n < mask.size()) {
      valid = stack_rows({valid, constant(Matrix(mask.size() - n, projected.cols()))});
    }
    out.reps = valid;
    out.final_state = slice_rows(projected, n, 1);
    return out;
  }

  std::size_t width() const { return projection_.cols(); }

 private:
  LstmParams forward_;
  LstmParams backward_;
  Tensor projection_;
  Tensor projection_bias_;
  double dropout_ = 0.0;
};

/// Context-to-document attention with scaled dot-product scores and
/// concatenate-then-project fusion.
class ContextCrossAttention {
 public:
  ContextCrossAttention() = default;
  ContextCrossAttention(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng)
      : fusion_(store.add_weight(prefix + ".fusion", ParamTag::kBase, 2 * width, width, rng)),
        fusion_bias_(store.add_bias(prefix + ".fusion_bias", ParamTag::kBase, width)) {}

  CrossAttentionResult apply(const EncodedSequence& doc, const EncodedSequence& ctx) const {
    if (doc.reps.cols() != ctx.reps.cols()) {
      throw DimensionError("context_cross_attention: width " + std::to_string(doc.reps.cols()) +
                           " vs " + std::to_string(ctx.reps.cols()));
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(doc.reps.cols()));
    Tensor alpha = masked_row_softmax(scale(matmul_nt(doc.reps, ctx.reps), s), ctx.mask, doc.mask);
    Tensor summary = matmul(alpha, ctx.reps);
    Tensor fused = add_row(matmul(concat_cols(doc.reps, summary), fusion_), fusion_bias_);
    return {{mask_rows(fused, doc.mask), doc.mask}, alpha, summary};
  }

 private:
  Tensor fusion_;
  Tensor fusion_bias_;
};

}  // namespace ram
