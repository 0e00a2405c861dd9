// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Attentional GRU decoder over a document memory.

#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "ram/encoders.hpp"
#include "ram/memory.hpp"
#include "ram/recurrent.hpp"

namespace ram {

struct DecoderState {
  Tensor h;  // 1 x k
  std::size_t step = 0;
  std::vector<int> emitted;
};

struct DecodeStepResult {
  Tensor logits;  // 1 x V
  DecoderState state;
  Tensor attention;  // 1 x |D|
  Tensor context;    // 1 x k
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore& store, const std::string& prefix, std::size_t embed, std::size_t width,
          std::size_t vocab, Rng& rng)
      : init_weight_(store.add_weight(prefix + ".init", ParamTag::kBase, width, width, rng)),
        init_bias_(store.add_bias(prefix + ".init_bias", ParamTag::kBase, width)),
        cell_(GruParams::create(store, prefix + ".gru", ParamTag::kBase, embed, width, rng)),
        combine_(store.add_weight(prefix + ".combine", ParamTag::kBase, 2 * width, width, rng)),
        output_(store.add_weight(prefix + ".out", ParamTag::kBase, width, vocab, rng)),
        output_bias_(store.add_bias(prefix + ".out_bias", ParamTag::kBase, vocab)) {}

  /// h0 = (sum of valid context rows) W + b.
  DecoderState init_state(const EncodedSequence& ctx) const {
    Matrix ones(1, ctx.mask.size());
    for (std::size_t i = 0; i < ctx.mask.size(); ++i) ones(0, i) = ctx.mask[i] ? 1.0 : 0.0;
    Tensor summed = matmul(constant(std::move(ones)), ctx.reps);
    return {add(matmul(summed, init_weight_), init_bias_), 0, {}};
  }

  /// z = GRU(e_prev, h), alpha = softmax(z M^T), c = alpha M,
  /// h' = W1 [z; c], logits = h' Wout + b. The next state is h'.
  DecodeStepResult step(const DecoderState& state, int prev_id, const Memory& memory,
                        const Embedding& embedding) const {
    if (prev_id < 0 || static_cast<std::size_t>(prev_id) >= output_.cols()) {
      throw IndexError("decode_step: token id " + std::to_string(prev_id) + " outside vocabulary");
    }
    Tensor e = embedding.embed({prev_id});
    Tensor z = gru_step(cell_, e, state.h);
    Tensor alpha = masked_row_softmax(matmul_nt(z, memory.M), memory.mask, {true});
    Tensor c = matmul(alpha, memory.M);
    Tensor h = matmul(concat_cols(z, c), combine_);
    Tensor logits = add(matmul(h, output_), output_bias_);
    DecoderState next{h, state.step + 1, state.emitted};
    next.emitted.push_back(prev_id);
    return {logits, next, alpha, c};
  }

  /// Teacher-forced negative log-likelihood of the valid response tokens,
  /// summed over steps.
  Tensor nll(const EncodedSequence& ctx, const Memory& memory, const std::vector<int>& response,
             const Embedding& embedding) const {
    if (response.empty()) throw DimensionError("decoder nll: empty response");
    DecoderState s = init_state(ctx);
    std::vector<Tensor> logits;
    logits.reserve(response.size());
    int prev = kBosId;
    for (int target : response) {
      auto r = step(s, prev, memory, embedding);
      logits.push_back(r.logits);
      s = std::move(r.state);
      prev = target;
    }
    return nll_softmax(stack_rows(logits), response);
  }

  /// Top-k random sampling; k = 1 is greedy. Stops after EOS (not returned)
  /// or `max_len` tokens.
  std::vector<int> generate(const EncodedSequence& ctx, const Memory& memory,
                            const Embedding& embedding, std::size_t k_top, std::size_t max_len,
                            Rng& rng) const {
    if (k_top == 0) throw std::invalid_argument("generate: k_top must be >= 1");
    std::vector<int> out;
    DecoderState s = init_state(ctx);
    int prev = kBosId;
    for (std::size_t t = 0; t < max_len; ++t) {
      auto r = step(s, prev, memory, embedding);
      const int next = sample_top_k(r.logits.value(), k_top, rng);
      if (next == kEosId) break;
      out.push_back(next);
      s = std::move(r.state);
      prev = next;
    }
    return out;
  }

  /// Indices of the k highest logits (ties by lower index), in rank order.
  static std::vector<int> top_k(const Matrix& logits, std::size_t k) {
    std::vector<int> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](int a, int b) {
                        return logits[static_cast<std::size_t>(a)] != logits[static_cast<std::size_t>(b)]
                                   ? logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)]
                                   : a < b;
                      });
    idx.resize(k);
    return idx;
  }

  static int sample_top_k(const Matrix& logits, std::size_t k, Rng& rng) {
    const auto candidates = top_k(logits, k);
    if (candidates.size() == 1) return candidates.front();
    const double mx = logits[static_cast<std::size_t>(candidates.front())];
    std::vector<double> weights;
    double total = 0.0;
    for (int c : candidates) {
      weights.push_back(std::exp(logits[static_cast<std::size_t>(c)] - mx));
      total += weights.back();
    }
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (u < weights[i]) return candidates[i];
      u -= weights[i];
    }
    return candidates.back();
  }

  std::size_t vocab_size() const { return output_.cols(); }

 private:
  Tensor init_weight_, init_bias_;
  GruParams cell_;
  Tensor combine_;
  Tensor output_, output_bias_;
};

}  // namespace ram
