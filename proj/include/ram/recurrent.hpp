// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// LSTM and GRU cells built from tensor ops. Inputs and states are 1 x d rows.

#pragma once

#include <string>

#include "ram/param_store.hpp"
#include "ram/tensor.hpp"

namespace ram {

struct LstmParams {
  Tensor input_weight;   // d x 4h, gate order i, f, g, o
  Tensor hidden_weight;  // h x 4h
  Tensor bias;           // 1 x 4h

  std::size_t input_size() const { return input_weight.rows(); }
  std::size_t hidden_size() const { return hidden_weight.rows(); }

  static LstmParams create(ParamStore& store, const std::string& prefix, ParamTag tag,
                           std::size_t input, std::size_t hidden, Rng& rng) {
    return LstmParams{store.add_weight(prefix + ".w_input", tag, input, 4 * hidden, rng),
                      store.add_weight(prefix + ".w_hidden", tag, hidden, 4 * hidden, rng),
                      store.add_bias(prefix + ".bias", tag, 4 * hidden)};
  }
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden) {
    return {constant(Matrix(1, hidden)), constant(Matrix(1, hidden))};
  }
};

inline LstmState lstm_step(const LstmParams& p, const Tensor& x, const LstmState& state) {
  const std::size_t h = p.hidden_size();
  if (x.cols() != p.input_size() || state.h.cols() != h || state.c.cols() != h) {
    throw DimensionError("lstm_step: input " + x.value().shape_string() + " / state " +
                         state.h.value().shape_string() + " do not fit cell [" +
                         std::to_string(p.input_size()) + "->" + std::to_string(h) + "]");
  }
  Tensor gates = add(add(matmul(x, p.input_weight), matmul(state.h, p.hidden_weight)), p.bias);
  Tensor i = sigmoid(slice_cols(gates, 0, h));
  Tensor f = sigmoid(slice_cols(gates, h, h));
  Tensor g = tanh(slice_cols(gates, 2 * h, h));
  Tensor o = sigmoid(slice_cols(gates, 3 * h, h));
  Tensor c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_candidate, u_candidate, b_candidate;

  std::size_t input_size() const { return w_update.rows(); }
  std::size_t hidden_size() const { return u_update.rows(); }

  static GruParams create(ParamStore& store, const std::string& prefix, ParamTag tag,
                          std::size_t input, std::size_t hidden, Rng& rng) {
    GruParams p;
    p.w_update = store.add_weight(prefix + ".w_update", tag, input, hidden, rng);
    p.u_update = store.add_weight(prefix + ".u_update", tag, hidden, hidden, rng);
    p.b_update = store.add_bias(prefix + ".b_update", tag, hidden);
    p.w_reset = store.add_weight(prefix + ".w_reset", tag, input, hidden, rng);
    p.u_reset = store.add_weight(prefix + ".u_reset", tag, hidden, hidden, rng);
    p.b_reset = store.add_bias(prefix + ".b_reset", tag, hidden);
    p.w_candidate = store.add_weight(prefix + ".w_candidate", tag, input, hidden, rng);
    p.u_candidate = store.add_weight(prefix + ".u_candidate", tag, hidden, hidden, rng);
    p.b_candidate = store.add_bias(prefix + ".b_candidate", tag, hidden);
    return p;
  }
};

/// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
/// n = tanh(Wn x + Un (r * h) + bn), h' = (1 - z) * n + z * h.
inline Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h) {
  if (x.cols() != p.input_size() || h.cols() != p.hidden_size()) {
    throw DimensionError("gru_step: input " + x.value().shape_string() + " / state " +
                         h.value().shape_string() + " do not fit cell [" +
                         std::to_string(p.input_size()) + "->" +
                         std::to_string(p.hidden_size()) + "]");
  }
  Tensor z = sigmoid(add(add(matmul(x, p.w_update), matmul(h, p.u_update)), p.b_update));
  Tensor r = sigmoid(add(add(matmul(x, p.w_reset), matmul(h, p.u_reset)), p.b_reset));
  Tensor n = tanh(add(add(matmul(x, p.w_candidate), matmul(mul(r, h), p.u_candidate)),
                      p.b_candidate));
  return add(mul(affine(z, -1.0, 1.0), n), mul(z, h));
}

}  // namespace ram
