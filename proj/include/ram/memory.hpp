// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Document memory: base self-attention, response-aware weight matrices G
// (token importance and pairwise importance, continuous or binary) and the
// G-refined memory.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ram/encoders.hpp"
#include "ram/tensor.hpp"

namespace ram {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Importance { kToken, kPairwise };  // RTI, RPI
enum class WeightSource { kTeacher, kStudent, kUnit };
enum class BinarizeMode { kTrain, kPredict };

struct Variant {
  Importance importance = Importance::kToken;
  bool binary = false;

  bool operator==(const Variant&) const = default;

  std::string name() const {
    return std::string(importance == Importance::kToken ? "rti" : "rpi") +
           (binary ? "-binary" : "-cont");
  }
};

struct Memory {
  Tensor M;  // |D| x k
  Tensor A;  // |D| x |D| self-attention, before any weighting
  Tensor weighted_attention;  // G (.) A; equals A for the base memory
  std::vector<bool> mask;
};

struct WeightMatrix {
  Tensor G;
  Variant variant;
  WeightSource source = WeightSource::kTeacher;
  std::optional<Tensor> beta;  // 1 x |D|, token importance
  std::optional<Tensor> B;     // |D| x |D|, pairwise importance
};

namespace detail {

inline Matrix pair_mask(const std::vector<bool>& mask) {
  Matrix m(mask.size(), mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    for (std::size_t j = 0; j < mask.size(); ++j) m(i, j) = mask[i] && mask[j] ? 1.0 : 0.0;
  return m;
}

inline Matrix row_mask(const std::vector<bool>& mask) {
  Matrix m(1, mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) m(0, i) = mask[i] ? 1.0 : 0.0;
  return m;
}

/// 1 x n row lifted to n x n with every row equal to it.
inline Tensor lift_columns(const Tensor& row_vector) {
  return matmul(constant(Matrix(row_vector.cols(), 1, 1.0)), row_vector);
}

}  // namespace detail

inline Tensor base_attention(const ContextAwareDoc& D) {
  return masked_row_softmax(matmul_nt(D.rows, D.rows), D.mask, D.mask);
}

/// M = A D with A = row-softmax(D D^T) over valid positions.
inline Memory self_attention(const ContextAwareDoc& D) {
  Tensor A = base_attention(D);
  return {matmul(A, D.rows), A, A, D.mask};
}

inline void require_width(const ContextAwareDoc& D, const EncodedSequence& resp, const char* op) {
  if (D.rows.cols() != resp.reps.cols()) {
    throw DimensionError(std::string(op) + ": document width " + std::to_string(D.rows.cols()) +
                         " vs response width " + std::to_string(resp.reps.cols()));
  }
}

/// beta_i = d_i . r_last, G = 1 beta^T.
inline WeightMatrix rti_weights(const ContextAwareDoc& D, const EncodedSequence& resp) {
  require_width(D, resp, "rti_weights");
  Tensor beta = mul_const(matmul_nt(resp.final_state, D.rows), detail::row_mask(D.mask));
  return {mul_const(detail::lift_columns(beta), detail::pair_mask(D.mask)),
          {Importance::kToken, false}, WeightSource::kTeacher, beta, std::nullopt};
}

/// N = D R^T (PAD response columns zero), B = N N^T, G = B.
inline WeightMatrix rpi_weights(const ContextAwareDoc& D, const EncodedSequence& resp) {
  require_width(D, resp, "rpi_weights");
  Matrix col_mask(D.rows.rows(), resp.reps.rows());
  for (std::size_t i = 0; i < col_mask.rows(); ++i)
    for (std::size_t j = 0; j < col_mask.cols(); ++j)
      col_mask(i, j) = D.mask[i] && resp.mask[j] ? 1.0 : 0.0;
  Tensor N = mul_const(matmul_nt(D.rows, resp.reps), col_mask);
  Tensor B = matmul_nt(N, N);
  return {B, {Importance::kPairwise, false}, WeightSource::kTeacher, std::nullopt, B};
}

/// Relaxed Bernoulli sample with p = sigmoid(x):
/// sigmoid((log p - log(1-p) + log u - log(1-u)) / tau). Since
/// log p - log(1-p) == x, the logit is used directly.
inline Tensor gumbel_sigmoid(const Tensor& x, const Matrix& logistic_noise, double tau) {
  return sigmoid(scale(add(x, constant(logistic_noise)), 1.0 / tau));
}

inline double logistic_noise(Rng& rng) {
  const double u = uniform01(rng);
  return std::log(u) - std::log1p(-u);
}

inline void check_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("Gumbel-Softmax temperature must be positive, got " + std::to_string(tau));
}

/// Binary token importance. Training: relaxed sample, differentiable in beta.
/// Prediction: g_i ~ Bernoulli(sigmoid(beta_i)).
inline WeightMatrix rti_binarize(const Tensor& beta, const std::vector<bool>& mask,
                                 BinarizeMode mode, double tau, Rng& rng) {
  check_tau(tau);
  const std::size_t n = beta.cols();
  Tensor g;
  if (mode == BinarizeMode::kTrain) {
    Matrix noise(1, n);
    for (auto& v : noise.data()) v = logistic_noise(rng);
    g = gumbel_sigmoid(beta, noise, tau);
  } else {
    Matrix draws(1, n);
    for (std::size_t i = 0; i < n; ++i)
      draws(0, i) = uniform01(rng) < stable_sigmoid(beta.value()(0, i)) ? 1.0 : 0.0;
    g = constant(std::move(draws));
  }
  g = mul_const(g, detail::row_mask(mask));
  return {mul_const(detail::lift_columns(g), detail::pair_mask(mask)),
          {Importance::kToken, true}, WeightSource::kTeacher, beta, std::nullopt};
}

/// Elementwise version for pairwise importance; noise/draws are taken on the
/// upper triangle and mirrored so G stays symmetric.
inline WeightMatrix rpi_binarize(const Tensor& B, const std::vector<bool>& mask,
                                 BinarizeMode mode, double tau, Rng& rng) {
  check_tau(tau);
  const std::size_t n = B.rows();
  if (B.cols() != n) throw DimensionError("rpi_binarize: B must be square");
  Tensor g;
  if (mode == BinarizeMode::kTrain) {
    Matrix noise(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) noise(i, j) = noise(j, i) = logistic_noise(rng);
    g = gumbel_sigmoid(B, noise, tau);
  } else {
    Matrix draws(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        draws(i, j) = draws(j, i) = uniform01(rng) < stable_sigmoid(B.value()(i, j)) ? 1.0 : 0.0;
    g = constant(std::move(draws));
  }
  return {mul_const(g, detail::pair_mask(mask)), {Importance::kPairwise, true},
          WeightSource::kTeacher, std::nullopt, B};
}

/// M~ = (G (.) A) D, with A the base self-attention. No renormalization.
inline Memory refine_memory(const ContextAwareDoc& D, const WeightMatrix& W) {
  const std::size_t n = D.rows.rows();
  if (W.G.rows() != n || W.G.cols() != n) {
    throw DimensionError("refine_memory: G " + W.G.value().shape_string() + " for document of " +
                         std::to_string(n) + " rows");
  }
  Tensor A = base_attention(D);
  Tensor weighted = mul(W.G, A);
  return {matmul(weighted, D.rows), A, weighted, D.mask};
}

/// All-ones weighting; refine_memory with it reproduces self_attention.
inline WeightMatrix unit_weights(const std::vector<bool>& mask) {
  return {constant(detail::pair_mask(mask)), {}, WeightSource::kUnit, std::nullopt, std::nullopt};
}

/// Builds G from a token- or pair-importance estimate, binarizing when the
/// variant asks for it. Shared by teacher and student so both assemble G the
/// same way.
inline WeightMatrix assemble_weights(const Variant& variant, const Tensor& importance,
                                     const std::vector<bool>& mask, WeightSource source,
                                     bool train, double tau, Rng* rng) {
  WeightMatrix w;
  const BinarizeMode mode = train ? BinarizeMode::kTrain : BinarizeMode::kPredict;
  if (variant.importance == Importance::kToken) {
    if (importance.rows() != 1 || importance.cols() != mask.size()) {
      throw DimensionError("assemble_weights: token importance must be 1 x |D|");
    }
    if (variant.binary) {
      if (!rng) throw std::logic_error("assemble_weights: binary variant needs an RNG");
      w = rti_binarize(importance, mask, mode, tau, *rng);
    } else {
      w = {mul_const(detail::lift_columns(importance), detail::pair_mask(mask)), variant,
           source, importance, std::nullopt};
    }
  } else {
    if (importance.rows() != mask.size() || importance.cols() != mask.size()) {
      throw DimensionError("assemble_weights: pairwise importance must be |D| x |D|");
    }
    if (variant.binary) {
      if (!rng) throw std::logic_error("assemble_weights: binary variant needs an RNG");
      w = rpi_binarize(importance, mask, mode, tau, *rng);
    } else {
      w = {mul_const(importance, detail::pair_mask(mask)), variant, source, std::nullopt, importance};
    }
  }
  w.source = source;
  return w;
}

}  // namespace ram
