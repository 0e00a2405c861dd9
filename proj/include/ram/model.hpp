// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// The full conversation model: shared encoders and decoder (phi), the
// response-aware teacher (theta_t) and the response-anticipating student
// (theta_s), all registered in one ParamStore.

#pragma once

#include <string>
#include <vector>

#include "ram/decoder.hpp"
#include "ram/encoders.hpp"
#include "ram/memory.hpp"
#include "ram/param_store.hpp"
#include "ram/student.hpp"
#include "ram/text.hpp"

namespace ram {

struct ModelConfig {
  std::size_t vocab_size = 30000;
  std::size_t embed_dim = 300;
  std::size_t hidden = 512;
  std::size_t width = 512;  // k, shared by every encoder after projection
  double dropout = 0.4;
  Variant variant;
  double tau = 1.0;
  std::uint64_t init_seed = 1;

  void validate() const {
    if (vocab_size <= kReservedTokens) throw ConfigError("vocab_size must exceed the reserved ids");
    if (embed_dim == 0 || hidden == 0 || width == 0) throw ConfigError("model dimensions must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  }
};

struct EncodedInputs {
  EncodedSequence doc;
  EncodedSequence ctx;
  ContextAwareDoc D;
};

struct StudentLoss {
  Tensor nll;
  Tensor mse;
  Tensor total;  // nll + lambda * mse
};

class Model {
 public:
  explicit Model(const ModelConfig& config) : config_(config) {
    config.validate();
    Rng rng(config.init_seed);
    const auto& c = config;
    embedding_ = Embedding(store_, "embedding", c.vocab_size, c.embed_dim, rng);
    doc_encoder_ = BiLstmEncoder(store_, "doc_encoder", ParamTag::kBase, c.embed_dim, c.hidden, c.width, c.dropout, rng);
    ctx_encoder_ = BiLstmEncoder(store_, "ctx_encoder", ParamTag::kBase, c.embed_dim, c.hidden, c.width, c.dropout, rng);
    cross_ = ContextCrossAttention(store_, "cross_attention", c.width, rng);
    decoder_ = Decoder(store_, "decoder", c.embed_dim, c.width, c.vocab_size, rng);
    resp_encoder_ = BiLstmEncoder(store_, "resp_encoder", ParamTag::kTeacher, c.embed_dim, c.hidden, c.width, c.dropout, rng);
    student_ = Student(store_, "student", c.variant.importance, c.width, rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Embedding& embedding() const { return embedding_; }
  Embedding& embedding() { return embedding_; }
  const Decoder& decoder() const { return decoder_; }
  const Student& student() const { return student_; }

  EncodedSequence encode(const TokenSeq& seq, const BiLstmEncoder& enc, const ForwardContext& ctx) const {
    if (seq.mask.size() != seq.ids.size()) throw DimensionError("encode: mask/ids length differ");
    return enc.encode(embedding_.embed(seq.ids), seq.mask, ctx);
  }

  EncodedInputs encode_inputs(const SampleView& s, const ForwardContext& ctx) const {
    EncodedInputs in;
    in.doc = encode(s.document, doc_encoder_, ctx);
    in.ctx = encode(s.context, ctx_encoder_, ctx);
    in.D = cross_.apply(in.doc, in.ctx).doc;
    return in;
  }

  CrossAttentionResult cross_attention(const EncodedSequence& doc, const EncodedSequence& ctx) const {
    return cross_.apply(doc, ctx);
  }

  EncodedSequence encode_response(const SampleView& s, const ForwardContext& ctx) const {
    return encode(s.response, resp_encoder_, ctx);
  }

  /// Teacher's continuous importance: beta (1 x |D|) or B (|D| x |D|).
  Tensor teacher_importance(const EncodedInputs& in, const EncodedSequence& resp) const {
    return config_.variant.importance == Importance::kToken ? *rti_weights(in.D, resp).beta
                                                           : *rpi_weights(in.D, resp).B;
  }

  Tensor student_importance(const EncodedInputs& in) const { return student_.estimate(in.D, in.ctx); }

  WeightMatrix teacher_weights(const EncodedInputs& in, const SampleView& s, const ForwardContext& ctx) const {
    if (ctx.unit_weights) return unit_weights(in.D.mask);
    Tensor importance = teacher_importance(in, encode_response(s, ctx));
    return assemble_weights(config_.variant, importance, in.D.mask, WeightSource::kTeacher, ctx.train,
                            config_.tau, ctx.rng);
  }

  WeightMatrix student_weights(const EncodedInputs& in, const ForwardContext& ctx) const {
    if (ctx.unit_weights) return unit_weights(in.D.mask);
    return Student::student_weight_matrix(student_importance(in), config_.variant, config_.variant,
                                          in.D.mask, ctx.train, config_.tau, ctx.rng);
  }

  WeightMatrix weights(const EncodedInputs& in, const SampleView& s, WeightSource source,
                       const ForwardContext& ctx) const {
    switch (source) {
      case WeightSource::kTeacher: return teacher_weights(in, s, ctx);
      case WeightSource::kStudent: return student_weights(in, ctx);
      case WeightSource::kUnit: return unit_weights(in.D.mask);
    }
    throw std::logic_error("unknown weight source");
  }

  Memory memory(const EncodedInputs& in, const WeightMatrix& w) const { return refine_memory(in.D, w); }

  Tensor response_nll(const EncodedInputs& in, const Memory& m, const SampleView& s) const {
    return decoder_.nll(in.ctx, m, s.response.valid_ids(), embedding_);
  }

  /// Base model: memory from plain self-attention.
  Tensor base_loss(const SampleView& s, const ForwardContext& ctx) const {
    EncodedInputs in = encode_inputs(s, ctx);
    return response_nll(in, self_attention(in.D), s);
  }

  /// Response NLL with the teacher's response-aware memory.
  Tensor teacher_loss(const SampleView& s, const ForwardContext& ctx) const {
    EncodedInputs in = encode_inputs(s, ctx);
    return response_nll(in, memory(in, teacher_weights(in, s, ctx)), s);
  }

  /// Distillation target: the teacher's continuous importance, detached.
  Tensor distillation_target(const EncodedInputs& in, const SampleView& s) const {
    ForwardContext quiet;
    return detach(teacher_importance(in, encode_response(s, quiet)));
  }

  Matrix importance_mask(const std::vector<bool>& mask) const {
    return config_.variant.importance == Importance::kToken ? detail::row_mask(mask) : detail::pair_mask(mask);
  }

  /// NLL through the student's memory plus lambda * MSE(target, estimate).
  StudentLoss student_loss(const SampleView& s, const ForwardContext& ctx, double lambda) const {
    EncodedInputs in = encode_inputs(s, ctx);
    Tensor target = distillation_target(in, s);
    Tensor estimate = student_importance(in);
    WeightMatrix w = ctx.unit_weights
                         ? unit_weights(in.D.mask)
                         : Student::student_weight_matrix(estimate, config_.variant, config_.variant,
                                                          in.D.mask, ctx.train, config_.tau, ctx.rng);
    Tensor nll = response_nll(in, memory(in, w), s);
    Tensor err = mse(estimate, target, importance_mask(in.D.mask));
    return {nll, err, add(nll, scale(err, lambda))};
  }

  std::vector<int> generate(const SampleView& s, WeightSource source, std::size_t k_top,
                            std::size_t max_len, Rng& rng) const {
    ForwardContext ctx{false, &rng, false};
    EncodedInputs in = encode_inputs(s, ctx);
    Memory m = memory(in, weights(in, s, source, ctx));
    return decoder_.generate(in.ctx, m, embedding_, k_top, max_len, rng);
  }

 private:
  ModelConfig config_;
  ParamStore store_;
  Embedding embedding_;
  BiLstmEncoder doc_encoder_;
  BiLstmEncoder ctx_encoder_;
  ContextCrossAttention cross_;
  Decoder decoder_;
  BiLstmEncoder resp_encoder_;
  Student student_;
};

}  // namespace ram
