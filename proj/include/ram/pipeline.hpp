// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Glue between the model, generation files, metric reports and the
// attention analysis dump.

#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ram/memory.hpp"
#include "ram/metrics.hpp"
#include "ram/model.hpp"
#include "ram/text.hpp"

namespace ram {

struct Generation {
  std::string context;
  std::string document;
  std::string response;
  std::string generated;
};

inline nlohmann::ordered_json to_json(const Generation& g) {
  return {{"context", g.context}, {"document", g.document}, {"response", g.response}, {"generated", g.generated}};
}

/// Generates one response per sample with a single RNG stream seeded by
/// `seed`, so the output is reproducible.
inline std::vector<Generation> generate_all(const Model& model, const Vocabulary& vocab,
                                            std::span<const Sample> samples, WeightSource source,
                                            std::size_t k_top, std::size_t max_len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Generation> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto ids = model.generate(SampleView::from(s), source, k_top, max_len, rng);
    out.push_back({detokenize(vocab.decode(s.context)), detokenize(vocab.decode(s.document)),
                   detokenize(vocab.decode(s.response)), detokenize(vocab.decode(ids))});
  }
  return out;
}

inline void write_generations(const std::vector<Generation>& gens, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& g : gens) out << to_json(g).dump() << '\n';
}

/// Reads generation JSON-lines; every line must carry all four fields.
inline std::vector<Generation> read_generations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Generation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("context").get<std::string>(), j.at("document").get<std::string>(),
                     j.at("response").get<std::string>(), j.at("generated").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline EvalRecord to_record(const Generation& g) {
  return {tokenize(g.document), tokenize(g.context), tokenize(g.response), tokenize(g.generated)};
}

inline std::vector<EvalRecord> to_records(const std::vector<Generation>& gens) {
  std::vector<EvalRecord> out;
  out.reserve(gens.size());
  for (const auto& g : gens) out.push_back(to_record(g));
  return out;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"records", r.records},
          {"nist", opt(r.nist)},
          {"bleu4", r.bleu4},
          {"meteor", opt(r.meteor)},
          {"grounding", {{"precision", r.grounding.precision}, {"recall", r.grounding.recall}, {"f1", r.grounding.f1}}},
          {"grounding_gt",
           {{"precision", r.grounding_gt.precision}, {"recall", r.grounding_gt.recall}, {"f1", r.grounding_gt.f1}}},
          {"ent4", r.ent4},
          {"dist1", r.dist1},
          {"dist2", r.dist2},
          {"mean_length", r.mean_length},
          {"external", "NIST and METEOR are not computed here; use external scorers"}};
}

/// Plain-text table: Appropriateness | Grounding | Informativeness | Len.
inline std::string metric_table(const MetricReport& r, const std::string& label = "model") {
  std::ostringstream os;
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v << "%";
    return s.str();
  };
  auto num = [](double v, int prec) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
  };
  const std::vector<std::string> head{"", "NIST", "BLEU", "METEOR", "P", "R", "F1", "P_GT", "R_GT", "F1_GT",
                                      "Ent-4", "Dist-1", "Dist-2", "Len"};
  const std::vector<std::string> vals{label, "n/a", pct(r.bleu4), "n/a", pct(r.grounding.precision),
                                      pct(r.grounding.recall), pct(r.grounding.f1),
                                      pct(r.grounding_gt.precision), pct(r.grounding_gt.recall),
                                      pct(r.grounding_gt.f1), num(r.ent4, 3), num(r.dist1, 3),
                                      num(r.dist2, 3), num(r.mean_length, 1)};
  // Group header spanning 3 (Appropriateness), 6 (Grounding), 3
  // (Informativeness) and 1 (Len) cells of width 10.
  auto group = [](const std::string& name, std::size_t cells) {
    std::string g = " " + name;
    g.resize(cells * 10 - 1, ' ');
    return g + "|";
  };
  os << "|" << std::string(10, ' ') << "|" << group("Appropriateness", 3) << group("Grounding", 6)
     << group("Informativeness", 3) << group("", 1) << '\n';
  for (const auto* row : {&head, &vals}) {
    os << "|";
    for (std::size_t i = 0; i < row->size(); ++i) os << ' ' << std::setw(i == 0 ? 8 : 7) << (*row)[i] << " |";
    os << '\n';
  }
  return os.str();
}

/// Per-sample memory statistics used by the attention analysis.
struct AttentionTrace {
  Matrix A;         // base self-attention
  Matrix weighted;  // G (.) A
  Matrix G;
  std::optional<Matrix> beta;
  std::optional<Matrix> B;
  std::vector<bool> mask;
};

inline AttentionTrace trace_attention(const Model& model, const Sample& s, WeightSource source, Rng& rng) {
  ForwardContext ctx{false, &rng, false};
  const auto view = SampleView::from(s);
  EncodedInputs in = model.encode_inputs(view, ctx);
  WeightMatrix w = model.weights(in, view, source, ctx);
  Memory m = model.memory(in, w);
  AttentionTrace t{m.A.value(), m.weighted_attention.value(), w.G.value(), std::nullopt, std::nullopt, m.mask};
  if (w.beta) t.beta = w.beta->value();
  if (w.B) t.B = w.B->value();
  return t;
}

/// Accumulated attention per sample; `weighted` selects G (.) A over A.
inline std::vector<AttentionSample> collect_attention(const Model& model, const Vocabulary& vocab,
                                                      std::span<const Sample> samples, WeightSource source,
                                                      bool weighted, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AttentionSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const AttentionTrace t = trace_attention(model, s, source, rng);
    AttentionSample a;
    for (int id : s.document) a.document.push_back(vocab.token(id));
    a.reference = vocab.decode(s.response);
    a.accumulated = accumulated_attention(weighted ? t.weighted : t.A, t.mask);
    out.push_back(std::move(a));
  }
  return out;
}

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const AttentionTrace& t, const std::vector<std::string>& document) {
  nlohmann::ordered_json j;
  j["document"] = document;
  j["A"] = matrix_json(t.A);
  j["G"] = matrix_json(t.G);
  j["accumulated"] = accumulated_attention(t.weighted, t.mask);
  if (t.beta) j["beta"] = matrix_json(*t.beta)[0];
  if (t.B) j["B"] = matrix_json(*t.B);
  return j;
}

}  // namespace ram
