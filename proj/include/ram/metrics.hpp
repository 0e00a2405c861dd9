// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Automatic evaluation: grounding precision/recall/F1 (with and without the
// reference), Dist-n, Ent-n, corpus BLEU-4, and the accumulated-attention
// analysis with embedding similarities (Emb-M / Emb-B).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ram/tensor.hpp"
#include "ram/text.hpp"

namespace ram {

using Tokens = std::vector<std::string>;

struct EvalRecord {
  Tokens document;
  Tokens context;
  Tokens reference;
  Tokens generated;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace detail {

inline std::set<std::string> types(const Tokens& t) { return {t.begin(), t.end()}; }

inline std::set<std::string> minus_stop(const std::set<std::string>& s, const StopwordSet& stop) {
  std::set<std::string> out;
  for (const auto& t : s)
    if (!stop.contains(t)) out.insert(t);
  return out;
}

inline PRF overlap_prf(const std::set<std::string>& overlap_candidates, const EvalRecord& rec,
                       const StopwordSet& stop) {
  const auto ctx = types(rec.context);
  std::size_t overlap = 0;
  for (const auto& t : overlap_candidates)
    if (!ctx.count(t) && !stop.contains(t)) ++overlap;
  const auto gen = minus_stop(types(rec.generated), stop);
  const auto doc = minus_stop(types(rec.document), stop);
  PRF out;
  out.precision = gen.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(gen.size());
  out.recall = doc.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(doc.size());
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

}  // namespace detail

/// Token-type overlap O = (D & R^) \ X \ S; P = |O| / |R^ \ S|,
/// R = |O| / |D \ S|.
inline PRF grounding(const EvalRecord& rec, const StopwordSet& stop) {
  const auto doc = detail::types(rec.document);
  std::set<std::string> both;
  for (const auto& t : detail::types(rec.generated))
    if (doc.count(t)) both.insert(t);
  return detail::overlap_prf(both, rec, stop);
}

/// As grounding, with the overlap further intersected with the reference.
inline PRF grounding_gt(const EvalRecord& rec, const StopwordSet& stop) {
  const auto doc = detail::types(rec.document);
  const auto ref = detail::types(rec.reference);
  std::set<std::string> all3;
  for (const auto& t : detail::types(rec.generated))
    if (doc.count(t) && ref.count(t)) all3.insert(t);
  return detail::overlap_prf(all3, rec, stop);
}

inline std::map<Tokens, std::size_t> ngram_counts(const std::vector<Tokens>& corpus, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  for (const auto& sent : corpus)
    for (std::size_t i = 0; i + n <= sent.size(); ++i)
      ++counts[Tokens(sent.begin() + static_cast<std::ptrdiff_t>(i),
                      sent.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

/// Unique n-grams over total n-gram occurrences across the corpus.
inline double dist_n(const std::vector<Tokens>& corpus, std::size_t n) {
  if (n == 0) throw std::invalid_argument("dist_n: n must be >= 1");
  const auto counts = ngram_counts(corpus, n);
  std::size_t total = 0;
  for (const auto& [g, c] : counts) total += c;
  return total == 0 ? 0.0 : static_cast<double>(counts.size()) / static_cast<double>(total);
}

/// Entropy (nats) of the corpus n-gram count distribution.
inline double ent_n(const std::vector<Tokens>& corpus, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ent_n: n must be >= 1");
  const auto counts = ngram_counts(corpus, n);
  double total = 0.0;
  for (const auto& [g, c] : counts) total += static_cast<double>(c);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (const auto& [g, c] : counts) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

/// Corpus BLEU-4 against one reference per candidate. Clipped n-gram
/// matches and totals are pooled over the corpus. For n >= 2, an order with
/// zero matches is smoothed to (0 + 1) / (total + 1).
inline double bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu4: candidate/reference counts differ");
  }
  std::array<double, 4> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<double>(candidates[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto c = ngram_counts({candidates[s]}, n);
      const auto r = ngram_counts({references[s]}, n);
      for (const auto& [g, cnt] : c) {
        totals[n - 1] += static_cast<double>(cnt);
        auto it = r.find(g);
        if (it != r.end()) matches[n - 1] += static_cast<double>(std::min(cnt, it->second));
      }
    }
  }
  if (cand_len == 0.0 || matches[0] == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = (n > 0 && matches[n] == 0.0) ? 1.0 / (totals[n] + 1.0) : matches[n] / totals[n];
    log_sum += std::log(p);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / 4.0);
}

struct MetricReport {
  std::optional<double> nist;    // external tooling
  std::optional<double> meteor;  // external tooling
  double bleu4 = 0.0;
  PRF grounding;
  PRF grounding_gt;
  double ent4 = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double mean_length = 0.0;
  std::size_t records = 0;
};

/// Precision and recall are averaged over records; F1 is the harmonic mean
/// of the averaged precision and recall.
inline MetricReport evaluate(const std::vector<EvalRecord>& records, const StopwordSet& stop) {
  MetricReport r;
  r.records = records.size();
  if (records.empty()) return r;
  std::vector<Tokens> gen, ref;
  double len = 0.0;
  for (const auto& rec : records) {
    const PRF g = grounding(rec, stop);
    const PRF gt = grounding_gt(rec, stop);
    r.grounding.precision += g.precision;
    r.grounding.recall += g.recall;
    r.grounding_gt.precision += gt.precision;
    r.grounding_gt.recall += gt.recall;
    gen.push_back(rec.generated);
    ref.push_back(rec.reference);
    len += static_cast<double>(rec.generated.size());
  }
  const double n = static_cast<double>(records.size());
  for (PRF* p : {&r.grounding, &r.grounding_gt}) {
    p->precision /= n;
    p->recall /= n;
    p->f1 = harmonic_mean(p->precision, p->recall);
  }
  r.bleu4 = bleu4(gen, ref);
  r.ent4 = ent_n(gen, 4);
  r.dist1 = dist_n(gen, 1);
  r.dist2 = dist_n(gen, 2);
  r.mean_length = len / n;
  return r;
}

// ---------------------------------------------------------------------------
// Attention analysis

/// Column sums of A over valid rows: how much attention each document token
/// receives across all attention distributions.
inline std::vector<double> accumulated_attention(const Matrix& A, const std::vector<bool>& row_valid = {}) {
  std::vector<double> w(A.cols(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    if (!row_valid.empty() && !row_valid[i]) continue;
    for (std::size_t j = 0; j < A.cols(); ++j) w[j] += A(i, j);
  }
  return w;
}

using EmbeddingLookup = std::function<const std::vector<double>*(const std::string&)>;

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na > 0.0 && nb > 0.0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
}

enum class EmbSimilarity { kMax, kBag };  // Emb-M, Emb-B

/// Emb-B: cosine of mean embeddings. Emb-M: average of the two greedy
/// directions, each the mean over one set of its best cosine in the other.
/// Tokens without an embedding are skipped; 0 if either side ends empty.
inline double emb_similarity(const Tokens& set_a, const Tokens& set_b, const EmbeddingLookup& lookup,
                             EmbSimilarity kind) {
  std::vector<const std::vector<double>*> a, b;
  for (const auto& t : set_a)
    if (auto* v = lookup(t)) a.push_back(v);
  for (const auto& t : set_b)
    if (auto* v = lookup(t)) b.push_back(v);
  if (a.empty() || b.empty()) return 0.0;
  if (kind == EmbSimilarity::kBag) {
    auto mean_of = [](const std::vector<const std::vector<double>*>& xs) {
      std::vector<double> m(xs.front()->size(), 0.0);
      for (auto* x : xs)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += (*x)[i];
      for (auto& v : m) v /= static_cast<double>(xs.size());
      return m;
    };
    return cosine(mean_of(a), mean_of(b));
  }
  auto greedy = [](const auto& from, const auto& to) {
    double total = 0.0;
    for (auto* x : from) {
      double best = -std::numeric_limits<double>::infinity();
      for (auto* y : to) best = std::max(best, cosine(*x, *y));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (greedy(a, b) + greedy(b, a));
}

/// Up to K distinct token types, taken in decreasing score order (ties by
/// earlier position).
inline Tokens top_k_types(const Tokens& tokens, const std::vector<double>& scores, std::size_t K) {
  std::vector<std::size_t> idx(tokens.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  Tokens out;
  std::set<std::string> seen;
  for (std::size_t i : idx) {
    if (out.size() >= K) break;
    if (seen.insert(tokens[i]).second) out.push_back(tokens[i]);
  }
  return out;
}

struct AttentionSample {
  Tokens document;                 // valid document tokens
  Tokens reference;                // gold response tokens
  std::vector<double> accumulated;  // one weight per document token
};

struct OverlapRow {
  std::size_t K = 0;
  double emb_m = 0.0;
  double emb_b = 0.0;
};

/// Per sample, compares the top-K document tokens by accumulated attention
/// with the top-K by embedding similarity to the gold response (cosine of a
/// token's embedding with the mean response embedding); averages Emb-M and
/// Emb-B over samples.
inline OverlapRow topk_token_overlap_analysis(const std::vector<AttentionSample>& samples,
                                              const EmbeddingLookup& lookup, std::size_t K) {
  OverlapRow row{K, 0.0, 0.0};
  if (samples.empty()) return row;
  for (const auto& s : samples) {
    std::vector<double> resp_mean;
    std::size_t hits = 0;
    for (const auto& t : s.reference) {
      const auto* v = lookup(t);
      if (!v) continue;
      if (resp_mean.empty()) resp_mean.assign(v->size(), 0.0);
      for (std::size_t i = 0; i < v->size(); ++i) resp_mean[i] += (*v)[i];
      ++hits;
    }
    std::vector<double> sim(s.document.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < s.document.size(); ++i) {
      const auto* v = lookup(s.document[i]);
      if (v && hits) sim[i] = cosine(*v, resp_mean);
    }
    const Tokens by_response = top_k_types(s.document, sim, K);
    const Tokens by_attention = top_k_types(s.document, s.accumulated, K);
    row.emb_m += emb_similarity(by_attention, by_response, lookup, EmbSimilarity::kMax);
    row.emb_b += emb_similarity(by_attention, by_response, lookup, EmbSimilarity::kBag);
  }
  row.emb_m /= static_cast<double>(samples.size());
  row.emb_b /= static_cast<double>(samples.size());
  return row;
}

/// One-hot embeddings over a vocabulary: cosine is 1 for identical tokens
/// and 0 otherwise. Used when no pretrained vectors are supplied.
class OneHotEmbeddings {
 public:
  explicit OneHotEmbeddings(const Vocabulary& vocab) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      std::vector<double> v(vocab.size(), 0.0);
      v[i] = 1.0;
      table_[vocab.token(static_cast<int>(i))] = std::move(v);
    }
  }
  EmbeddingLookup lookup() const {
    return [this](const std::string& t) -> const std::vector<double>* {
      auto it = table_.find(t);
      return it == table_.end() ? nullptr : &it->second;
    };
  }

 private:
  EmbeddingTable table_;
};

inline EmbeddingLookup table_lookup(const EmbeddingTable& table) {
  return [&table](const std::string& t) -> const std::vector<double>* {
    auto it = table.find(t);
    return it == table.end() ? nullptr : &it->second;
  };
}

}  // namespace ram
