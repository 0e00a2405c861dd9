// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion, vocabulary, tokenization, batching and the synthetic
// keyword-grounded corpus.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ram/tensor.hpp"

namespace ram {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr std::size_t kReservedTokens = 4;

/// Lowercases ASCII, splits ASCII punctuation into single-character tokens,
/// then splits on whitespace. Non-ASCII bytes pass through unchanged.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (uc < 128 && std::isspace(uc)) {
      flush();
    } else if (uc < 128 && std::ispunct(uc)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(uc < 128 ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  flush();
  return tokens;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>"}) push(t);
  }

  /// Keeps the `max_size - 4` most frequent tokens (ties by token order).
  static Vocabulary from_counts(const std::unordered_map<std::string, std::size_t>& counts,
                                std::size_t max_size) {
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : sorted) {
      if (v.size() >= max_size) break;
      if (!v.contains(tok)) v.push(tok);
    }
    return v;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens)
      if (!v.contains(t)) v.push(t);
    return v;
  }

  /// One token per line, in id order, reserved tokens first.
  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    if (tokens.size() < kReservedTokens || tokens[0] != "<pad>" || tokens[3] != "<eos>") {
      throw DataError("vocabulary file " + path + " lacks reserved header");
    }
    Vocabulary v;
    for (std::size_t i = kReservedTokens; i < tokens.size(); ++i) v.push(tokens[i]);
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnkId : it->second;
  }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  /// Maps ids to surface tokens, dropping PAD/BOS/EOS.
  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int i : ids)
      if (i != kPadId && i != kBosId && i != kEosId) out.push_back(token(i));
    return out;
  }

 private:
  void push(const std::string& tok) {
    ids_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TruncationCaps {
  std::size_t document = 500;
  std::size_t context = 30;
  std::size_t response = 30;
};

/// One (document, context, response) triple of token ids. The response is
/// always EOS-terminated.
struct Sample {
  std::vector<int> document;
  std::vector<int> context;
  std::vector<int> response;
};

inline Sample make_sample(std::vector<int> document, std::vector<int> context,
                          std::vector<int> response, const TruncationCaps& caps) {
  if (document.size() > caps.document) document.resize(caps.document);
  if (context.size() > caps.context) context.resize(caps.context);
  if (!response.empty() && response.back() == kEosId) response.pop_back();
  const std::size_t keep = caps.response == 0 ? 0 : caps.response - 1;
  if (response.size() > keep) response.resize(keep);
  response.push_back(kEosId);
  return Sample{std::move(document), std::move(context), std::move(response)};
}

struct CorpusRecord {
  std::vector<std::string> document;
  std::vector<std::string> context;
  std::vector<std::string> response;
};

struct CorpusLoad {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool parse_record(const std::string& line, CorpusRecord& rec, std::string& why) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    why = std::string("malformed JSON (") + e.what() + ")";
    return false;
  }
  if (!j.is_object()) {
    why = "record is not an object";
    return false;
  }
  for (const char* field : {"document", "context", "response"}) {
    if (!j.contains(field) || !j[field].is_string()) {
      why = std::string("missing string field '") + field + "'";
      return false;
    }
  }
  rec.document = tokenize(j["document"].get<std::string>());
  rec.context = tokenize(j["context"].get<std::string>());
  rec.response = tokenize(j["response"].get<std::string>());
  return true;
}

template <typename Fn>
void for_each_record(const std::string& path, std::vector<std::string>& warnings, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    CorpusRecord rec;
    std::string why;
    if (!parse_record(line, rec, why)) {
      warnings.push_back(path + ":" + std::to_string(lineno) + ": skipped, " + why);
      continue;
    }
    fn(rec, lineno);
  }
}

}  // namespace detail

/// Token frequencies over all fields of a JSON-lines corpus.
inline Vocabulary build_vocabulary(const std::string& path, std::size_t max_size,
                                   std::vector<std::string>* warnings = nullptr) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> local;
  detail::for_each_record(path, warnings ? *warnings : local, [&](const CorpusRecord& r, std::size_t) {
    for (const auto* field : {&r.document, &r.context, &r.response})
      for (const auto& t : *field) ++counts[t];
  });
  return Vocabulary::from_counts(counts, max_size);
}

/// Reads JSON-lines records with string fields document/context/response.
/// Bad lines are skipped with a warning naming the line; records whose
/// document or context tokenizes to nothing are skipped as well.
inline CorpusLoad load_corpus(const std::string& path, const Vocabulary& vocab,
                              const TruncationCaps& caps = {}) {
  CorpusLoad out;
  detail::for_each_record(path, out.warnings, [&](const CorpusRecord& r, std::size_t lineno) {
    if (r.document.empty() || r.context.empty()) {
      out.warnings.push_back(path + ":" + std::to_string(lineno) +
                             ": skipped, empty document or context");
      return;
    }
    out.samples.push_back(
        make_sample(vocab.encode(r.document), vocab.encode(r.context), vocab.encode(r.response), caps));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Stopwords

class StopwordSet {
 public:
  StopwordSet() = default;
  explicit StopwordSet(std::unordered_set<std::string> words) {
    for (const auto& w : words) words_.insert(lower(w));
  }

  /// Built-in English list (v1, 151 entries).
  static StopwordSet english() {
    static const char* const kWords[] = {
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any",
        "are", "as", "at", "be", "because", "been", "before", "being", "below", "between",
        "both", "but", "by", "can", "could", "did", "do", "does", "doing", "don", "down",
        "during", "each", "few", "for", "from", "further", "had", "has", "have", "having",
        "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
        "in", "into", "is", "it", "its", "itself", "just", "let", "ll", "me", "more", "most",
        "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
        "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "re", "s", "same",
        "she", "should", "so", "some", "such", "t", "than", "that", "the", "their", "theirs",
        "them", "themselves", "then", "there", "these", "they", "this", "those", "through",
        "to", "too", "under", "until", "up", "ve", "very", "was", "we", "were", "what", "when",
        "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
        "your", "yours", "yourself", "yourselves", "d", "m", "o", "y", "also", "get", "got",
        "like", "one", "really", "think", "us", "well", "yes", "oh", "many", "much"};
    StopwordSet s;
    for (const char* w : kWords) s.words_.insert(w);
    return s;
  }

  /// One token per line; blank lines ignored.
  static StopwordSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stopword file " + path);
    StopwordSet s;
    std::string line;
    while (std::getline(in, line)) {
      auto tok = tokenize(line);
      for (auto& t : tok) s.words_.insert(t);
    }
    return s;
  }

  bool contains(const std::string& token) const { return words_.count(token) != 0; }
  std::size_t size() const { return words_.size(); }

 private:
  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
  std::unordered_set<std::string> words_;
};

// ---------------------------------------------------------------------------
// Pretrained embeddings: "token v1 ... vN" per line.

using EmbeddingTable = std::unordered_map<std::string, std::vector<double>>;

inline EmbeddingTable load_embeddings(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path);
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.size() != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " values, found " + std::to_string(v.size()));
    }
    table[tok] = std::move(v);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Batching

/// A padded token row with its validity mask (valid positions form a prefix).
struct TokenSeq {
  std::vector<int> ids;
  std::vector<bool> mask;

  static TokenSeq from(const std::vector<int>& ids) {
    return TokenSeq{ids, std::vector<bool>(ids.size(), true)};
  }

  std::size_t width() const { return ids.size(); }
  std::size_t valid_length() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  }
  std::vector<int> valid_ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (mask[i]) out.push_back(ids[i]);
    return out;
  }
  TokenSeq padded_to(std::size_t width) const {
    TokenSeq out = *this;
    out.ids.resize(std::max(width, ids.size()), kPadId);
    out.mask.resize(std::max(width, ids.size()), false);
    return out;
  }
};

/// Model input for one example.
struct SampleView {
  TokenSeq document;
  TokenSeq context;
  TokenSeq response;

  static SampleView from(const Sample& s) {
    return {TokenSeq::from(s.document), TokenSeq::from(s.context), TokenSeq::from(s.response)};
  }
};

struct Batch {
  std::vector<SampleView> rows;
  std::size_t size() const { return rows.size(); }
};

inline Batch make_batch(std::span<const Sample> samples) {
  Batch b;
  std::size_t wd = 0, wc = 0, wr = 0;
  for (const auto& s : samples) {
    wd = std::max(wd, s.document.size());
    wc = std::max(wc, s.context.size());
    wr = std::max(wr, s.response.size());
  }
  for (const auto& s : samples) {
    auto v = SampleView::from(s);
    b.rows.push_back({v.document.padded_to(wd), v.context.padded_to(wc), v.response.padded_to(wr)});
  }
  return b;
}

/// Consecutive padded batches of at most `batch_size` samples.
inline std::vector<Batch> make_batches(std::span<const Sample> samples, std::size_t batch_size = 32) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<Batch> out;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    out.push_back(make_batch(samples.subspan(i, std::min(batch_size, samples.size() - i))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic keyword-grounded corpus
//
// Keywords are split into groups; each group has one cue token. A document
// holds the sample's keyword, one decoy keyword from each of `decoys` other
// groups, and filler tokens. The context is "what about <cue>" and the
// response is "i like <keyword> .". The document alone leaves several
// keyword candidates and the context alone only names a group, so the
// keyword is determined by the two jointly.

struct SyntheticSpec {
  std::size_t vocab_size = 64;
  std::size_t document_length = 24;
  std::size_t keyword_groups = 4;
  std::size_t keywords_per_group = 4;
  std::size_t decoys = 3;
  std::uint64_t seed = 7;
};

struct SyntheticSample {
  Sample sample;
  int keyword = 0;
  std::size_t keyword_position = 0;
};

class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(const SyntheticSpec& spec) : spec_(spec) {
    const std::vector<std::string> templates{"what", "about", "i", "like", "."};
    std::vector<std::string> tokens = templates;
    for (std::size_t g = 0; g < spec.keyword_groups; ++g) tokens.push_back("cue" + std::to_string(g));
    for (std::size_t k = 0; k < keyword_count(); ++k) tokens.push_back("kw" + std::to_string(k));
    const std::size_t used = kReservedTokens + tokens.size();
    if (spec.vocab_size <= used) throw std::invalid_argument("synthetic vocabulary too small");
    if (spec.decoys >= spec.keyword_groups) throw std::invalid_argument("too many decoys");
    if (spec.document_length < spec.decoys + 2) throw std::invalid_argument("document too short");
    for (std::size_t f = 0; used + f < spec.vocab_size; ++f) tokens.push_back("w" + std::to_string(f));
    vocab_ = Vocabulary::from_tokens(tokens);
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  const SyntheticSpec& spec() const { return spec_; }
  std::size_t keyword_count() const { return spec_.keyword_groups * spec_.keywords_per_group; }
  int keyword_id(std::size_t k) const { return vocab_.id("kw" + std::to_string(k)); }
  int cue_id(std::size_t g) const { return vocab_.id("cue" + std::to_string(g)); }
  std::size_t group_of(int keyword) const {
    return static_cast<std::size_t>(keyword - keyword_id(0)) / spec_.keywords_per_group;
  }
  bool is_keyword(int id) const {
    return id >= keyword_id(0) && id < keyword_id(0) + static_cast<int>(keyword_count());
  }
  int first_filler() const { return keyword_id(0) + static_cast<int>(keyword_count()); }
  std::size_t filler_count() const { return vocab_.size() - static_cast<std::size_t>(first_filler()); }

  /// Deterministic in (spec.seed, stream, n).
  std::vector<SyntheticSample> generate(std::size_t n, std::uint64_t stream = 0) const {
    Rng rng(spec_.seed * 0x9E3779B97F4A7C15ULL + stream);
    auto below = [&](std::size_t m) { return static_cast<std::size_t>(rng() % m); };
    std::vector<SyntheticSample> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t kw_index = below(keyword_count());
      const int kw = keyword_id(kw_index);
      const std::size_t group = kw_index / spec_.keywords_per_group;
      std::vector<std::size_t> others;
      for (std::size_t g = 0; g < spec_.keyword_groups; ++g)
        if (g != group) others.push_back(g);
      std::vector<int> doc;
      for (std::size_t d = 0; d < spec_.decoys; ++d) {
        const std::size_t pick = d + below(others.size() - d);
        std::swap(others[d], others[pick]);
        doc.push_back(keyword_id(others[d] * spec_.keywords_per_group + below(spec_.keywords_per_group)));
      }
      while (doc.size() + 1 < spec_.document_length)
        doc.push_back(first_filler() + static_cast<int>(below(filler_count())));
      // Fisher-Yates over the distractors, then plant the keyword.
      for (std::size_t i = doc.size(); i > 1; --i) std::swap(doc[i - 1], doc[below(i)]);
      const std::size_t pos = below(spec_.document_length);
      doc.insert(doc.begin() + static_cast<std::ptrdiff_t>(pos), kw);
      std::vector<int> ctx{vocab_.id("what"), vocab_.id("about"), cue_id(group)};
      std::vector<int> resp{vocab_.id("i"), vocab_.id("like"), kw, vocab_.id(".")};
      TruncationCaps caps{spec_.document_length, ctx.size(), resp.size() + 1};
      out.push_back({make_sample(std::move(doc), std::move(ctx), std::move(resp), caps), kw, pos});
    }
    return out;
  }

 private:
  SyntheticSpec spec_;
  Vocabulary vocab_;
};

inline std::vector<Sample> samples_of(const std::vector<SyntheticSample>& synth) {
  std::vector<Sample> out;
  out.reserve(synth.size());
  for (const auto& s : synth) out.push_back(s.sample);
  return out;
}

}  // namespace ram
