// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and the command bodies behind the `ram` executable:
// data loading, training drivers, generation, evaluation and attention
// analysis, each writing its artifacts under one output directory.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ram/checkpoint.hpp"
#include "ram/metrics.hpp"
#include "ram/model.hpp"
#include "ram/pipeline.hpp"
#include "ram/selfcheck.hpp"
#include "ram/text.hpp"
#include "ram/training.hpp"

namespace ram {

struct RunConfig {
  std::string out_dir;

  // Data: exactly one of a corpus (train file at least) or the synthetic task.
  std::string corpus_train;
  std::string corpus_valid;
  std::string corpus_test;
  std::size_t vocab_size = 30000;
  std::string vocab_file;  // reuse an existing vocabulary instead of building one
  std::string embeddings;  // optional pretrained vectors, "token v1 ... vd" per line
  bool synthetic = false;
  SyntheticSpec synthetic_spec;
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_valid = 200;
  std::size_t synthetic_test = 200;
  TruncationCaps caps;

  ModelConfig model;
  TrainConfig train;
  std::size_t rounds = 2;
  bool base = false;  // train/evaluate the G = 1 base model instead of RAM

  std::string checkpoint;
  WeightSource source = WeightSource::kStudent;
  std::size_t top_k = 20;
  std::size_t max_len = 30;
  std::string generations;
  std::string stopwords;
  std::vector<std::size_t> analysis_k{10, 20};
  std::size_t selfcheck_seeds = 20;

  std::uint64_t seed = 1;

  /// Propagates `seed` into every component that draws random numbers.
  void apply_seed() {
    model.init_seed = seed;
    train.seed = seed;
    synthetic_spec.seed = seed;
  }

  void validate_data_source() const {
    const bool corpus = !corpus_train.empty();
    if (corpus == synthetic) {
      throw ConfigError(corpus ? "give either --corpus-train or --synthetic, not both"
                               : "no data source: pass --corpus-train FILE or --synthetic");
    }
  }
};

inline WeightSource parse_source(const std::string& s) {
  if (s == "teacher") return WeightSource::kTeacher;
  if (s == "student") return WeightSource::kStudent;
  if (s == "unit" || s == "base") return WeightSource::kUnit;
  throw ConfigError("unknown weight source '" + s + "' (teacher, student, unit)");
}

inline const char* source_name(WeightSource s) {
  switch (s) {
    case WeightSource::kTeacher: return "teacher";
    case WeightSource::kStudent: return "student";
    case WeightSource::kUnit: return "unit";
  }
  return "?";
}

struct DataSplits {
  Vocabulary vocab;
  std::vector<Sample> train;
  std::vector<Sample> valid;
  std::vector<Sample> test;
  std::vector<std::string> warnings;
};

/// Loads or generates the three splits. With a corpus, the vocabulary is
/// built from the training file unless `vocab_file` is given; a missing
/// validation file falls back to the last 10% of training samples.
inline DataSplits load_data(const RunConfig& cfg) {
  cfg.validate_data_source();
  DataSplits d;
  if (cfg.synthetic) {
    SyntheticCorpus corpus(cfg.synthetic_spec);
    d.vocab = corpus.vocabulary();
    d.train = samples_of(corpus.generate(cfg.synthetic_train, 0));
    d.valid = samples_of(corpus.generate(cfg.synthetic_valid, 1));
    d.test = samples_of(corpus.generate(cfg.synthetic_test, 2));
    return d;
  }
  d.vocab = cfg.vocab_file.empty() ? build_vocabulary(cfg.corpus_train, cfg.vocab_size)
                                   : Vocabulary::load(cfg.vocab_file);
  auto load = [&](const std::string& path, std::vector<Sample>& into) {
    if (path.empty()) return;
    auto loaded = load_corpus(path, d.vocab, cfg.caps);
    into = std::move(loaded.samples);
    d.warnings.insert(d.warnings.end(), loaded.warnings.begin(), loaded.warnings.end());
  };
  load(cfg.corpus_train, d.train);
  load(cfg.corpus_valid, d.valid);
  load(cfg.corpus_test, d.test);
  if (d.train.empty()) throw DataError(cfg.corpus_train + ": no usable samples");
  if (d.valid.empty() && d.train.size() > 1) {
    const std::size_t n = std::max<std::size_t>(1, d.train.size() / 10);
    d.valid.assign(d.train.end() - static_cast<std::ptrdiff_t>(n), d.train.end());
    d.train.resize(d.train.size() - n);
  }
  return d;
}

inline ModelConfig model_config_for(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelConfig m = cfg.model;
  m.vocab_size = vocab.size();
  return m;
}

/// Output directory helper; creates it on construction.
class RunDir {
 public:
  explicit RunDir(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw ConfigError("an output directory is required (--out)");
    std::filesystem::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

inline nlohmann::ordered_json to_json(const LogRecord& r, std::size_t round) {
  nlohmann::ordered_json j{{"phase", phase_name(r.phase)}, {"round", round}, {"step", r.step}, {"loss", r.loss}};
  if (r.mse) j["mse"] = *r.mse;
  if (r.val_loss) j["val_loss"] = *r.val_loss;
  return j;
}

/// Training hooks that append every log record to `train_log.jsonl` and
/// write per-phase checkpoints into the run directory.
class TrainLog {
 public:
  explicit TrainLog(const RunDir& dir) : out_(dir.path("train_log.jsonl"), std::ios::app) {
    if (!out_) throw DataError("cannot write " + dir.path("train_log.jsonl"));
    hooks_.checkpoint_dir = dir.dir();
    hooks_.on_phase_start = [this](Phase, std::size_t round) { round_ = round; };
    hooks_.on_log = [this](const LogRecord& r) { out_ << to_json(r, round_).dump() << '\n'; };
    hooks_.on_phase_end = [this](const PhaseReport& p) {
      nlohmann::ordered_json j{{"phase", phase_name(p.phase)}, {"round", p.round}, {"event", "phase_end"},
                               {"steps", p.steps}, {"epochs", p.epochs}, {"initial_val", p.initial_val},
                               {"best_val", p.best_val}};
      out_ << j.dump() << '\n';
      out_.flush();
    };
  }
  const TrainingHooks& hooks() const { return hooks_; }

 private:
  std::ofstream out_;
  TrainingHooks hooks_;
  std::size_t round_ = 0;
};

/// Teacher (or base with `cfg.base`) training from scratch; writes
/// `teacher.ckpt` (`base.ckpt`) and `vocab.txt`.
inline PhaseReport command_train_teacher(const RunConfig& cfg, const DataSplits& data) {
  RunDir dir(cfg.out_dir);
  data.vocab.save(dir.path("vocab.txt"));
  Model model(model_config_for(cfg, data.vocab));
  if (!cfg.checkpoint.empty()) load_checkpoint(model.params(), cfg.checkpoint);
  Trainer trainer(model, cfg.train);
  TrainLog log(dir);
  const Phase phase = cfg.base ? Phase::kBase : Phase::kTeacher;
  PhaseReport r = trainer.run_phase(phase, data.train, data.valid, log.hooks());
  save_checkpoint(model.params(), dir.path(cfg.base ? "base.ckpt" : "teacher.ckpt"));
  return r;
}

/// Student training on top of a teacher checkpoint; writes `student.ckpt`.
inline PhaseReport command_train_student(const RunConfig& cfg, const DataSplits& data) {
  if (cfg.checkpoint.empty()) throw ConfigError("train-student needs --checkpoint (a trained teacher)");
  RunDir dir(cfg.out_dir);
  data.vocab.save(dir.path("vocab.txt"));
  Model model(model_config_for(cfg, data.vocab));
  load_checkpoint(model.params(), cfg.checkpoint);
  Trainer trainer(model, cfg.train);
  TrainLog log(dir);
  PhaseReport r = trainer.run_phase(Phase::kStudent, data.train, data.valid, log.hooks());
  save_checkpoint(model.params(), dir.path("student.ckpt"));
  return r;
}

/// Alternating schedule; writes `model.ckpt`. With `cfg.base` the base
/// model is trained instead, for a comparable number of phases.
inline AlternateResult command_alternate(const RunConfig& cfg, const DataSplits& data) {
  RunDir dir(cfg.out_dir);
  data.vocab.save(dir.path("vocab.txt"));
  Model model(model_config_for(cfg, data.vocab));
  if (!cfg.checkpoint.empty()) load_checkpoint(model.params(), cfg.checkpoint);
  Trainer trainer(model, cfg.train);
  TrainLog log(dir);
  AlternateResult result;
  if (cfg.base) {
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      result.transcript.push_back(Phase::kBase);
      result.phases.push_back(trainer.run_phase(Phase::kBase, data.train, data.valid, log.hooks(), r));
    }
  } else {
    result = trainer.alternate(data.train, data.valid, cfg.rounds, log.hooks());
  }
  save_checkpoint(model.params(), dir.path("model.ckpt"));
  return result;
}

inline std::unique_ptr<Model> load_model(const RunConfig& cfg, const Vocabulary& vocab) {
  if (cfg.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto model = std::make_unique<Model>(model_config_for(cfg, vocab));
  load_checkpoint(model->params(), cfg.checkpoint);
  return model;
}

/// Generates for the test split (validation split if there is no test
/// split); writes `generations.jsonl`.
inline std::vector<Generation> command_generate(const RunConfig& cfg, const DataSplits& data) {
  RunDir dir(cfg.out_dir);
  auto model = load_model(cfg, data.vocab);
  const auto& samples = data.test.empty() ? data.valid : data.test;
  auto gens = generate_all(*model, data.vocab, samples, cfg.source, cfg.top_k, cfg.max_len, cfg.seed);
  write_generations(gens, dir.path("generations.jsonl"));
  return gens;
}

inline StopwordSet stopwords_for(const RunConfig& cfg) {
  return cfg.stopwords.empty() ? StopwordSet::english() : StopwordSet::load(cfg.stopwords);
}

/// Scores a generation file; writes `metrics.json` and `metrics.txt`.
inline MetricReport command_evaluate(const RunConfig& cfg) {
  RunDir dir(cfg.out_dir);
  const std::string path = cfg.generations.empty() ? dir.path("generations.jsonl") : cfg.generations;
  const MetricReport report = evaluate(to_records(read_generations(path)), stopwords_for(cfg));
  std::ofstream(dir.path("metrics.json")) << to_json(report).dump(2) << '\n';
  std::ofstream(dir.path("metrics.txt")) << metric_table(report, cfg.base ? "base" : "model");
  return report;
}

struct AttentionAnalysis {
  std::vector<OverlapRow> rows;
  nlohmann::ordered_json json;
};

/// Top-K overlap between accumulated memory attention and response
/// similarity on the test split. RAM models are analyzed through
/// G (.) A; the base model (`cfg.base` or source unit) through A.
inline AttentionAnalysis analyze_attention(const Model& model, const RunConfig& cfg, const DataSplits& data,
                                           const EmbeddingLookup& lookup) {
  const auto& samples = data.test.empty() ? data.valid : data.test;
  const bool weighted = !cfg.base && cfg.source != WeightSource::kUnit;
  const auto collected = collect_attention(model, data.vocab, samples, cfg.source, weighted, cfg.seed);
  AttentionAnalysis a;
  a.json["source"] = source_name(cfg.source);
  a.json["weighted"] = weighted;
  a.json["samples"] = collected.size();
  a.json["rows"] = nlohmann::json::array();
  for (std::size_t K : cfg.analysis_k) {
    a.rows.push_back(topk_token_overlap_analysis(collected, lookup, K));
    a.json["rows"].push_back({{"K", K}, {"emb_m", a.rows.back().emb_m}, {"emb_b", a.rows.back().emb_b}});
  }
  return a;
}

inline EmbeddingTable model_embedding_table(const Model& model, const Vocabulary& vocab) {
  const Matrix& w = model.embedding().table().value();
  EmbeddingTable table;
  for (std::size_t i = kReservedTokens; i < vocab.size(); ++i) {
    std::vector<double> v(w.cols());
    for (std::size_t c = 0; c < w.cols(); ++c) v[c] = w(i, c);
    table[vocab.token(static_cast<int>(i))] = std::move(v);
  }
  return table;
}

inline AttentionAnalysis command_analyze_attention(const RunConfig& cfg, const DataSplits& data) {
  RunDir dir(cfg.out_dir);
  auto model = load_model(cfg, data.vocab);
  // Pretrained vectors if given; one-hot for the small synthetic vocabulary;
  // otherwise the model's own input embeddings.
  std::optional<OneHotEmbeddings> onehot;
  EmbeddingTable table;
  EmbeddingLookup lookup;
  std::string kind;
  if (!cfg.embeddings.empty()) {
    table = load_embeddings(cfg.embeddings, cfg.model.embed_dim);
    lookup = table_lookup(table);
    kind = cfg.embeddings;
  } else if (cfg.synthetic) {
    onehot.emplace(data.vocab);
    lookup = onehot->lookup();
    kind = "one-hot";
  } else {
    table = model_embedding_table(*model, data.vocab);
    lookup = table_lookup(table);
    kind = "model";
  }
  AttentionAnalysis a = analyze_attention(*model, cfg, data, lookup);
  a.json["embeddings"] = kind;
  std::ofstream(dir.path("attention_analysis.json")) << a.json.dump(2) << '\n';
  return a;
}

}  // namespace ram
