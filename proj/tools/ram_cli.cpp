// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// ram: train, generate, evaluate and inspect response-anticipated memory
// models. Exit codes: 0 ok, 1 failed check, 2 usage, 3 data, 4 divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ram/run.hpp"

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

ram::Variant parse_variant(const std::string& name, bool binary) {
  ram::Variant v;
  std::string base = name;
  if (auto dash = name.find('-'); dash != std::string::npos) {
    base = name.substr(0, dash);
    const std::string mode = name.substr(dash + 1);
    if (mode == "binary") {
      binary = true;
    } else if (mode != "cont" && mode != "continuous") {
      throw ram::ConfigError("unknown variant '" + name + "'");
    }
  }
  if (base == "rti") {
    v.importance = ram::Importance::kToken;
  } else if (base == "rpi") {
    v.importance = ram::Importance::kPairwise;
  } else {
    throw ram::ConfigError("unknown variant '" + name + "' (rti, rpi, rti-binary, rpi-binary)");
  }
  v.binary = binary;
  return v;
}

void print_warnings(const ram::DataSplits& data) {
  const std::size_t shown = std::min<std::size_t>(data.warnings.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) std::cerr << "warning: " << data.warnings[i] << '\n';
  if (data.warnings.size() > shown) std::cerr << "warning: " << data.warnings.size() - shown << " more skipped\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-anticipated document memory for conversing by reading"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value settings file; command-line flags take precedence");

  ram::RunConfig cfg;
  std::string variant = "rti";
  bool binary = false;
  std::string source = "student";

  app.add_option("-o,--out", cfg.out_dir, "Output directory for every artifact");
  app.add_option("--seed", cfg.seed, "Seed for initialization, shuffling, noise, data and sampling");

  app.add_option("--corpus-train", cfg.corpus_train, "Training JSON-lines {document, context, response}");
  app.add_option("--corpus-valid", cfg.corpus_valid, "Validation JSON-lines");
  app.add_option("--corpus-test", cfg.corpus_test, "Test JSON-lines");
  app.add_option("--vocab-size", cfg.vocab_size, "Vocabulary cap including reserved tokens");
  app.add_option("--vocab", cfg.vocab_file, "Existing vocabulary file (one token per line)");
  app.add_option("--embeddings", cfg.embeddings, "Pretrained vectors, 'token v1 ... vd' per line");
  app.add_option("--max-document", cfg.caps.document, "Document truncation length");
  app.add_option("--max-context", cfg.caps.context, "Context truncation length");
  app.add_option("--max-response", cfg.caps.response, "Response truncation length");

  app.add_flag("--synthetic", cfg.synthetic, "Use the planted-keyword synthetic corpus");
  app.add_option("--synthetic-train", cfg.synthetic_train, "Synthetic training samples");
  app.add_option("--synthetic-valid", cfg.synthetic_valid, "Synthetic validation samples");
  app.add_option("--synthetic-test", cfg.synthetic_test, "Synthetic test samples");
  app.add_option("--synthetic-vocab", cfg.synthetic_spec.vocab_size, "Synthetic vocabulary size");
  app.add_option("--synthetic-length", cfg.synthetic_spec.document_length, "Synthetic document length");

  app.add_option("--embed", cfg.model.embed_dim, "Word embedding size");
  app.add_option("--hidden", cfg.model.hidden, "LSTM hidden size per direction");
  app.add_option("--width", cfg.model.width, "Shared representation width k");
  app.add_option("--dropout", cfg.model.dropout, "Dropout rate on encoder inputs");
  app.add_option("--variant", variant, "rti | rpi | rti-binary | rpi-binary");
  app.add_flag("--binary", binary, "Binarize G (Gumbel-sigmoid in training, Bernoulli at prediction)");
  app.add_option("--tau", cfg.model.tau, "Gumbel-sigmoid temperature");

  app.add_option("--lr", cfg.train.lr, "Adam learning rate");
  app.add_option("--batch", cfg.train.batch_size, "Mini-batch size");
  app.add_option("--lambda", cfg.train.lambda, "Weight of the distillation MSE");
  app.add_option("--max-epochs", cfg.train.max_epochs, "Epoch cap per phase");
  app.add_option("--patience", cfg.train.patience, "Validation checks without improvement before stopping");
  app.add_option("--eval-every", cfg.train.eval_every, "Steps between validation checks (0: once per epoch)");
  app.add_option("--clip-norm", cfg.train.clip_norm, "Global gradient-norm clip (<= 0 disables)");
  app.add_option("--rounds", cfg.rounds, "Teacher/student rounds for alternate");
  app.add_flag("--base", cfg.base, "Train or analyze the base model (G = 1) instead");

  app.add_option("--checkpoint", cfg.checkpoint, "Checkpoint to start from or to load");
  app.add_option("--source", source, "Memory weights for generation/analysis: teacher | student | unit");
  app.add_option("--top-k", cfg.top_k, "Top-k sampling width (1 = greedy)");
  app.add_option("--max-len", cfg.max_len, "Maximum generated tokens");
  app.add_option("--generations", cfg.generations, "Generation file to evaluate (default OUT/generations.jsonl)");
  app.add_option("--stopwords", cfg.stopwords, "Stopword file, one per line (default: built-in English list)");
  app.add_option("--analysis-k", cfg.analysis_k, "K values for the top-K overlap analysis");
  app.add_option("--selfcheck-seeds", cfg.selfcheck_seeds, "Random seeds per gradient check");

  auto add_command = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };
  auto* train_teacher = add_command("train-teacher", "Train phi and theta_t (or the base model with --base)");
  auto* train_student = add_command("train-student", "Train theta_s from a teacher checkpoint");
  auto* alternate = add_command("alternate", "Alternate teacher and student phases for --rounds rounds");
  auto* generate = add_command("generate", "Generate responses for the test split");
  auto* evaluate = add_command("evaluate", "Score a generation file");
  auto* analyze = add_command("analyze-attention", "Top-K overlap of memory attention and the response");
  auto* selfcheck = add_command("selfcheck", "Gradient and weight-matrix invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    cfg.model.variant = parse_variant(variant, binary);
    cfg.source = ram::parse_source(source);
    cfg.apply_seed();
    cfg.model.validate();
    cfg.train.validate();
    if (!cfg.out_dir.empty()) {
      ram::RunDir dir(cfg.out_dir);
      std::ofstream(dir.path("config.resolved")) << "# " << app.get_subcommands().front()->get_name() << '\n'
                                                 << app.config_to_str(true, false);
    }

    if (selfcheck->parsed()) {
      bool ok = true;
      for (const auto& c : ram::run_selfcheck(cfg.selfcheck_seeds)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
        ok = ok && c.passed;
      }
      return ok ? 0 : kExitFailed;
    }
    if (evaluate->parsed()) {
      const auto report = ram::command_evaluate(cfg);
      std::cout << ram::metric_table(report, cfg.base ? "base" : "model");
      return 0;
    }

    const ram::DataSplits data = ram::load_data(cfg);
    print_warnings(data);
    if (cfg.out_dir.empty()) throw ram::ConfigError("an output directory is required (--out)");

    if (train_teacher->parsed()) {
      const auto r = ram::command_train_teacher(cfg, data);
      std::cout << ram::phase_name(r.phase) << ": " << r.steps << " steps, validation " << r.initial_val
                << " -> " << r.best_val << '\n';
    } else if (train_student->parsed()) {
      const auto r = ram::command_train_student(cfg, data);
      std::cout << "student: " << r.steps << " steps, validation " << r.initial_val << " -> " << r.best_val
                << '\n';
    } else if (alternate->parsed()) {
      const auto result = ram::command_alternate(cfg, data);
      std::cout << "phases " << result.transcript_string() << '\n';
      for (const auto& r : result.phases)
        std::cout << "  round " << r.round << ' ' << ram::phase_name(r.phase) << ": " << r.steps
                  << " steps, validation " << r.initial_val << " -> " << r.best_val << '\n';
    } else if (generate->parsed()) {
      const auto gens = ram::command_generate(cfg, data);
      std::cout << gens.size() << " responses written\n";
    } else if (analyze->parsed()) {
      const auto a = ram::command_analyze_attention(cfg, data);
      for (const auto& r : a.rows) std::cout << "K=" << r.K << " Emb-M " << r.emb_m << " Emb-B " << r.emb_b << '\n';
    }
    return 0;
  } catch (const ram::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ram::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ram::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ram::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
}
