// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if
// any criterion fails. `--only 3 9` runs a subset.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "metric_oracles.hpp"
#include "ram/run.hpp"

namespace fs = std::filesystem;
using namespace ram;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ 1

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  auto checks = selfcheck::gradient_op_checks(20);
  const std::size_t ops = checks.size();
  auto comp = selfcheck::gradient_composite_checks(20);
  checks.insert(checks.end(), comp.begin(), comp.end());
  const double secs = seconds_since(t0);
  std::size_t failed = 0;
  std::string failures;
  for (const auto& c : checks) {
    if (c.passed) continue;
    ++failed;
    failures += "\n      " + c.name + ": " + c.detail;
  }
  Verdict v;
  v.pass = failed == 0 && secs < 60.0;
  v.detail = std::to_string(ops) + " op suites + " + std::to_string(comp.size()) +
             " composite losses, 20 seeds each, eps 1e-4, tol 1e-4, " + fmt(secs, 3) + " s; " +
             std::to_string(failed) + " failing" + failures;
  return v;
}

// ------------------------------------------------------------------ 2

Verdict weight_invariants() {
  const auto checks = selfcheck::weight_invariant_checks(1000);
  Verdict v{true, "1000 random inputs:"};
  for (const auto& c : checks) {
    v.pass = v.pass && c.passed;
    v.detail += " " + c.name.substr(c.name.find('/') + 1) + " " + (c.passed ? "ok" : "FAILED") + " (" + c.detail + ");";
  }
  return v;
}

// ------------------------------------------------------------------ 3

std::vector<Sample> synthetic_samples(std::size_t n, std::uint64_t seed, std::size_t doc_len) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.document_length = doc_len;
  return samples_of(SyntheticCorpus(spec).generate(n, 0));
}

ModelConfig small_model(std::size_t vocab, const Variant& variant, std::uint64_t seed) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 8;
  c.hidden = 6;
  c.width = 8;
  c.dropout = 0.2;
  c.variant = variant;
  c.init_seed = seed;
  return c;
}

const std::vector<Variant> kVariants{
    {Importance::kToken, false}, {Importance::kToken, true}, {Importance::kPairwise, false}, {Importance::kPairwise, true}};

Verdict reduction_identity() {
  std::size_t compared = 0, mismatched = 0;
  for (const auto& variant : kVariants) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Model model(small_model(64, variant, seed));
      const auto batch = synthetic_samples(8, seed, 10);
      for (bool train : {false, true}) {
        double base = 0, teacher = 0, student = 0;
        for (const auto& s : batch) {
          const auto view = SampleView::from(s);
          Rng r1(seed), r2(seed), r3(seed);
          base += model.base_loss(view, {train, &r1, false}).item();
          teacher += model.teacher_loss(view, {train, &r2, true}).item();
          student += model.student_loss(view, {train, &r3, true}, 0.0).total.item();
        }
        const double n = static_cast<double>(batch.size());
        base /= n;
        teacher /= n;
        student /= n;
        ++compared;
        if (!(std::memcmp(&base, &teacher, sizeof base) == 0 && std::memcmp(&base, &student, sizeof base) == 0))
          ++mismatched;
      }
    }
  }
  return {mismatched == 0, std::to_string(compared) + " batch means (4 variants x 5 seeds x dropout off/on), " +
                               std::to_string(mismatched) + " not bitwise equal"};
}

// ------------------------------------------------------------------ 4

Verdict gumbel_statistics() {
  const double p = 0.3, logit = std::log(p / (1.0 - p));
  const std::size_t n = 10000;
  const double sigma3 = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  Rng rng(4242);
  double rti_ones = 0, rpi_ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    rti_ones += rti_binarize(constant(Matrix(1, 1, logit)), {true}, BinarizeMode::kPredict, 1.0, rng).G.value()(0, 0);
    rpi_ones += rpi_binarize(constant(Matrix(2, 2, logit)), {true, true}, BinarizeMode::kPredict, 1.0, rng).G.value()(0, 1);
  }
  const double rti_mean = rti_ones / static_cast<double>(n), rpi_mean = rpi_ones / static_cast<double>(n);

  double dist_sum = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < 200; ++t) {
    Matrix beta(1, 16), B(6, 6);
    for (std::size_t i = 0; i < 16; ++i) beta[i] = 6.0 * uniform01(rng) - 3.0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i; j < 6; ++j) B(i, j) = B(j, i) = 6.0 * uniform01(rng) - 3.0;
    for (double g : rti_binarize(constant(beta), std::vector<bool>(16, true), BinarizeMode::kTrain, 0.01, rng).G.value().data()) {
      dist_sum += std::min(g, 1.0 - g);
      ++count;
    }
    for (double g : rpi_binarize(constant(B), std::vector<bool>(6, true), BinarizeMode::kTrain, 0.01, rng).G.value().data()) {
      dist_sum += std::min(g, 1.0 - g);
      ++count;
    }
  }
  const double mean_dist = dist_sum / static_cast<double>(count);
  Verdict v;
  v.pass = std::abs(rti_mean - p) <= sigma3 && std::abs(rpi_mean - p) <= sigma3 && mean_dist < 0.05;
  v.detail = "predict p=0.3 over 10000 draws: RTI " + fmt(rti_mean) + ", RPI " + fmt(rpi_mean) + " (3 sigma " +
             fmt(sigma3) + "); tau=0.01 train-mode mean distance from {0,1} " + fmt(mean_dist) + " over " +
             std::to_string(count) + " entries";
  return v;
}

// ------------------------------------------------------------------ 5

Verdict metric_oracles() {
  auto m = oracle::compare_all(200, 99);
  // Hand-built cases from the metric examples, each also run through the oracles.
  const StopwordSet none;
  const StopwordSet stop({"the", "of"});
  const std::vector<EvalRecord> hand{
      {tokenize("a b c"), tokenize("d"), {}, tokenize("a d")},
      {tokenize("a b c"), tokenize("c"), tokenize("a"), tokenize("a c x")},
      {tokenize("the cat sat on the mat"), tokenize("where"), tokenize("cat mat"), tokenize("the cat is on the mat")},
      {tokenize("x y z w"), {}, tokenize("x y"), tokenize("x y z w")},
      {tokenize("a a b"), tokenize("b"), tokenize("a b"), tokenize("a a b b q")},
  };
  double worst = m.worst;
  std::size_t hand_cmp = 0;
  for (const auto& r : hand) {
    for (const auto* s : {&none, &stop}) {
      const Tokens stop_list = s == &stop ? Tokens{"the", "of"} : Tokens{};
      for (bool gt : {false, true}) {
        const PRF got = gt ? grounding_gt(r, *s) : grounding(r, *s);
        const PRF want = oracle::grounding(r, stop_list, gt);
        worst = std::max({worst, std::abs(got.precision - want.precision), std::abs(got.recall - want.recall),
                          std::abs(got.f1 - want.f1)});
        hand_cmp += 3;
      }
    }
  }
  const std::vector<Tokens> corpus{tokenize("a b a b"), tokenize("a b c d e"), tokenize("the cat")};
  const std::vector<Tokens> refs{tokenize("a b a c"), tokenize("a b c d e"), tokenize("a cat")};
  for (std::size_t n = 1; n <= 4; ++n) {
    worst = std::max({worst, std::abs(dist_n(corpus, n) - oracle::dist(corpus, n)),
                      std::abs(ent_n(corpus, n) - oracle::ent(corpus, n))});
    hand_cmp += 2;
  }
  worst = std::max(worst, std::abs(bleu4(corpus, refs) - oracle::bleu(corpus, refs)));
  const oracle::VectorList vecs{{"x", {1, 0}}, {"y", {0, 1}}, {"z", {1, 1}}};
  const EmbeddingTable table = oracle::to_table(vecs);
  for (const auto& [a, b] : std::vector<std::pair<Tokens, Tokens>>{{{"x"}, {"x", "y"}}, {{"x", "z"}, {"y"}}, {{"q"}, {"x"}}}) {
    worst = std::max({worst,
                      std::abs(emb_similarity(a, b, table_lookup(table), EmbSimilarity::kMax) - oracle::emb_m(a, b, vecs)),
                      std::abs(emb_similarity(a, b, table_lookup(table), EmbSimilarity::kBag) - oracle::emb_b(a, b, vecs))});
    hand_cmp += 2;
  }
  hand_cmp += 1;
  Verdict v;
  v.pass = worst <= 1e-9;
  v.detail = std::to_string(m.cases) + " random micro-cases (" + std::to_string(m.comparisons) + " comparisons) + " +
             std::to_string(hand.size() + 1 + 3) + " hand cases (" + std::to_string(hand_cmp) +
             " comparisons) over P/R/F1, GT variants, Dist-1..4, Ent-1..4, BLEU-4, Emb-M, Emb-B; worst |diff| " +
             fmt(worst, 3) + (m.first_failure.empty() ? "" : "; first failure " + m.first_failure);
  return v;
}

// ------------------------------------------------------------------ 6, 7

struct EndToEndSettings {
  Variant variant{Importance::kPairwise, true};
  double lr = 2e-3;
  double tau = 1.0;
  double dropout = 0.1;
  std::size_t max_epochs = 30;
  std::size_t rounds = 2;
  std::uint64_t seed = 1;
};

struct EndToEnd {
  bool ran = false;
  double alternate_seconds = 0, total_seconds = 0;
  std::size_t teacher_above_median = 0, test_documents = 0;
  std::size_t column_mean_above_median = 0;  // RPI only, reported but not judged
  std::vector<double> mse_at_student_start, mse_at_student_end;
  double final_mse = 0;
  MetricReport ram_report, base_report;
  std::vector<OverlapRow> ram_overlap, base_overlap;
  std::string transcript;
  std::size_t instrumented_steps = 0, frozen_tensors_checked = 0, frozen_mutations = 0;
};

/// Importance per document position from the teacher: beta for RTI, the
/// diagonal of B (squared norm of n_i) for RPI. `column_mean` selects the
/// mean of each column of B instead.
std::vector<double> teacher_token_importance(const Model& model, const Sample& s, bool column_mean = false) {
  ForwardContext ctx;
  const auto view = SampleView::from(s);
  const EncodedInputs in = model.encode_inputs(view, ctx);
  const Matrix imp = model.teacher_importance(in, model.encode_response(view, ctx)).value();
  const std::size_t n = s.document.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (imp.rows() == 1) {
      out[j] = imp(0, j);
    } else if (!column_mean) {
      out[j] = imp(j, j);
    } else {
      for (std::size_t i = 0; i < n; ++i) out[j] += imp(i, j) / static_cast<double>(n);
    }
  }
  return out;
}

bool ranks_above_median(const std::vector<double>& imp, std::size_t pos) {
  std::vector<double> others;
  for (std::size_t j = 0; j < imp.size(); ++j)
    if (j != pos) others.push_back(imp[j]);
  std::sort(others.begin(), others.end());
  return imp[pos] > 0.5 * (others[others.size() / 2] + others[(others.size() - 1) / 2]);
}

EndToEnd run_end_to_end(const EndToEndSettings& st) {
  EndToEnd e;
  const auto started = Clock::now();
  RunConfig cfg;
  cfg.synthetic = true;
  cfg.synthetic_spec.vocab_size = 64;
  cfg.synthetic_spec.document_length = 24;
  cfg.synthetic_train = 2000;
  cfg.synthetic_valid = 200;
  cfg.synthetic_test = 200;
  cfg.model.embed_dim = 32;
  cfg.model.hidden = 32;
  cfg.model.width = 32;
  cfg.model.dropout = st.dropout;
  cfg.model.variant = st.variant;
  cfg.model.tau = st.tau;
  cfg.train.lr = st.lr;
  cfg.train.max_epochs = st.max_epochs;
  cfg.rounds = st.rounds;
  cfg.seed = st.seed;
  cfg.apply_seed();
  const DataSplits data = load_data(cfg);
  const std::span<const Sample> test(data.test);

  Model model(model_config_for(cfg, data.vocab));
  Trainer trainer(model, cfg.train);
  std::vector<Matrix> frozen;
  TrainingHooks hooks;
  hooks.before_step = [&](Phase p) {
    frozen.clear();
    const TagSet active = active_tags(p);
    for (const auto& en : model.params().entries())
      if (!active.contains(en.tag)) frozen.push_back(en.tensor.value());
  };
  hooks.after_step = [&](Phase p) {
    const TagSet active = active_tags(p);
    std::size_t i = 0;
    for (const auto& en : model.params().entries()) {
      if (active.contains(en.tag)) continue;
      ++e.frozen_tensors_checked;
      if (!bitwise_equal(frozen[i++], en.tensor.value())) ++e.frozen_mutations;
    }
    ++e.instrumented_steps;
  };
  hooks.on_phase_start = [&](Phase p, std::size_t) {
    if (p == Phase::kStudent) e.mse_at_student_start.push_back(trainer.distillation_mse(test));
  };
  hooks.on_phase_end = [&](const PhaseReport& r) {
    if (r.phase == Phase::kStudent) e.mse_at_student_end.push_back(trainer.distillation_mse(test));
  };
  const auto t0 = Clock::now();
  const AlternateResult result = trainer.alternate(data.train, data.valid, cfg.rounds, hooks);
  e.alternate_seconds = seconds_since(t0);
  e.transcript = result.transcript_string();
  e.final_mse = trainer.distillation_mse(test);

  const SyntheticCorpus corpus(cfg.synthetic_spec);
  for (const auto& s : data.test) {
    // The planted keyword is the only document token of the cue's group.
    const int cue = s.context.back();
    std::size_t kw_pos = s.document.size();
    for (std::size_t j = 0; j < s.document.size(); ++j)
      if (corpus.is_keyword(s.document[j]) && corpus.cue_id(corpus.group_of(s.document[j])) == cue) kw_pos = j;
    if (kw_pos == s.document.size()) continue;
    ++e.test_documents;
    if (ranks_above_median(teacher_token_importance(model, s), kw_pos)) ++e.teacher_above_median;
    if (st.variant.importance == Importance::kPairwise &&
        ranks_above_median(teacher_token_importance(model, s, true), kw_pos))
      ++e.column_mean_above_median;
  }

  Model base(model_config_for(cfg, data.vocab));
  Trainer base_trainer(base, cfg.train);
  for (std::size_t r = 0; r < cfg.rounds; ++r) base_trainer.run_phase(Phase::kBase, data.train, data.valid, {}, r);

  const StopwordSet stop = StopwordSet::english();
  // Greedy decoding for both, so the comparison does not ride on sampling noise.
  e.ram_report = evaluate(to_records(generate_all(model, data.vocab, data.test, WeightSource::kStudent, 1, 30, cfg.seed)), stop);
  e.base_report = evaluate(to_records(generate_all(base, data.vocab, data.test, WeightSource::kUnit, 1, 30, cfg.seed)), stop);

  const OneHotEmbeddings onehot(data.vocab);
  const auto ram_attn = collect_attention(model, data.vocab, data.test, WeightSource::kTeacher, true, cfg.seed);
  const auto base_attn = collect_attention(base, data.vocab, data.test, WeightSource::kUnit, false, cfg.seed);
  for (std::size_t K : {10, 20}) {
    e.ram_overlap.push_back(topk_token_overlap_analysis(ram_attn, onehot.lookup(), K));
    e.base_overlap.push_back(topk_token_overlap_analysis(base_attn, onehot.lookup(), K));
  }
  e.ran = true;
  e.total_seconds = seconds_since(started);
  return e;
}

Verdict synthetic_end_to_end(const EndToEnd& e, const EndToEndSettings& st) {
  const double frac = e.test_documents ? static_cast<double>(e.teacher_above_median) / static_cast<double>(e.test_documents) : 0;
  const bool a = frac >= 0.8;
  const double start = e.mse_at_student_start.empty() ? 0 : e.mse_at_student_start.front();
  const bool b = start > 0 && e.final_mse < 0.5 * start;
  const bool c = e.ram_report.grounding.f1 > e.base_report.grounding.f1;
  bool d = true;
  std::string overlap;
  for (std::size_t i = 0; i < e.ram_overlap.size(); ++i) {
    d = d && e.ram_overlap[i].emb_m >= e.base_overlap[i].emb_m;
    overlap += " K=" + std::to_string(e.ram_overlap[i].K) + " " + fmt(e.ram_overlap[i].emb_m) + " vs " +
               fmt(e.base_overlap[i].emb_m) + ";";
  }
  const bool timed = e.alternate_seconds < 600.0;
  std::string per_phase;
  for (std::size_t i = 0; i < e.mse_at_student_start.size(); ++i)
    per_phase += " " + fmt(e.mse_at_student_start[i]) + "->" + fmt(e.mse_at_student_end[i]);
  auto mark = [](bool ok) { return ok ? std::string("ok") : std::string("FAILED"); };
  Verdict v;
  v.pass = a && b && c && d && timed;
  v.detail = std::string(st.variant.name()) + ", lr " + fmt(st.lr) + ", tau " + fmt(st.tau) +
             ", alternate " + fmt(e.alternate_seconds, 4) + " s [" + mark(timed) + "]" +
             "\n      (a) teacher ranks keyword above median distractor in " + std::to_string(e.teacher_above_median) +
             "/" + std::to_string(e.test_documents) + " = " + fmt(100 * frac, 3) + "%" +
             (st.variant.importance == Importance::kPairwise
                  ? " by diag(B) (column mean of B, not judged: " + std::to_string(e.column_mean_above_median) + ")"
                  : std::string()) +
             " [" + mark(a) + "]" +
             "\n      (b) test MSE(beta, beta_hat) first student-phase start " + fmt(start) + " -> end " +
             fmt(e.final_mse) + " (ratio " + fmt(start > 0 ? e.final_mse / start : 0, 3) + "; per phase" + per_phase +
             ") [" + mark(b) + "]" + "\n      (c) grounding F1 student-equipped " +
             fmt(100 * e.ram_report.grounding.f1) + "% vs base " + fmt(100 * e.base_report.grounding.f1) + "% [" +
             mark(c) + "]" + "\n      (d) Emb-M teacher G(.)A vs base A:" + overlap + " [" + mark(d) + "]";
  return v;
}

Verdict freeze_contract(const EndToEnd& e) {
  Verdict v;
  v.pass = e.transcript == "TSTS" && e.frozen_mutations == 0 && e.instrumented_steps > 0;
  v.detail = "transcript " + e.transcript + "; " + std::to_string(e.instrumented_steps) + " steps, " +
             std::to_string(e.frozen_tensors_checked) + " out-of-phase tensor snapshots compared, " +
             std::to_string(e.frozen_mutations) + " mutated";
  return v;
}

// ------------------------------------------------------------------ 8

RunConfig repro_config(const fs::path& out) {
  RunConfig cfg;
  cfg.out_dir = out.string();
  cfg.synthetic = true;
  cfg.synthetic_train = 300;
  cfg.synthetic_valid = 40;
  cfg.synthetic_test = 40;
  cfg.synthetic_spec.document_length = 12;
  cfg.model.embed_dim = 12;
  cfg.model.hidden = 10;
  cfg.model.width = 12;
  cfg.model.dropout = 0.2;
  cfg.model.variant = {Importance::kToken, true};
  cfg.train.max_epochs = 2;
  cfg.train.lr = 2e-3;
  cfg.rounds = 2;
  cfg.analysis_k = {5, 10};
  cfg.seed = 31;
  cfg.apply_seed();
  return cfg;
}

void full_run(RunConfig cfg) {
  const DataSplits data = load_data(cfg);
  command_alternate(cfg, data);
  cfg.checkpoint = (fs::path(cfg.out_dir) / "model.ckpt").string();
  command_generate(cfg, data);
  command_evaluate(cfg);
  command_analyze_attention(cfg, data);
}

Verdict reproducibility(const fs::path& work) {
  const fs::path a = work / "repro_a", b = work / "repro_b";
  fs::remove_all(a);
  fs::remove_all(b);
  full_run(repro_config(a));
  full_run(repro_config(b));
  std::size_t files = 0, differing = 0;
  std::string names;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ++differing;
      names += " " + entry.path().filename().string();
    }
  }
  std::size_t files_b = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(b)) ++files_b;
  Verdict v;
  v.pass = files > 0 && differing == 0 && files == files_b;
  v.detail = "two alternate/generate/evaluate/analyze runs (seed 31, 300 samples, 2 rounds): " + std::to_string(files) +
             " artifacts compared byte for byte (checkpoints per phase, model.ckpt, generations, metrics, "
             "train log, attention analysis), " + std::to_string(differing) + " differ" + names;
  return v;
}

// ------------------------------------------------------------------ 9

Verdict checkpoint_round_trip(const fs::path& work) {
  std::size_t compared = 0, mismatched = 0;
  const auto train = synthetic_samples(24, 5, 10);
  const auto fixed = synthetic_samples(6, 6, 10);
  for (std::size_t vi = 0; vi < kVariants.size(); ++vi) {
    Model a(small_model(64, kVariants[vi], 100 + vi));
    Trainer trainer(a, TrainConfig{});
    for (const auto& batch : make_batches(train, 8)) {
      trainer.teacher_step(batch);
      trainer.student_step(batch);
    }
    const fs::path path = work / ("roundtrip_" + std::to_string(vi) + ".ckpt");
    auto outputs = [&](const Model& m) {
      std::vector<double> out;
      for (const auto& s : fixed) {
        const auto view = SampleView::from(s);
        for (bool train_mode : {false, true}) {
          Rng r1(7), r2(7), r3(7);
          out.push_back(m.teacher_loss(view, {train_mode, &r1, false}).item());
          out.push_back(m.student_loss(view, {train_mode, &r2, false}, 1.0).total.item());
          out.push_back(m.base_loss(view, {train_mode, &r3, false}).item());
        }
        for (WeightSource src : {WeightSource::kTeacher, WeightSource::kStudent, WeightSource::kUnit}) {
          Rng g(11);
          for (int id : m.generate(view, src, 5, 10, g)) out.push_back(id);
        }
      }
      return out;
    };
    const auto before = outputs(a);
    save_checkpoint(a.params(), path.string());
    Model b(small_model(64, kVariants[vi], 900 + vi));
    load_checkpoint(b.params(), path.string());
    const auto after = outputs(b);
    compared += before.size();
    if (before.size() != after.size() || std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) != 0)
      ++mismatched;
  }
  return {mismatched == 0, std::to_string(compared) +
                               " outputs (teacher/student/base losses with dropout off and on, generations from "
                               "every source) over 4 variants; " + std::to_string(mismatched) + " variants differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "ram_acceptance").string();
  EndToEndSettings st;
  std::string variant = "rpi-binary";
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--variant", variant, "Variant for the end-to-end run");
  app.add_option("--lr", st.lr, "Learning rate for the end-to-end run");
  app.add_option("--tau", st.tau, "Gumbel temperature for the end-to-end run");
  app.add_option("--max-epochs", st.max_epochs, "Epoch cap per phase for the end-to-end run");
  app.add_option("--seed", st.seed, "Seed for the end-to-end run");
  CLI11_PARSE(app, argc, argv);
  for (const auto& v : kVariants)
    if (v.name() == variant) st.variant = v;
  fs::create_directories(work);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  EndToEnd e2e;
  if (wanted(6) || wanted(7)) e2e = run_end_to_end(st);

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient correctness"},  {2, "structural invariants of G"}, {3, "reduction identity"},
      {4, "Gumbel/Bernoulli statistics"}, {5, "metric oracle equivalence"}, {6, "synthetic end-to-end"},
      {7, "freeze/phase contract"}, {8, "reproducibility"},           {9, "checkpoint round-trip"}};
  bool all = true;
  for (const auto& [id, name] : names) {
    if (!wanted(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      switch (id) {
        case 1: v = gradient_correctness(); break;
        case 2: v = weight_invariants(); break;
        case 3: v = reduction_identity(); break;
        case 4: v = gumbel_statistics(); break;
        case 5: v = metric_oracles(); break;
        case 6: v = synthetic_end_to_end(e2e, st); break;
        case 7: v = freeze_contract(e2e); break;
        case 8: v = reproducibility(work); break;
        case 9: v = checkpoint_round_trip(work); break;
      }
    } catch (const std::exception& ex) {
      v = {false, std::string("exception: ") + ex.what()};
    }
    all = all && v.pass;
    const double secs = id == 6 || id == 7 ? e2e.total_seconds : seconds_since(t0);
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << " (" << fmt(secs, 3)
              << " s): " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
