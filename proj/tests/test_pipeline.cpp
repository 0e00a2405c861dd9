#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ram/run.hpp"

namespace ram {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "ram_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_synthetic(const fs::path& out) {
  RunConfig cfg;
  cfg.out_dir = out.string();
  cfg.synthetic = true;
  cfg.synthetic_train = 24;
  cfg.synthetic_valid = 6;
  cfg.synthetic_test = 5;
  cfg.synthetic_spec.document_length = 8;
  cfg.model.embed_dim = 6;
  cfg.model.hidden = 4;
  cfg.model.width = 6;
  cfg.model.dropout = 0.1;
  cfg.train.max_epochs = 1;
  cfg.train.batch_size = 8;
  cfg.rounds = 2;
  cfg.top_k = 5;
  cfg.max_len = 6;
  cfg.analysis_k = {3};
  cfg.apply_seed();
  return cfg;
}

TEST(RunConfig, ExactlyOneDataSource) {
  RunConfig cfg;
  EXPECT_THROW(cfg.validate_data_source(), ConfigError);
  cfg.synthetic = true;
  EXPECT_NO_THROW(cfg.validate_data_source());
  cfg.corpus_train = "x.jsonl";
  EXPECT_THROW(cfg.validate_data_source(), ConfigError);
}

TEST(RunConfig, SeedReachesEveryRandomComponent) {
  RunConfig cfg;
  cfg.seed = 77;
  cfg.apply_seed();
  EXPECT_EQ(cfg.model.init_seed, 77u);
  EXPECT_EQ(cfg.train.seed, 77u);
  EXPECT_EQ(cfg.synthetic_spec.seed, 77u);
}

TEST(ParseSource, NamesRoundTrip) {
  for (WeightSource s : {WeightSource::kTeacher, WeightSource::kStudent, WeightSource::kUnit})
    EXPECT_EQ(parse_source(source_name(s)), s);
  EXPECT_EQ(parse_source("base"), WeightSource::kUnit);
  EXPECT_THROW(parse_source("oracle"), ConfigError);
}

TEST(LoadData, CorpusWithValidationFallback) {
  const auto dir = fresh_dir("corpus");
  {
    std::ofstream out(dir / "train.jsonl");
    for (int i = 0; i < 20; ++i)
      out << R"({"document": "the red piano sits here )" << i << R"(", "context": "what is it", "response": "a piano"})"
          << '\n';
    out << "garbage\n";
  }
  RunConfig cfg;
  cfg.corpus_train = (dir / "train.jsonl").string();
  auto d = load_data(cfg);
  EXPECT_EQ(d.train.size(), 18u);
  EXPECT_EQ(d.valid.size(), 2u);
  EXPECT_TRUE(d.test.empty());
  ASSERT_EQ(d.warnings.size(), 1u);
  EXPECT_NE(d.warnings[0].find(":21:"), std::string::npos);
  EXPECT_TRUE(d.vocab.contains("piano"));
  EXPECT_EQ(model_config_for(cfg, d.vocab).vocab_size, d.vocab.size());

  cfg.corpus_train = (dir / "missing.jsonl").string();
  EXPECT_THROW(load_data(cfg), DataError);
  std::ofstream(dir / "empty.jsonl") << "\n";
  cfg.corpus_train = (dir / "empty.jsonl").string();
  EXPECT_THROW(load_data(cfg), DataError);
}

TEST(LoadData, SyntheticSplitsAreDisjointStreams) {
  RunConfig cfg = small_synthetic(fresh_dir("splits"));
  auto d = load_data(cfg);
  EXPECT_EQ(d.train.size(), 24u);
  EXPECT_EQ(d.valid.size(), 6u);
  EXPECT_EQ(d.test.size(), 5u);
  EXPECT_NE(d.train[0].document, d.valid[0].document);
  EXPECT_NE(d.valid[0].document, d.test[0].document);
}

TEST(Generations, WriteReadRoundTripAndErrors) {
  const auto dir = fresh_dir("gens");
  std::vector<Generation> gens{{"what about x", "a b c", "i like b .", "i like b"}, {"c", "d", "r", ""}};
  write_generations(gens, (dir / "g.jsonl").string());
  auto back = read_generations((dir / "g.jsonl").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].generated, "i like b");
  EXPECT_EQ(back[1].generated, "");
  std::ofstream(dir / "bad.jsonl") << R"({"context": "c"})" << '\n';
  EXPECT_THROW(read_generations((dir / "bad.jsonl").string()), DataError);
  EXPECT_THROW(read_generations((dir / "none.jsonl").string()), DataError);
}

TEST(MetricTable, ColumnLayout) {
  MetricReport r;
  r.bleu4 = 0.5;
  const std::string table = metric_table(r, "ram");
  std::istringstream in(table);
  std::string groups, head, vals;
  std::getline(in, groups);
  std::getline(in, head);
  std::getline(in, vals);
  EXPECT_EQ(groups.size(), head.size());
  EXPECT_EQ(head.size(), vals.size());
  for (const char* col : {"NIST", "BLEU", "METEOR", "P_GT", "F1_GT", "Ent-4", "Dist-2", "Len"})
    EXPECT_NE(head.find(col), std::string::npos) << col;
  for (const char* g : {"Appropriateness", "Grounding", "Informativeness"})
    EXPECT_NE(groups.find(g), std::string::npos) << g;
  EXPECT_NE(vals.find("50.00%"), std::string::npos);
  EXPECT_NE(vals.find("n/a"), std::string::npos);
  EXPECT_EQ(head.find("BLEU") - head.find("NIST"), 10u);

  auto j = to_json(r);
  EXPECT_TRUE(j["nist"].is_null());
  EXPECT_TRUE(j["meteor"].is_null());
}

TEST(Commands, AlternateGenerateEvaluateAnalyze) {
  const auto dir = fresh_dir("flow");
  RunConfig cfg = small_synthetic(dir);
  auto data = load_data(cfg);
  auto result = command_alternate(cfg, data);
  EXPECT_EQ(result.transcript_string(), "TSTS");
  for (const char* f : {"model.ckpt", "vocab.txt", "train_log.jsonl", "round0_teacher.ckpt", "round1_student.ckpt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  std::size_t phase_ends = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("phase"));
    if (j.value("event", "") == "phase_end") ++phase_ends;
  }
  EXPECT_EQ(phase_ends, 4u);

  cfg.checkpoint = (dir / "model.ckpt").string();
  auto gens = command_generate(cfg, data);
  EXPECT_EQ(gens.size(), 5u);
  for (const auto& g : gens) EXPECT_LE(tokenize(g.generated).size(), cfg.max_len);
  const std::string first = slurp(dir / "generations.jsonl");
  command_generate(cfg, data);
  EXPECT_EQ(slurp(dir / "generations.jsonl"), first);

  auto report = command_evaluate(cfg);
  EXPECT_EQ(report.records, 5u);
  EXPECT_TRUE(fs::exists(dir / "metrics.json"));
  EXPECT_TRUE(fs::exists(dir / "metrics.txt"));

  auto analysis = command_analyze_attention(cfg, data);
  ASSERT_EQ(analysis.rows.size(), 1u);
  EXPECT_GE(analysis.rows[0].emb_m, 0.0);
  EXPECT_LE(analysis.rows[0].emb_m, 1.0 + 1e-12);
  EXPECT_TRUE(fs::exists(dir / "attention_analysis.json"));
}

TEST(Commands, SameSeedGivesByteIdenticalArtifacts) {
  auto run = [](const std::string& name) {
    const auto dir = fresh_dir(name);
    RunConfig cfg = small_synthetic(dir);
    cfg.rounds = 1;
    auto data = load_data(cfg);
    command_alternate(cfg, data);
    cfg.checkpoint = (dir / "model.ckpt").string();
    command_generate(cfg, data);
    return std::make_pair(slurp(dir / "model.ckpt"), slurp(dir / "generations.jsonl"));
  };
  auto a = run("repro_a");
  auto b = run("repro_b");
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Commands, StudentNeedsACheckpointAndBaseWritesItsOwn) {
  const auto dir = fresh_dir("phases");
  RunConfig cfg = small_synthetic(dir);
  auto data = load_data(cfg);
  EXPECT_THROW(command_train_student(cfg, data), ConfigError);
  cfg.base = true;
  command_train_teacher(cfg, data);
  EXPECT_TRUE(fs::exists(dir / "base.ckpt"));
  cfg.base = false;
  command_train_teacher(cfg, data);
  cfg.checkpoint = (dir / "teacher.ckpt").string();
  command_train_student(cfg, data);
  EXPECT_TRUE(fs::exists(dir / "student.ckpt"));
  RunConfig no_out = cfg;
  no_out.out_dir.clear();
  EXPECT_THROW(command_generate(no_out, data), ConfigError);
}

}  // namespace
}  // namespace ram
