#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gcegnn/hashing.hpp"
#include "gcegnn/pipeline.hpp"
#include "gcegnn/toy.hpp"

namespace fs = std::filesystem;
using namespace gcegnn;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gcegnn_pipeline_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

// Pattern sessions one day apart, written as a click log with a header.
fs::path synthetic_log(const fs::path& dir) {
  std::ostringstream log;
  log << "session_id,item_id,timestamp\n";
  const auto sessions = toy::pattern_sessions(60, 5, 20, 2);
  for (std::size_t k = 0; k < sessions.size(); ++k)
    for (std::size_t t = 0; t < sessions[k].items.size(); ++t)
      log << "s" << k << ",item" << sessions[k].items[t] << ',' << (k * corpus::kSecondsPerDay / 4 + t * 60) << '\n';
  const auto path = dir / "events.csv";
  write_all(path, log.str());
  return path;
}

config::RunConfig small_run(const fs::path& dir) {
  config::RunConfig c;
  c.input = synthetic_log(dir).string();
  c.work_dir = (dir / "work").string();
  c.model.dim = 8;
  c.train.max_epochs = 2;
  c.train.patience = 2;
  c.train.batch_size = 32;
  return c;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const auto out = fs::temp_directory_path() / "gcegnn_pipeline_test" / "cli_output.txt";
  const std::string cmd = std::string(GCEGNN_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = read_all(out);
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Pipeline, ToyPreprocessWritesFourExamples) {
  const auto dir = scratch("toy");
  write_all(dir / "ev.csv",
            "1,a,86400\n1,b,86460\n1,c,86520\n2,a,1728000\n2,b,1728060\n2,c,1728120\n");
  write_all(dir / "cfg.json", R"({"min_item_freq": 1})");
  std::string out;
  ASSERT_EQ(run_cli("preprocess --config " + (dir / "cfg.json").string() + " --input " + (dir / "ev.csv").string() +
                        " --work-dir " + (dir / "work").string(),
                    &out),
            0)
      << out;
  std::ifstream in(dir / "work/corpus/examples.tsv");
  EXPECT_EQ(corpus::read_examples(in).size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "work/corpus/manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "work/corpus/config.json"));
}

TEST(Pipeline, MissingUpstreamNamesStage) {
  const auto dir = scratch("missing");
  auto c = small_run(dir);
  try {
    pipeline::build_graph(c);
    FAIL();
  } catch (const pipeline::StageError& e) {
    EXPECT_NE(std::string(e.what()).find("preprocess"), std::string::npos) << e.what();
  }
  pipeline::preprocess(c);
  try {
    pipeline::train_model(c);
    FAIL();
  } catch (const pipeline::StageError& e) {
    EXPECT_NE(std::string(e.what()).find("build-graph"), std::string::npos) << e.what();
  }
  pipeline::build_graph(c);
  try {
    pipeline::evaluate(c);
    FAIL();
  } catch (const pipeline::StageError& e) {
    EXPECT_NE(std::string(e.what()).find("train"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, TamperedArtifactIsRefused) {
  const auto dir = scratch("tamper");
  auto c = small_run(dir);
  pipeline::preprocess(c);
  const auto examples = dir / "work/corpus/examples.tsv";
  write_all(examples, read_all(examples) + "1\t2\ttrain\n");
  try {
    pipeline::build_graph(c);
    FAIL();
  } catch (const pipeline::StageError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, FullChainIsDeterministic) {
  auto chain = [](const std::string& name) {
    const auto dir = scratch(name);
    auto c = small_run(dir);
    pipeline::preprocess(c);
    pipeline::build_graph(c);
    pipeline::train_model(c);
    const auto report = pipeline::evaluate(c);
    EXPECT_GT(report.examples, 0u);
    return dir / "work";
  };
  const auto a = chain("det_a"), b = chain("det_b");
  for (const char* f : {"corpus/examples.tsv", "corpus/vocab.tsv", "graphs/global_graph.tsv",
                        "checkpoints/model.ckpt", "reports/evaluation.txt", "reports/evaluation.jsonl"}) {
    EXPECT_EQ(hash_file(a / f), hash_file(b / f)) << f;
  }
}

TEST(Pipeline, ManifestRecordsFingerprintAndVersion) {
  const auto dir = scratch("manifest");
  auto c = small_run(dir);
  pipeline::preprocess(c);
  pipeline::build_graph(c);
  const auto m = pipeline::verify_stage(c.work_dir, "graphs", "build-graph");
  EXPECT_EQ(m.config_fingerprint, config::fingerprint(c));
  EXPECT_EQ(m.tool_version, pipeline::kToolVersion);
  ASSERT_FALSE(m.inputs.empty());
  EXPECT_EQ(m.inputs[0].first, "corpus/examples.tsv");
}

TEST(Cli, GradcheckPasses) {
  std::string out;
  EXPECT_EQ(run_cli("gradcheck --hops 2 --aggregation gate", &out), 0) << out;
  EXPECT_NE(out.find("max relative error"), std::string::npos);
}

TEST(Cli, ConfigErrorsListOffendingKeys) {
  const auto dir = scratch("cli_config");
  write_all(dir / "bad.json", R"({"epsilon": 0, "shiny": true})");
  std::string out;
  EXPECT_EQ(run_cli("build-graph --config " + (dir / "bad.json").string(), &out), 2);
  EXPECT_NE(out.find("epsilon must be >= 1"), std::string::npos) << out;
  EXPECT_NE(out.find("unknown key 'shiny'"), std::string::npos) << out;
  EXPECT_NE(run_cli("train --dropout 1.0", &out), 0);
  EXPECT_NE(out.find("rate must be < 1"), std::string::npos) << out;
}

TEST(Cli, AblateAggregationPrintsFourRows) {
  const auto dir = scratch("cli_ablate");
  const auto log = synthetic_log(dir);
  write_all(dir / "cfg.json", R"({"embedding_dim": 6, "max_epochs": 1, "patience": 1})");
  const std::string common = " --config " + (dir / "cfg.json").string() + " --work-dir " + (dir / "work").string();
  ASSERT_EQ(run_cli("preprocess --input " + log.string() + common), 0);
  ASSERT_EQ(run_cli("build-graph" + common), 0);
  std::string out;
  ASSERT_EQ(run_cli("ablate --grid aggregation --format jsonl" + common, &out), 0) << out;
  std::istringstream lines(out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) rows += line.rfind("{\"name\"", 0) == 0;
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(fs::exists(dir / "work/reports/ablation-aggregation.txt"));
}
