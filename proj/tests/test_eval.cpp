#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "gcegnn/ablation.hpp"
#include "gcegnn/eval.hpp"
#include "gcegnn/toy.hpp"

using namespace gcegnn::eval;
namespace model = gcegnn::model;
namespace corpus = gcegnn::corpus;

TEST(Rank, UniqueMaxIsFirst) {
  const std::vector<double> s{0.1, 0.7, 0.3};
  EXPECT_EQ(rank_of(s, 1), 1u);
}

TEST(Rank, TiesFavorSmallerIndex) {
  const std::vector<double> s(5, 0.25);
  EXPECT_EQ(rank_of(s, 0), 1u);
  EXPECT_EQ(rank_of(s, 3), 4u);
}

TEST(Rank, HandSorted) {
  const std::vector<double> s{0.2, 0.9, 0.5};
  EXPECT_EQ(rank_of(s, 0), 3u);
}

TEST(Metrics, SingleTopHit) {
  const std::vector<std::size_t> r{1};
  const auto m = metrics(r, 10);
  EXPECT_DOUBLE_EQ(m.precision, 100.0);
  EXPECT_DOUBLE_EQ(m.mrr, 100.0);
}

TEST(Metrics, WindowBoundary) {
  const std::vector<std::size_t> r{11};
  EXPECT_DOUBLE_EQ(metrics(r, 10).precision, 0.0);
  EXPECT_DOUBLE_EQ(metrics(r, 10).mrr, 0.0);
  EXPECT_DOUBLE_EQ(metrics(r, 20).precision, 100.0);
  EXPECT_DOUBLE_EQ(metrics(r, 20).mrr, 100.0 / 11.0);
}

TEST(Metrics, HandAverage) {
  const std::vector<std::size_t> r{1, 2, 4};
  EXPECT_DOUBLE_EQ(metrics(r, 10).precision, 100.0);
  EXPECT_NEAR(metrics(r, 10).mrr, 58.33, 0.005);
}

TEST(Metrics, EmptyIsError) {
  EXPECT_THROW(metrics(std::vector<std::size_t>{}, 10), std::invalid_argument);
  EXPECT_THROW(metrics(std::vector<std::size_t>{0}, 10), std::invalid_argument);
}

TEST(Metrics, MatchesSortAndScan) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> ranks;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> s(50);
    for (double& v : s) v = std::round(u(rng) * 20.0);  // coarse values force ties
    const std::size_t label = rng() % 50;
    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    const auto expected = static_cast<std::size_t>(std::find(order.begin(), order.end(), label) - order.begin()) + 1;
    ASSERT_EQ(rank_of(s, label), expected);
    ranks.push_back(expected);
  }
  const auto r = report_from_ranks(ranks, "x", "");
  EXPECT_LE(r.p10, r.p20);
  EXPECT_LE(r.mrr10, r.mrr20);
  EXPECT_LE(r.mrr10, r.p10);
  EXPECT_LE(r.mrr20, r.p20);
}

TEST(Reports, TableAndJsonl) {
  const std::vector<std::size_t> ranks{1, 3, 25};
  std::vector<EvalReport> reports{report_from_ranks(ranks, "sum", "abc")};
  EvalReport failed;
  failed.name = "gate";
  failed.error = "boom";
  reports.push_back(failed);
  std::ostringstream table, lines;
  write_reports(table, reports, ReportFormat::table);
  write_reports(lines, reports, ReportFormat::jsonl);
  EXPECT_NE(table.str().find("66.67"), std::string::npos) << table.str();
  EXPECT_NE(table.str().find("failed: boom"), std::string::npos);
  const std::string jsonl = lines.str();
  EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 2);
  EXPECT_NE(lines.str().find("\"P@20\":66.66666666666667"), std::string::npos) << lines.str();
  EXPECT_THROW(parse_report_format("xml"), std::invalid_argument);
}

TEST(Ablation, GridSizes) {
  model::ModelConfig base;
  base.max_length = 5;
  EXPECT_EQ(ablation_grid("global", base).size(), 4u);
  EXPECT_EQ(ablation_grid("position", base).size(), 3u);
  EXPECT_EQ(ablation_grid("aggregation", base).size(), 4u);
  const std::vector<double> rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  EXPECT_EQ(ablation_grid("dropout", base, rates).size(), 9u);
  EXPECT_THROW(ablation_grid("nope", base), std::invalid_argument);
  const auto g = ablation_grid("global", base);
  EXPECT_EQ(g[0].model.hops, 0);
  EXPECT_FALSE(g[1].model.use_session_layer);
  EXPECT_EQ(g[3].model.hops, 2);
}

TEST(Ablation, SharedDataAndFailureIsolation) {
  corpus::SessionCorpus c;
  c.sessions = gcegnn::toy::pattern_sessions(20, 5, 20, 4);
  const auto examples = corpus::split_sequences(c, corpus::Split::train);
  const auto graph = gcegnn::graphs::build_global_graph(c.sessions, 20, 3, 12);
  AblationData data;
  data.train = examples;
  data.validation = std::span(examples).subspan(0, 10);
  data.test = std::span(examples).subspan(10, 20);
  data.graph = &graph;
  data.item_count = 20;
  data.data_fingerprint = "data";
  model::ModelConfig base;
  base.dim = 6;
  base.max_length = 7;
  auto variants = ablation_grid("aggregation", base);
  variants[1].model.max_length = 2;  // every prefix longer than 2 fails
  gcegnn::train::TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 2;
  const auto out = run_ablations(data, variants, tc);
  ASSERT_EQ(out.reports.size(), 4u);
  EXPECT_FALSE(out.reports[1].ok());
  for (std::size_t i : {0u, 2u, 3u}) {
    EXPECT_TRUE(out.reports[i].ok()) << out.reports[i].error;
    EXPECT_EQ(out.reports[i].examples, 20u);
  }
  for (const auto& r : out.reports) EXPECT_EQ(r.data_fingerprint, "data");
  ASSERT_TRUE(out.best.has_value());
  EXPECT_NE(*out.best, 1u);
}
