#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "gcegnn/graphs.hpp"

using namespace gcegnn::graphs;
using gcegnn::corpus::Session;

namespace {

std::vector<Session> sessions(std::vector<std::vector<int>> seqs) {
  std::vector<Session> out;
  for (auto& s : seqs) out.push_back({"", std::move(s), 0});
  return out;
}

std::int64_t weight(const PairWeights& w, int a, int b) {
  auto it = w.find(pair_key(a, b));
  return it == w.end() ? 0 : it->second;
}

// Tallies every (i, j) with 0 < j - i <= epsilon directly.
std::map<std::pair<int, int>, std::int64_t> brute_force(const std::vector<Session>& ss, int epsilon) {
  std::map<std::pair<int, int>, std::int64_t> w;
  for (const auto& s : ss)
    for (std::size_t i = 0; i < s.items.size(); ++i)
      for (std::size_t j = 0; j < s.items.size(); ++j) {
        if (j <= i || j - i > static_cast<std::size_t>(epsilon)) continue;
        const int a = s.items[i], b = s.items[j];
        if (a != b) ++w[{std::min(a, b), std::max(a, b)}];
      }
  return w;
}

}  // namespace

TEST(SessionGraph, SingleItemHasOnlySelf) {
  const std::vector<int> seq{1};
  const auto g = build_session_graph(seq);
  ASSERT_EQ(g.nodes.size(), 1u);
  ASSERT_EQ(g.edges[0].size(), 1u);
  EXPECT_EQ(g.edges[0][0].relation, Relation::self);
}

TEST(SessionGraph, BackAndForthIsInOut) {
  const std::vector<int> seq{1, 2, 3, 2};
  const auto g = build_session_graph(seq);
  EXPECT_EQ(g.nodes, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(g.position_node, (std::vector<int>{0, 1, 2, 1}));
  EXPECT_EQ(g.relation(1, 2), Relation::in_out);
  EXPECT_EQ(g.relation(2, 1), Relation::in_out);
  EXPECT_EQ(g.relation(0, 1), Relation::out);
  EXPECT_EQ(g.relation(1, 0), Relation::in);
  EXPECT_EQ(g.relation(0, 2), std::nullopt);
  int selfs = 0;
  for (const auto& edges : g.edges)
    for (const auto& e : edges) selfs += e.relation == Relation::self;
  EXPECT_EQ(selfs, 3);
}

TEST(SessionGraph, RepeatedClickCollapsesIntoSelf) {
  const std::vector<int> seq{1, 1, 2};
  const auto g = build_session_graph(seq);
  EXPECT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.edges[0].size(), 2u);
  EXPECT_EQ(g.relation(0, 0), Relation::self);
  EXPECT_EQ(g.relation(0, 1), Relation::out);
  EXPECT_EQ(g.relation(1, 0), Relation::in);
}

TEST(SessionGraph, EmptySequenceIsError) {
  EXPECT_THROW(build_session_graph(std::vector<int>{}), std::invalid_argument);
}

TEST(SessionGraph, TransitionsRoundTrip) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> seq(1 + rng() % 12);
    for (int& i : seq) i = 1 + static_cast<int>(rng() % 6);
    const auto g = build_session_graph(seq);
    std::set<std::pair<int, int>> expected, recovered;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t)
      if (seq[t] != seq[t + 1]) expected.emplace(seq[t], seq[t + 1]);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      for (const auto& e : g.edges[i]) {
        const int a = g.nodes[i], b = g.nodes[static_cast<std::size_t>(e.neighbor)];
        if (e.relation == Relation::out || e.relation == Relation::in_out) recovered.emplace(a, b);
      }
    EXPECT_EQ(recovered, expected);
  }
}

TEST(GlobalGraph, WindowOneCounts) {
  // a=1 b=2 c=3 d=4
  const auto w = count_cooccurrences(sessions({{1, 2, 3}, {2, 1, 4}}), 1);
  EXPECT_EQ(weight(w, 1, 2), 2);
  EXPECT_EQ(weight(w, 2, 3), 1);
  EXPECT_EQ(weight(w, 1, 4), 1);
  EXPECT_EQ(w.size(), 3u);
}

TEST(GlobalGraph, WindowTwoAddsSkipPairs) {
  const auto w = count_cooccurrences(sessions({{1, 2, 3}, {2, 1, 4}}), 2);
  EXPECT_EQ(weight(w, 1, 3), 1);
  EXPECT_EQ(weight(w, 2, 4), 1);
  EXPECT_EQ(w.size(), 5u);
}

TEST(GlobalGraph, SinglePair) {
  const auto g = build_global_graph(sessions({{1, 2}}), 2, 3, 1);
  EXPECT_EQ(std::vector<Neighbor>(g.neighbors(1).begin(), g.neighbors(1).end()), (std::vector<Neighbor>{{2, 1}}));
  EXPECT_EQ(std::vector<Neighbor>(g.neighbors(2).begin(), g.neighbors(2).end()), (std::vector<Neighbor>{{1, 1}}));
}

TEST(GlobalGraph, IsolatedItemAndUnknownItem) {
  const auto g = build_global_graph(sessions({{1, 2}}), 3);
  EXPECT_TRUE(g.neighbors(3).empty());
  EXPECT_THROW(g.neighbors(4), std::out_of_range);
  EXPECT_THROW(g.neighbors(0), std::out_of_range);
}

TEST(GlobalGraph, TruncatesToTopN) {
  std::vector<std::vector<int>> seqs;
  for (int j = 2; j <= 16; ++j) seqs.push_back({1, j});
  const auto g = build_global_graph(sessions(seqs), 16, 3, 12);
  EXPECT_EQ(g.neighbors(1).size(), 12u);
}

TEST(GlobalGraph, TieBreakByAscendingItem) {
  // Item 1 has weights {2:3, 3:3, 4:1}.
  PairWeights w{{pair_key(1, 3), 3}, {pair_key(1, 2), 3}, {pair_key(1, 4), 1}};
  const GlobalGraph g(4, w, 2);
  EXPECT_EQ(std::vector<Neighbor>(g.neighbors(1).begin(), g.neighbors(1).end()),
            (std::vector<Neighbor>{{2, 3}, {3, 3}}));
}

TEST(GlobalGraph, MatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<int>> seqs(1 + rng() % 40);
    for (auto& s : seqs) {
      s.resize(1 + rng() % 9);
      for (int& i : s) i = 1 + static_cast<int>(rng() % 20);
    }
    const auto ss = sessions(seqs);
    const int eps = 1 + static_cast<int>(rng() % 3);
    const auto w = count_cooccurrences(ss, eps);
    const auto oracle = brute_force(ss, eps);
    ASSERT_EQ(w.size(), oracle.size());
    for (const auto& [pair, n] : oracle) EXPECT_EQ(weight(w, pair.first, pair.second), n);
  }
}

TEST(GlobalGraph, EpsilonAndTopNMonotone) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<int>> seqs(30);
  for (auto& s : seqs) {
    s.resize(2 + rng() % 8);
    for (int& i : s) i = 1 + static_cast<int>(rng() % 15);
  }
  const auto ss = sessions(seqs);
  for (int eps = 1; eps < 4; ++eps) {
    const auto small = count_cooccurrences(ss, eps), large = count_cooccurrences(ss, eps + 1);
    for (const auto& [k, v] : small) {
      ASSERT_TRUE(large.count(k));
      EXPECT_LE(v, large.at(k));
    }
  }
  const auto w = count_cooccurrences(ss, 3);
  for (std::size_t n = 1; n < 10; ++n) {
    const GlobalGraph a(15, w, n), b(15, w, n + 1);
    for (int item = 1; item <= 15; ++item)
      for (const auto& nb : a.neighbors(item)) {
        const auto kept = b.neighbors(item);
        EXPECT_NE(std::find(kept.begin(), kept.end(), nb), kept.end());
      }
  }
}

TEST(GlobalGraph, InvalidArguments) {
  EXPECT_THROW(count_cooccurrences(sessions({{1, 2}}), 0), std::invalid_argument);
  EXPECT_THROW(GlobalGraph(2, PairWeights{}, 0), std::invalid_argument);
}

TEST(GlobalGraph, ExportRoundTrip) {
  const auto g = build_global_graph(sessions({{1, 2, 3, 1}, {3, 4, 2}}), 5, 2, 2);
  std::stringstream buf;
  write_global_graph(buf, g);
  EXPECT_EQ(buf.str().substr(0, 12), "1\t2\t2\n1\t3\t2\n");
  EXPECT_EQ(read_global_graph(buf, 5), g);
  std::istringstream bad("1\t1\t3\n");
  EXPECT_THROW(read_global_graph(bad, 5), std::runtime_error);
}
