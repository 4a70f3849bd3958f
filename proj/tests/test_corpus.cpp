#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gcegnn/corpus.hpp"

using namespace gcegnn::corpus;

namespace {

SessionCorpus make_corpus(std::vector<std::vector<int>> sessions, std::vector<std::int64_t> last = {}) {
  SessionCorpus c;
  int max_item = 0;
  for (const auto& s : sessions)
    for (int i : s) max_item = std::max(max_item, i);
  for (int i = 1; i <= max_item; ++i) c.vocab.intern("i" + std::to_string(i));
  for (std::size_t k = 0; k < sessions.size(); ++k) {
    c.sessions.push_back({"s" + std::to_string(k), sessions[k], last.empty() ? 0 : last[k]});
  }
  return c;
}

std::vector<std::vector<int>> raw_sequences(const SessionCorpus& c) {
  std::vector<std::vector<int>> out;
  for (const auto& s : c.sessions) {
    std::vector<int> raw;
    for (int i : s.items) raw.push_back(std::stoi(c.vocab.raw_id(i).substr(1)));
    out.push_back(raw);
  }
  return out;
}

}  // namespace

TEST(Corpus, ParseGroupsByTimestampOrder) {
  const std::vector<RawEvent> events{{"s1", "101", 1}, {"s1", "102", 2}};
  const auto c = parse_sessions(events);
  ASSERT_EQ(c.sessions.size(), 1u);
  EXPECT_EQ(c.sessions[0].items, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.vocab.find("101"), 1);
  EXPECT_EQ(c.vocab.find("102"), 2);
}

TEST(Corpus, ParseSortsByTimestampNotInputOrder) {
  const std::vector<RawEvent> events{{"s1", "101", 2}, {"s1", "102", 1}};
  const auto c = parse_sessions(events);
  EXPECT_EQ(c.sessions[0].items, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.vocab.raw_id(1), "102");
  EXPECT_EQ(c.sessions[0].last_timestamp, 2);
}

TEST(Corpus, ParseInterleavedSessions) {
  const std::vector<RawEvent> events{{"a", "1", 1}, {"b", "2", 1}, {"c", "3", 1},
                                     {"a", "4", 2}, {"b", "5", 2}, {"c", "6", 2}};
  const auto c = parse_sessions(events);
  ASSERT_EQ(c.sessions.size(), 3u);
  for (const auto& s : c.sessions) EXPECT_EQ(s.items.size(), 2u);
  EXPECT_EQ(c.sessions[0].key, "a");
}

TEST(Corpus, TimestampTiesKeepInputOrder) {
  const std::vector<RawEvent> events{{"s", "x", 5}, {"s", "y", 5}, {"s", "z", 4}};
  const auto c = parse_sessions(events);
  EXPECT_EQ(c.vocab.raw_id(c.sessions[0].items[0]), "z");
  EXPECT_EQ(c.vocab.raw_id(c.sessions[0].items[1]), "x");
  EXPECT_EQ(c.vocab.raw_id(c.sessions[0].items[2]), "y");
}

TEST(Corpus, ReadEventsDetectsHeaderAndDelimiter) {
  std::istringstream with_header("session_id;item_id;timestamp\n1;a;10\n\n1;b;11\n");
  const auto events = read_events(with_header, ';');
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[1].item_id, "b");
  EXPECT_EQ(events[1].timestamp, 11);
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  std::istringstream in("1,a,10\n1,b\n");
  try {
    read_events(in);
    FAIL() << "expected CorpusError";
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::istringstream negative("1,a,10\n1,b,-4\n");
  EXPECT_THROW(read_events(negative), CorpusError);
  std::istringstream empty_field("1,,10\n");
  EXPECT_THROW(read_events(empty_field), CorpusError);
}

TEST(Corpus, EmptyInputIsEmptyCorpus) {
  std::istringstream in("");
  const auto c = parse_sessions(read_events(in));
  EXPECT_TRUE(c.sessions.empty());
  EXPECT_EQ(c.item_count(), 0u);
}

TEST(Corpus, FilterSingletonIsEmpty) {
  EXPECT_THROW(filter_corpus(make_corpus({{5}})), CorpusError);
}

TEST(Corpus, FilterFrequencyThenLength) {
  const auto out = filter_corpus(make_corpus({{1, 2}, {2, 3}, {2, 3}}), 2, 2);
  EXPECT_EQ(raw_sequences(out), (std::vector<std::vector<int>>{{2, 3}, {2, 3}}));
  EXPECT_EQ(out.item_count(), 2u);
  EXPECT_EQ(out.sessions[0].items, (std::vector<int>{1, 2}));
}

TEST(Corpus, FilterLeavesCleanCorpusUnchanged) {
  std::vector<std::vector<int>> s;
  for (int k = 0; k < 5; ++k) s.push_back({1, 2, 3});
  const auto in = make_corpus(s);
  const auto out = filter_corpus(in);
  EXPECT_EQ(raw_sequences(out), raw_sequences(in));
}

TEST(Corpus, FilterIsIdempotentOnItsOutput) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<int>> s(30);
    for (auto& seq : s) {
      seq.resize(2 + rng() % 6);
      for (int& i : seq) i = 1 + static_cast<int>(rng() % 12);
    }
    SessionCorpus once;
    try {
      once = filter_corpus(make_corpus(s), 3, 2);
    } catch (const CorpusError&) {
      continue;
    }
    const auto twice = filter_corpus(once, 3, 2);
    ASSERT_EQ(once.sessions.size(), twice.sessions.size());
    for (std::size_t k = 0; k < once.sessions.size(); ++k) EXPECT_EQ(once.sessions[k].items, twice.sessions[k].items);
  }
}

TEST(Corpus, VocabularyIsDenseAfterFilter) {
  const auto out = filter_corpus(make_corpus({{1, 7, 9}, {9, 7, 1, 4}, {2, 4}}), 2, 2);
  std::vector<bool> seen(out.item_count() + 1, false);
  for (const auto& s : out.sessions)
    for (int i : s.items) {
      ASSERT_GE(i, 1);
      ASSERT_LE(static_cast<std::size_t>(i), out.item_count());
      seen[static_cast<std::size_t>(i)] = true;
    }
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_TRUE(seen[i]) << i;
}

TEST(Corpus, TemporalSplitByLastTimestamp) {
  const auto c = make_corpus({{1, 2}, {1, 2}}, {1 * kSecondsPerDay, 10 * kSecondsPerDay});
  const auto s = temporal_split(c);
  ASSERT_EQ(s.train.sessions.size(), 1u);
  ASSERT_EQ(s.test.sessions.size(), 1u);
  EXPECT_EQ(s.train.sessions[0].key, "s0");
  EXPECT_EQ(s.test.sessions[0].key, "s1");
}

TEST(Corpus, TemporalSplitStripsUnseenItems) {
  const auto c = make_corpus({{1, 2}, {1, 3}, {1, 2, 3}}, {1, 10 * kSecondsPerDay, 10 * kSecondsPerDay});
  const auto s = temporal_split(c);
  ASSERT_EQ(s.test.sessions.size(), 1u);
  EXPECT_EQ(s.test.sessions[0].key, "s2");
  EXPECT_EQ(raw_sequences(SessionCorpus{s.test.sessions, s.train.vocab}), (std::vector<std::vector<int>>{{1, 2}}));
  EXPECT_EQ(s.train.item_count(), 2u);
}

TEST(Corpus, TemporalSplitThirtyDays) {
  std::vector<std::vector<int>> seqs;
  std::vector<std::int64_t> last;
  for (int k = 0; k < 10; ++k) {
    seqs.push_back({1, 2});
    last.push_back(static_cast<std::int64_t>(3 * k + 3) * kSecondsPerDay);  // days 3, 6, ..., 30
  }
  const auto s = temporal_split(make_corpus(seqs, last));
  // Boundary is day 23: days 24, 27 and 30 are test.
  EXPECT_EQ(s.test.sessions.size(), 3u);
  EXPECT_EQ(s.train.sessions.size(), 7u);
  for (const auto& t : s.test.sessions) EXPECT_GT(t.last_timestamp, 23 * kSecondsPerDay);
}

TEST(Corpus, TemporalSplitEmptyPartitionIsError) {
  EXPECT_THROW(temporal_split(make_corpus({{1, 2}, {1, 2}}, {5, 6})), CorpusError);
}

TEST(Corpus, SplitSequencesWorkedExample) {
  const auto ex = split_sequences(make_corpus({{1, 2, 3}}), Split::train);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0], (Example{{1}, 2, Split::train}));
  EXPECT_EQ(ex[1], (Example{{1, 2}, 3, Split::train}));
}

TEST(Corpus, SplitSequencesRepeatedItem) {
  const auto ex = split_sequences(make_corpus({{7, 7}}), Split::test);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0], (Example{{7}, 7, Split::test}));
}

TEST(Corpus, SplitSequencesCount) {
  EXPECT_EQ(split_sequences(make_corpus({{1, 2}, {1, 2, 3}, {1, 2, 3, 4, 5}}), Split::train).size(), 7u);
}

TEST(Corpus, ValidationIsSeededFraction) {
  const auto base = split_sequences(make_corpus({std::vector<int>(101, 1)}), Split::train);
  auto a = base, b = base, c = base;
  assign_validation(a, 0.1, 42);
  assign_validation(b, 0.1, 42);
  assign_validation(c, 0.1, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(std::count_if(a.begin(), a.end(), [](const Example& e) { return e.split == Split::validation; }), 10);
}

TEST(Corpus, StatsCountClicksAndExamples) {
  const auto c = make_corpus({{1, 2, 3}, {2, 3}, {1, 3}}, {1, 2, 10 * kSecondsPerDay});
  const auto st = compute_stats(temporal_split(c));
  EXPECT_EQ(st.clicks, 7u);
  EXPECT_EQ(st.train_examples, 3u);
  EXPECT_EQ(st.test_examples, 1u);
  EXPECT_EQ(st.items, 3u);
  EXPECT_NEAR(st.average_length, 7.0 / 3.0, 1e-12);
}

TEST(Corpus, FilesRoundTrip) {
  const std::vector<Example> ex{{{1, 2}, 3, Split::train}, {{4}, 1, Split::validation}, {{2, 2, 2}, 5, Split::test}};
  std::stringstream buf;
  write_examples(buf, ex);
  EXPECT_EQ(read_examples(buf), ex);
  EXPECT_EQ(ex.size(), 3u);

  Vocabulary v;
  v.intern("x");
  v.intern("y z");
  std::stringstream vb;
  write_vocab(vb, v);
  const auto v2 = read_vocab(vb);
  EXPECT_EQ(v2.raw_ids(), v.raw_ids());

  const std::vector<Session> ss{{"k1", {1, 2}, 7}, {"k2", {3, 1, 3}, 9}};
  std::stringstream sb;
  write_sessions(sb, ss);
  const auto back = read_sessions(sb);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].items, ss[1].items);
  EXPECT_EQ(back[1].last_timestamp, 9);
}

TEST(Corpus, ExamplesFileFormat) {
  std::ostringstream out;
  const std::vector<Example> ex{{{1, 2}, 3, Split::train}};
  write_examples(out, ex);
  EXPECT_EQ(out.str(), "1 2\t3\ttrain\n");
}

TEST(Corpus, PipelineIsDeterministic) {
  std::ostringstream log;
  std::mt19937_64 rng(8);
  for (int e = 0; e < 400; ++e)
    log << rng() % 40 << ',' << rng() % 15 << ',' << e * 3000 + static_cast<int>(rng() % 100) << '\n';
  auto run = [&] {
    std::istringstream in(log.str());
    const auto split = temporal_split(filter_corpus(parse_sessions(read_events(in)), 2, 2), 2 * kSecondsPerDay);
    auto ex = split_sequences(split.train, Split::train);
    assign_validation(ex, 0.1, 7);
    std::ostringstream out;
    write_examples(out, ex);
    return out.str();
  };
  EXPECT_EQ(run(), run());
}
