#include <gtest/gtest.h>

#include <random>

#include "spanclean/corpus.h"
#include "spanclean/errors.h"

namespace spanclean {
namespace {

TEST(LabelSetTest, IndicesAndNames) {
  LabelSet labels({"PER", "LOC"});
  EXPECT_EQ(labels.num_types(), 2);
  EXPECT_EQ(labels.num_classes(), 3);
  EXPECT_EQ(labels.fake_label(), 3);
  EXPECT_EQ(labels.name(0), "O");
  EXPECT_EQ(labels.name(2), "LOC");
  EXPECT_EQ(*labels.find("PER"), 1);
  EXPECT_FALSE(labels.find("ORG"));
  EXPECT_EQ(labels.intern("ORG"), 3);
  EXPECT_EQ(labels.intern("PER"), 1);
}

TEST(LabelSetTest, RejectsDuplicatesAndEmptyNames) {
  EXPECT_THROW(LabelSet({"PER", "PER"}), ConfigError);
  EXPECT_THROW(LabelSet({""}), ConfigError);
}

TEST(BioTest, ParsesRuns) {
  const auto d = ParseBio("John\tB-PER\nSmith\tI-PER\nvisited\tO\nParis\tB-LOC\n\nHi\tO\n");
  ASSERT_EQ(d.sentences.size(), 2u);
  EXPECT_EQ(d.sentences[0].distant_spans,
            (std::vector<Span>{{0, 1, 1}, {3, 3, 2}}));
  EXPECT_TRUE(d.sentences[1].distant_spans.empty());
  EXPECT_FALSE(d.sentences[0].gold_spans.has_value());
}

TEST(BioTest, OrphanInsideOpensSpan) {
  const auto d = ParseBio("a\tO\nb\tI-PER\nc\tI-LOC\n");
  EXPECT_EQ(d.sentences[0].distant_spans, (std::vector<Span>{{1, 1, 1}, {2, 2, 2}}));
}

TEST(BioTest, AdjacentBeginsSplit) {
  const auto d = ParseBio("a\tB-PER\nb\tB-PER\n");
  EXPECT_EQ(d.sentences[0].distant_spans, (std::vector<Span>{{0, 0, 1}, {1, 1, 1}}));
}

TEST(BioTest, ErrorsCarryLineNumbers) {
  try {
    ParseBio("a\tO\nb O\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(ParseBio("a\tX-PER\n"), ParseError);
  LabelSet known({"PER"});
  EXPECT_THROW(ParseBio("a\tB-LOC\n", &known), ParseError);
}

TEST(BioTest, RoundTripOnRandomCorpora) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    SpanDataset d;
    d.labels = LabelSet({"A", "B", "C"});
    const int sentences = 1 + static_cast<int>(rng() % 5);
    for (int s = 0; s < sentences; ++s) {
      Sentence sentence;
      const int n = 1 + static_cast<int>(rng() % 12);
      for (int t = 0; t < n; ++t) sentence.tokens.push_back("t" + std::to_string(rng() % 30));
      int pos = 0;
      while (pos < n) {
        if (rng() % 3 == 0) {
          const int w = std::min<int>(n - pos, 1 + static_cast<int>(rng() % 3));
          sentence.distant_spans.push_back({pos, pos + w - 1, 1 + static_cast<int>(rng() % 3)});
          pos += w;
        } else {
          ++pos;
        }
      }
      d.sentences.push_back(sentence);
    }
    const auto back = ParseBio(WriteBio(d), &d.labels);
    ASSERT_EQ(back.sentences.size(), d.sentences.size());
    for (size_t i = 0; i < d.sentences.size(); ++i) {
      EXPECT_EQ(back.sentences[i].tokens, d.sentences[i].tokens);
      EXPECT_EQ(back.sentences[i].distant_spans, d.sentences[i].distant_spans);
    }
  }
}

TEST(BioTest, WriteRejectsOverlap) {
  SpanDataset d;
  d.labels = LabelSet({"A"});
  d.sentences.push_back({{"a", "b"}, std::nullopt, {{0, 1, 1}, {1, 1, 1}}});
  EXPECT_THROW(WriteBio(d), ContractViolation);
}

TEST(SpansFormatTest, RoundTripIsCanonical) {
  const std::string text =
      "{\"label_set\":[\"PER\",\"LOC\"]}\n"
      "{\"tokens\":[\"a\",\"b\",\"c\"],\"spans\":[{\"start\":2,\"end\":2,\"label\":\"LOC\"},"
      "{\"start\":0,\"end\":1,\"label\":\"PER\"}],\"gold_spans\":[],"
      "\"masked_spans\":[{\"start\":1,\"end\":2}]}\n";
  const auto d = ParseSpans(text);
  EXPECT_EQ(d.sentences[0].distant_spans.size(), 2u);
  EXPECT_TRUE(d.mask_list.contains({0, 1, 2}));
  EXPECT_TRUE(d.has_gold());
  const std::string once = WriteSpans(d);
  EXPECT_EQ(WriteSpans(ParseSpans(once)), once);
}

TEST(SpansFormatTest, Errors) {
  EXPECT_THROW(ParseSpans("{\"tokens\":[]}"), ParseError);
  EXPECT_THROW(ParseSpans("{\"tokens\":[\"a\"],\"spans\":[{\"start\":0,\"end\":1,\"label\":\"X\"}]}"),
               ParseError);
  EXPECT_THROW(ParseSpans("{\"tokens\":[\"a\"],\"spans\":[{\"start\":0,\"end\":0,\"label\":\"X\"},"
                          "{\"start\":0,\"end\":0,\"label\":\"X\"}]}"),
               ParseError);
  EXPECT_THROW(ParseSpans("{\"label_set\":[\"X\"]}\n{\"tokens\":[\"a\"],\"spans\":[{\"start\":0,"
                          "\"end\":0,\"label\":\"Y\"}]}"),
               ParseError);
  EXPECT_THROW(ParseSpans("not json"), ParseError);
}

TEST(SpansFormatTest, AttachGoldMatchesByName) {
  auto d = ParseSpans("{\"tokens\":[\"a\",\"b\"],\"spans\":[{\"start\":0,\"end\":0,\"label\":\"A\"}]}");
  const auto gold = ParseSpans(
      "{\"tokens\":[\"a\",\"b\"],\"spans\":[{\"start\":1,\"end\":1,\"label\":\"B\"},"
      "{\"start\":0,\"end\":0,\"label\":\"A\"}]}");
  AttachGold(d, gold);
  EXPECT_EQ(d.labels.num_types(), 2);
  EXPECT_EQ(*d.sentences[0].gold_spans, (std::vector<Span>{{0, 0, 1}, {1, 1, 2}}));
  const auto other = ParseSpans("{\"tokens\":[\"x\",\"b\"]}");
  EXPECT_THROW(AttachGold(d, other), DataError);
}

TEST(EnumerateTest, CountMatchesBruteForce) {
  for (int n = 1; n <= 20; ++n) {
    for (int L = 0; L <= 10; ++L) {
      size_t brute = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          if (j - i <= L) ++brute;
      EXPECT_EQ(CandidateSpanCount(n, L), brute) << n << " " << L;
    }
  }
}

TEST(EnumerateTest, LabelsMaskAndOrder) {
  SpanDataset d;
  d.labels = LabelSet({"A", "B"});
  d.sentences.push_back({{"a", "b", "c"}, std::nullopt, {{0, 1, 2}}});
  d.sentences.push_back({{"x", "y"}, std::nullopt, {}});
  d.mask_list.insert({1, 0, 1});
  const auto e = EnumerateSamples(d, 8);
  EXPECT_TRUE(e.enumerated());
  ASSERT_EQ(e.samples.size(), 6u + 3u - 1u);
  EXPECT_TRUE(std::is_sorted(e.samples.begin(), e.samples.end(),
                             [](const SpanSample& a, const SpanSample& b) { return a.key() < b.key(); }));
  size_t positives = 0;
  for (const auto& s : e.samples) {
    if (s.positive()) {
      ++positives;
      EXPECT_EQ(s.key(), (SampleKey{0, 0, 1}));
      EXPECT_EQ(s.assigned_label, 2);
    }
    EXPECT_NE(s.key(), (SampleKey{1, 0, 1}));
  }
  EXPECT_EQ(positives, 1u);
}

TEST(EnumerateTest, OverwidthPositivesDropped) {
  SpanDataset d;
  d.labels = LabelSet({"A"});
  d.sentences.push_back({{"a", "b", "c", "d"}, std::nullopt, {{0, 3, 1}}});
  const auto e = EnumerateSamples(d, 1);
  for (const auto& s : e.samples) EXPECT_FALSE(s.positive());
  EXPECT_EQ(e.samples.size(), CandidateSpanCount(4, 1));
  const auto stats = ComputeStats(e);
  EXPECT_EQ(stats.overwidth_spans, 1u);
  EXPECT_EQ(stats.positives, 0u);
}

TEST(EnumerateTest, ConflictingLabelsAreDataErrors) {
  SpanDataset d;
  d.labels = LabelSet({"A", "B"});
  d.sentences.push_back({{"a"}, std::nullopt, {{0, 0, 1}, {0, 0, 2}}});
  EXPECT_THROW(EnumerateSamples(d, 8), DataError);
}

TEST(StatsTest, Counts) {
  SpanDataset d;
  d.labels = LabelSet({"A", "B"});
  d.sentences.push_back({{"a", "b", "c"}, std::vector<Span>{{0, 0, 1}}, {{0, 0, 1}, {2, 2, 2}}});
  const auto stats = ComputeStats(EnumerateSamples(d, 8));
  EXPECT_EQ(stats.sentences, 1u);
  EXPECT_EQ(stats.tokens, 3u);
  EXPECT_EQ(stats.positives, 2u);
  EXPECT_EQ(stats.negatives, 4u);
  EXPECT_EQ(stats.positives_per_class, (std::vector<size_t>{0, 1, 1}));
  EXPECT_EQ(stats.gold_spans, 1u);
}

}  // namespace
}  // namespace spanclean
