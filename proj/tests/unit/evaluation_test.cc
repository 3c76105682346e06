#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "spanclean/distant.h"
#include "spanclean/errors.h"
#include "spanclean/evaluation.h"

namespace spanclean {
namespace {

using Layer = std::vector<std::vector<Span>>;

TEST(ScoreTest, HandBuiltCounts) {
  // tp=1, fp=1, fn=1.
  const auto r = ScoreSpans({{{0, 0, 1}, {2, 3, 1}}}, {{{0, 0, 1}, {2, 3, 2}}}, 2);
  EXPECT_EQ(r.micro.tp, 1u);
  EXPECT_EQ(r.micro.fp, 1u);
  EXPECT_EQ(r.micro.fn, 1u);
  EXPECT_DOUBLE_EQ(r.micro.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.micro.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.micro.f1, 0.5);
  EXPECT_EQ(r.per_class[1].tp, 1u);
  EXPECT_EQ(r.per_class[1].fp, 1u);
  EXPECT_EQ(r.per_class[2].fn, 1u);
}

TEST(ScoreTest, EmptyAndPerfect) {
  const Layer gold{{{0, 1, 1}}, {{2, 2, 2}}};
  const auto none = ScoreSpans({{}, {}}, gold, 2);
  EXPECT_EQ(none.micro.precision, 0.0);
  EXPECT_EQ(none.micro.recall, 0.0);
  EXPECT_EQ(none.micro.f1, 0.0);
  EXPECT_EQ(ScoreSpans(gold, gold, 2).micro.f1, 1.0);
  const auto nothing = ScoreSpans({{}}, {{}}, 2);
  EXPECT_EQ(nothing.micro.f1, 0.0);
  EXPECT_THROW(ScoreSpans({{}}, gold, 2), ContractViolation);
}

TEST(ScoreTest, EachGoldMatchesOnce) {
  const auto r = ScoreSpans({{{0, 1, 1}, {0, 1, 1}}}, {{{0, 1, 1}}}, 1);
  EXPECT_EQ(r.micro.tp, 1u);
  EXPECT_EQ(r.micro.fp, 1u);
}

TEST(ScoreTest, BoundaryAndTypeMustMatch) {
  const auto r = ScoreSpans({{{0, 1, 1}, {3, 3, 2}}}, {{{0, 2, 1}, {3, 3, 1}}}, 2);
  EXPECT_EQ(r.micro.tp, 0u);
  EXPECT_EQ(r.micro.fp, 2u);
  EXPECT_EQ(r.micro.fn, 2u);
}

TEST(ScoreTest, SentencePermutationInvariant) {
  std::mt19937_64 rng(2);
  Layer pred, gold;
  for (int s = 0; s < 30; ++s) {
    pred.emplace_back();
    gold.emplace_back();
    for (int k = 0; k < 3; ++k) {
      const int a = static_cast<int>(rng() % 5);
      if (rng() % 2) pred.back().push_back({a, a + 1, 1 + static_cast<int>(rng() % 2)});
      if (rng() % 2) gold.back().push_back({a, a + 1, 1 + static_cast<int>(rng() % 2)});
    }
  }
  const auto base = ScoreSpans(pred, gold, 2);
  std::vector<size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Layer p2, g2;
  for (size_t i : order) {
    p2.push_back(pred[i]);
    g2.push_back(gold[i]);
  }
  const auto shuffled = ScoreSpans(p2, g2, 2);
  EXPECT_EQ(shuffled.micro.tp, base.micro.tp);
  EXPECT_EQ(shuffled.micro.fp, base.micro.fp);
  EXPECT_EQ(shuffled.micro.fn, base.micro.fn);
}

SpanDataset WithGold(std::vector<Span> distant, std::vector<Span> gold) {
  SpanDataset d;
  d.labels = LabelSet({"A", "B"});
  d.sentences.push_back({{"a", "b", "c", "d", "e"}, gold, distant});
  return d;
}

TEST(AuditTest, Counts) {
  const auto same = AuditNoise(WithGold({{0, 0, 1}, {2, 3, 2}}, {{0, 0, 1}, {2, 3, 2}}));
  EXPECT_EQ(same[1].false_annotations(), 0u);
  EXPECT_EQ(same[2].false_annotations(), 0u);
  EXPECT_EQ(same[1].true_positives, 1u);

  // A: one right, one wrong type (gold B), B: one missing.
  const auto a = AuditNoise(WithGold({{0, 0, 1}, {2, 3, 1}}, {{0, 0, 1}, {2, 3, 2}, {4, 4, 2}}));
  EXPECT_EQ(a[1].positives, 2u);
  EXPECT_EQ(a[1].true_positives, 1u);
  EXPECT_EQ(a[1].false_positives, 1u);
  EXPECT_EQ(a[1].false_negatives, 0u);
  EXPECT_EQ(a[2].positives, 0u);
  EXPECT_EQ(a[2].false_negatives, 2u);
}

TEST(AuditTest, MaskedGoldIsNotAFalseNegative) {
  auto d = WithGold({}, {{1, 2, 1}});
  EXPECT_EQ(AuditNoise(d)[1].false_negatives, 1u);
  d.mask_list.insert({0, 1, 2});
  EXPECT_EQ(AuditNoise(d)[1].false_negatives, 0u);
}

TEST(AuditTest, NeedsGold) {
  SpanDataset d;
  d.labels = LabelSet({"A"});
  d.sentences.push_back({{"a"}, std::nullopt, {}});
  EXPECT_THROW(AuditNoise(d), DataError);
}

TEST(RocAucTest, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<char> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(RocAuc(s, y), 0.75);
  const std::vector<double> tied{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(RocAuc(tied, y), 0.5);
  const std::vector<char> one_class{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(RocAuc(s, one_class), 0.5);
}

TEST(RocAucTest, MatchesPairCounting) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 2 + rng() % 40;
    std::vector<double> s(n);
    std::vector<char> y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7);
      y[i] = static_cast<char>(rng() % 2);
    }
    double wins = 0, pairs = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        if (y[i] && !y[j]) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    const double expected = pairs == 0 ? 0.5 : wins / pairs;
    EXPECT_NEAR(RocAuc(s, y), expected, 1e-12);
  }
}

std::vector<DynamicsRecord> RandomRecords(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DynamicsRecord> records;
  for (size_t i = 0; i < n; ++i) {
    DynamicsRecord r;
    r.key = {static_cast<int>(i / 10), static_cast<int>(i % 10), static_cast<int>(i % 10)};
    r.assigned_label = static_cast<int>(i % 3);
    for (int e = 0; e < 3; ++e) {
      const double p = u(rng);
      r.probs.push_back(p);
      r.margins.push_back(std::log(p / (1 - p)) + u(rng) * 0.1);
    }
    Finalize(r);
    records.push_back(r);
  }
  return records;
}

TEST(DatamapTest, RoundTripAndRowCount) {
  const auto records = RandomRecords(57, 1);
  const auto rows = ParseDatamapCsv(WriteDatamapCsv(records));
  ASSERT_EQ(rows.size(), records.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].key, records[i].key);
    EXPECT_EQ(rows[i].label, records[i].assigned_label);
    EXPECT_EQ(rows[i].aum, records[i].aum);
    EXPECT_EQ(rows[i].confidence, records[i].confidence);
    EXPECT_EQ(rows[i].variability, records[i].variability);
    EXPECT_EQ(rows[i].is_positive, records[i].assigned_label > 0);
  }
}

TEST(DatamapTest, EmptyInput) {
  const auto csv = WriteDatamapCsv({});
  EXPECT_TRUE(ParseDatamapCsv(csv).empty());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  const auto svg = RenderDatamapSvg({});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(svg.find("r=\"2\""), std::string::npos);
}

TEST(DatamapTest, LowestAumDecileHasLowConfidence) {
  const auto records = RandomRecords(500, 2);
  std::vector<const DynamicsRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->aum < b->aum; });
  double low = 0, all = 0;
  for (size_t i = 0; i < sorted.size(); ++i) {
    all += sorted[i]->confidence;
    if (i < sorted.size() / 10) low += sorted[i]->confidence;
  }
  EXPECT_LT(low / (sorted.size() / 10), all / sorted.size());
}

TEST(DatamapTest, ExportWritesBothFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "spanclean_datamap_test";
  std::filesystem::remove_all(dir);
  const auto records = RandomRecords(12, 3);
  ExportDatamap(records, dir / "map");
  EXPECT_TRUE(std::filesystem::exists(dir / "map.csv"));
  const auto svg = ReadTextFile(dir / "map.svg");
  size_t points = 0;
  for (size_t pos = 0; (pos = svg.find("r=\"2\"", pos)) != std::string::npos; ++pos) ++points;
  EXPECT_EQ(points, records.size());
  EXPECT_THROW(ExportDatamap(records, "/proc/no/such/dir/map"), IoError);
}

}  // namespace
}  // namespace spanclean
