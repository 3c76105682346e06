#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "spanclean/distant.h"
#include "spanclean/errors.h"
#include "spanclean/pipeline.h"

namespace spanclean {
namespace {

NoisyCorpus SmallNoisy(uint64_t seed) {
  SyntheticConfig synth;
  synth.seed = seed;
  synth.num_sentences = 60;
  NoiseSpec noise;
  noise.seed = seed;
  noise.fp_spurious_rate = 0.3;
  return InjectNoise(GenerateSynthetic(synth).dataset, noise);
}

CleanConfig SmallConfig(uint64_t seed) {
  CleanConfig c;
  c.model.embed_dim = 8;
  c.model.hidden_dim = 16;
  c.model.width_embed_dim = 8;
  c.model.window_radius = 1;
  c.model.max_width = 4;
  c.epochs = 3;
  c.k_pos = 90;
  c.adam.learning_rate = 3e-3;
  c.train.loss.topneg = true;
  c.seed = seed;
  return c;
}

void CheckFilter(const SpanDataset& input, const CleaningResult& r, bool masks_positives) {
  const SpanDataset d = EnumerateSamples(input, r.cleaned.max_width);
  ASSERT_EQ(r.main_dynamics.size(), d.samples.size());
  const auto& tau = r.report.thresholds;
  std::set<SampleKey> original;
  for (const auto& s : d.samples) original.insert(s.key());
  for (const auto& s : r.cleaned.samples) EXPECT_TRUE(original.contains(s.key()));

  size_t removed = 0;
  for (size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    const auto& rec = r.main_dynamics[i];
    ASSERT_EQ(rec.key, s.key());
    const bool keep = rec.aum >= (s.positive() ? tau.tau_pos : tau.tau_neg);
    EXPECT_EQ(static_cast<bool>(r.kept[i]), keep);
    const auto& distant = r.cleaned.sentences[s.sentence_id].distant_spans;
    const bool still_labeled =
        std::find(distant.begin(), distant.end(), Span{s.start, s.end, s.assigned_label}) !=
        distant.end();
    const bool masked = r.cleaned.mask_list.contains(s.key());
    if (keep) {
      EXPECT_FALSE(masked);
      if (s.positive()) EXPECT_TRUE(still_labeled);
      continue;
    }
    ++removed;
    if (s.positive()) {
      EXPECT_FALSE(still_labeled);
      EXPECT_EQ(masked, masks_positives);
    } else {
      EXPECT_TRUE(masked);
    }
  }
  const auto& rep = r.report;
  EXPECT_EQ(removed, rep.removed.size());
  EXPECT_EQ(rep.kept_positives + rep.removed_positives + rep.kept_negatives +
                rep.removed_negatives,
            rep.total_samples);
  size_t per_class_removed = 0;
  for (size_t v : rep.removed_per_class) per_class_removed += v;
  EXPECT_EQ(per_class_removed, rep.removed_positives);
}

TEST(PipelineTest, FilterInvariantsAndLedgerOracle) {
  const auto noisy = SmallNoisy(1);
  const auto r = RunCleaning(noisy.dataset, SmallConfig(1));
  CheckFilter(noisy.dataset, r, true);
  EXPECT_FALSE(r.threshold_dynamics.empty());
  EXPECT_EQ(r.plan.positive_keys.size(), r.plan.quota_total);

  // Mislabel ground truth from the injection ledger alone.
  const int L = r.cleaned.max_width;
  std::set<std::tuple<int, int, int, int>> bad_pos;
  std::set<SampleKey> bad_neg;
  for (const auto& e : noisy.ledger) {
    if (e.span.width() > L) continue;
    if (e.op == NoiseOp::kDropped) {
      bad_neg.insert({e.sentence_id, e.span.start, e.span.end});
    } else {
      bad_pos.insert({e.sentence_id, e.span.start, e.span.end, e.span.label});
    }
  }
  const auto d = EnumerateSamples(noisy.dataset, L);
  size_t pos_hits = 0, neg_hits = 0;
  for (size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    if (r.kept[i]) continue;
    if (s.positive()) {
      pos_hits += bad_pos.contains({s.sentence_id, s.start, s.end, s.assigned_label});
    } else {
      neg_hits += bad_neg.contains(s.key());
    }
  }
  const auto& rep = r.report;
  ASSERT_TRUE(rep.has_gold);
  EXPECT_EQ(rep.positive_identification.mislabeled, bad_pos.size());
  EXPECT_EQ(rep.negative_identification.mislabeled, bad_neg.size());
  EXPECT_EQ(rep.positive_identification.hits, pos_hits);
  EXPECT_EQ(rep.negative_identification.hits, neg_hits);
  EXPECT_EQ(rep.positive_identification.flagged, rep.removed_positives);
  EXPECT_EQ(rep.negative_identification.flagged, rep.removed_negatives);
}

TEST(PipelineTest, UnmaskedRemovedPositivesBecomeNegatives) {
  const auto noisy = SmallNoisy(2);
  auto config = SmallConfig(2);
  config.mask_removed_positives = false;
  const auto r = RunCleaning(noisy.dataset, config);
  CheckFilter(noisy.dataset, r, false);
}

TEST(PipelineTest, MinusInfinityKeepsEverything) {
  const auto noisy = SmallNoisy(3);
  auto config = SmallConfig(3);
  ThresholdPair forced;
  forced.tau_pos = -INFINITY;
  forced.tau_neg = -INFINITY;
  config.forced_thresholds = forced;
  const auto r = RunCleaning(noisy.dataset, config);
  EXPECT_TRUE(r.threshold_dynamics.empty());
  EXPECT_EQ(r.report.removed.size(), 0u);
  EXPECT_EQ(WriteSpans(r.cleaned), WriteSpans(noisy.dataset));
  const auto before = EnumerateSamples(noisy.dataset, config.model.max_width);
  ASSERT_EQ(r.cleaned.samples.size(), before.samples.size());
}

TEST(PipelineTest, AumEqualToThresholdIsKept) {
  const auto noisy = SmallNoisy(4);
  auto config = SmallConfig(4);
  ThresholdPair forced{-INFINITY, -INFINITY};
  config.forced_thresholds = forced;
  const auto first = RunCleaning(noisy.dataset, config);
  // Cut exactly at one positive's and one negative's AUM; the main run is
  // deterministic so the second pass sees the same values.
  const auto d = EnumerateSamples(noisy.dataset, config.model.max_width);
  size_t pos_index = 0, neg_index = 0;
  for (size_t i = 0; i < d.samples.size(); ++i) {
    (d.samples[i].positive() ? pos_index : neg_index) = i;
  }
  forced.tau_pos = first.main_dynamics[pos_index].aum;
  forced.tau_neg = first.main_dynamics[neg_index].aum;
  config.forced_thresholds = forced;
  const auto second = RunCleaning(noisy.dataset, config);
  EXPECT_EQ(second.main_dynamics[pos_index].aum, forced.tau_pos);
  EXPECT_TRUE(second.kept[pos_index]);
  EXPECT_TRUE(second.kept[neg_index]);
  CheckFilter(noisy.dataset, second, true);
}

TEST(PipelineTest, Deterministic) {
  const auto noisy = SmallNoisy(5);
  const auto config = SmallConfig(5);
  const auto a = RunCleaning(noisy.dataset, config);
  const auto b = RunCleaning(noisy.dataset, config);
  EXPECT_EQ(CleaningReportToJson(a.report, noisy.dataset.labels).dump(),
            CleaningReportToJson(b.report, noisy.dataset.labels).dump());
  EXPECT_EQ(WriteSpans(a.cleaned), WriteSpans(b.cleaned));
  EXPECT_EQ(WriteDynamics(a.main_dynamics), WriteDynamics(b.main_dynamics));
  EXPECT_EQ(WriteDynamics(a.threshold_dynamics), WriteDynamics(b.threshold_dynamics));
}

TEST(PipelineTest, SnapshotsCoverEverySample) {
  const auto noisy = SmallNoisy(6);
  const auto config = SmallConfig(6);
  const auto r = RunCleaning(noisy.dataset, config);
  const auto d = EnumerateSamples(noisy.dataset, config.model.max_width);
  ASSERT_EQ(r.main_dynamics.size(), d.samples.size());
  for (const auto& rec : r.main_dynamics) EXPECT_EQ(rec.epochs(), 3u);
  for (const auto& rec : r.threshold_dynamics) EXPECT_EQ(rec.epochs(), 3u);
}

TEST(TrainFinalTest, MaskedSpansNeverTrained) {
  const auto noisy = SmallNoisy(7);
  const auto cleaning = RunCleaning(noisy.dataset, SmallConfig(7));
  ASSERT_FALSE(cleaning.cleaned.mask_list.empty());
  FinalConfig config;
  config.model = SmallConfig(7).model;
  config.epochs = 2;
  size_t batches = 0;
  config.observer = [&](const Batch& batch) {
    ++batches;
    for (const auto& s : batch.samples) {
      ASSERT_FALSE(cleaning.cleaned.mask_list.contains(s.key()));
    }
  };
  const auto result = TrainFinal(cleaning.cleaned, &noisy.dataset, config);
  EXPECT_GT(batches, 0u);
  ASSERT_TRUE(result.test.has_value());
  EXPECT_GE(result.test->micro.f1, 0.0);
  EXPECT_EQ(result.checkpoint.epoch, 2);
}

TEST(TrainFinalTest, NoPositivesIsConfigError) {
  SpanDataset d;
  d.labels = LabelSet({"A"});
  d.sentences.push_back({{"a", "b"}, std::nullopt, {}});
  EXPECT_THROW(TrainFinal(d, nullptr, FinalConfig{}), ConfigError);
  SpanDataset empty;
  EXPECT_THROW(TrainFinal(empty, nullptr, FinalConfig{}), ConfigError);
}

TEST(GoldLayerTest, RemapsByName) {
  SpanDataset d;
  d.labels = LabelSet({"B", "A"});
  d.sentences.push_back({{"x", "y"}, std::vector<Span>{{0, 0, 2}}, {{1, 1, 1}}});
  const LabelSet target({"A", "B"});
  EXPECT_EQ(GoldLayer(d, target)[0], (std::vector<Span>{{0, 0, 1}}));
  EXPECT_NO_THROW(GoldLayer(d, LabelSet({"A"})));
  d.sentences[0].gold_spans->push_back({1, 1, 1});
  EXPECT_THROW(GoldLayer(d, LabelSet({"A"})), DataError);
}

}  // namespace
}  // namespace spanclean
