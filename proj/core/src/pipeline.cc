#include "spanclean/pipeline.h"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <thread>

#include "spanclean/errors.h"
#include "spanclean/random.h"

namespace spanclean {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct RunOutput {
  SpanClassifierParams params;
  std::vector<DynamicsRecord> records;
};

// E epochs with a snapshot after each.
RunOutput TrainWithDynamics(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                            const ModelConfig& model, const CleanConfig& config, uint64_t seed) {
  RunOutput out{SpanClassifierParams::Init(model, DeriveSeed(seed, Stream::kInit)),
                InitRecords(dataset)};
  AdamOptimizer optimizer(model, config.adam);
  const SnapshotOptions snapshot{config.threads, config.keep_logits};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    TrainEpoch(dataset, corpus, out.params, optimizer, model, config.train, seed, epoch);
    SnapshotEpoch(dataset, corpus, out.params, model, out.records, snapshot);
  }
  Finalize(out.records);
  return out;
}

Identification Identify(const std::vector<double>& scores, const std::vector<char>& mislabeled,
                        const std::vector<char>& flagged) {
  Identification id;
  for (size_t i = 0; i < scores.size(); ++i) {
    id.flagged += flagged[i] ? 1 : 0;
    id.mislabeled += mislabeled[i] ? 1 : 0;
    id.hits += (flagged[i] && mislabeled[i]) ? 1 : 0;
  }
  id.precision = id.flagged ? static_cast<double>(id.hits) / id.flagged : 0.0;
  id.recall = id.mislabeled ? static_cast<double>(id.hits) / id.mislabeled : 0.0;
  id.auc = RocAuc(scores, mislabeled);
  return id;
}

void FillIdentification(const SpanDataset& enumerated, const std::vector<DynamicsRecord>& records,
                        const std::vector<char>& kept, CleaningReport& report) {
  std::vector<double> pos_scores, neg_scores;
  std::vector<char> pos_bad, neg_bad, pos_flag, neg_flag;
  for (size_t i = 0; i < enumerated.samples.size(); ++i) {
    const SpanSample& s = enumerated.samples[i];
    const auto& gold = *enumerated.sentences[s.sentence_id].gold_spans;
    if (s.positive()) {
      const bool bad = std::find(gold.begin(), gold.end(),
                                 Span{s.start, s.end, s.assigned_label}) == gold.end();
      pos_scores.push_back(-records[i].aum);
      pos_bad.push_back(bad);
      pos_flag.push_back(!kept[i]);
    } else {
      const bool bad = std::any_of(gold.begin(), gold.end(), [&](const Span& g) {
        return g.start == s.start && g.end == s.end;
      });
      neg_scores.push_back(-records[i].aum);
      neg_bad.push_back(bad);
      neg_flag.push_back(!kept[i]);
    }
  }
  report.positive_identification = Identify(pos_scores, pos_bad, pos_flag);
  report.negative_identification = Identify(neg_scores, neg_bad, neg_flag);
}

json IdentificationToJson(const Identification& id) {
  return {{"flagged", id.flagged}, {"mislabeled", id.mislabeled}, {"hits", id.hits},
          {"precision", id.precision}, {"recall", id.recall}, {"auc", id.auc}};
}

json AuditToJson(const std::vector<ClassAudit>& audit, const LabelSet& labels) {
  json out = json::array();
  for (size_t c = 1; c < audit.size(); ++c) {
    const ClassAudit& a = audit[c];
    out.push_back({{"label", labels.name(static_cast<int>(c))},
                   {"positives", a.positives},
                   {"true_positives", a.true_positives},
                   {"false_positives", a.false_positives},
                   {"false_negatives", a.false_negatives},
                   {"false_annotations", a.false_annotations()}});
  }
  return out;
}

}  // namespace

bool KeepSample(const DynamicsRecord& record, const ThresholdPair& thresholds) {
  const double tau = record.assigned_label > kNonEntity ? thresholds.tau_pos : thresholds.tau_neg;
  return record.aum >= tau;
}

CleaningResult RunCleaning(const SpanDataset& dataset, const CleanConfig& config) {
  const auto start = Clock::now();
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  const int max_width = config.model.max_width;
  const SpanDataset enumerated = EnumerateSamples(dataset, max_width);
  if (enumerated.samples.empty()) throw DataError("dataset has no candidate spans");

  const Vocabulary vocab = Vocabulary::Build(enumerated, config.lowercase);
  const TokenizedCorpus corpus = vocab.Encode(enumerated);
  ModelConfig model = config.model;
  model.vocab_size = vocab.size();
  const int c = enumerated.labels.num_types();

  CleaningResult result;
  if (config.forced_thresholds) {
    result.report.thresholds = *config.forced_thresholds;
  } else {
    ThresholdDataset td =
        BuildThresholdDataset(enumerated, DeriveSeed(config.seed, Stream::kThresholdPlan));
    ModelConfig threshold_model = model;
    threshold_model.num_classes = c + 2;
    RunOutput run = TrainWithDynamics(td.dataset, corpus, threshold_model, config, config.seed);
    ThresholdPair pair = EstimateThresholds(run.records, td.plan, config.k_pos, config.k_neg);
    pair.run_id = "threshold-" + std::to_string(config.seed);
    pair.seed = config.seed;
    pair.epochs = config.epochs;
    result.report.thresholds = pair;
    result.plan = std::move(td.plan);
    result.threshold_dynamics = std::move(run.records);
  }
  result.timings.threshold_run_seconds = SecondsSince(start);

  const auto main_start = Clock::now();
  model.num_classes = c + 1;
  RunOutput main = TrainWithDynamics(enumerated, corpus, model, config, config.seed + 1);
  result.timings.main_run_seconds = SecondsSince(main_start);

  // Filter.
  CleaningReport& report = result.report;
  report.total_samples = enumerated.samples.size();
  report.kept_per_class.assign(c + 1, 0);
  report.removed_per_class.assign(c + 1, 0);
  SpanDataset edited = dataset;
  edited.samples.clear();
  edited.max_width = -1;
  std::vector<std::set<Span>> drop(edited.sentences.size());
  result.kept.resize(enumerated.samples.size());
  for (size_t i = 0; i < enumerated.samples.size(); ++i) {
    const SpanSample& s = enumerated.samples[i];
    const DynamicsRecord& rec = main.records[i];
    const bool keep = KeepSample(rec, report.thresholds);
    result.kept[i] = keep;
    if (s.positive()) {
      (keep ? report.kept_positives : report.removed_positives)++;
      (keep ? report.kept_per_class : report.removed_per_class)[s.assigned_label]++;
    } else {
      (keep ? report.kept_negatives : report.removed_negatives)++;
    }
    if (keep) continue;
    report.removed.push_back({s.key(), s.assigned_label, rec.aum});
    if (s.positive()) {
      drop[s.sentence_id].insert({s.start, s.end, s.assigned_label});
      if (config.mask_removed_positives) edited.mask_list.insert(s.key());
    } else {
      edited.mask_list.insert(s.key());
    }
  }
  for (size_t i = 0; i < edited.sentences.size(); ++i) {
    if (drop[i].empty()) continue;
    auto& spans = edited.sentences[i].distant_spans;
    std::erase_if(spans, [&](const Span& sp) { return drop[i].contains(sp); });
  }

  report.has_gold = dataset.has_gold();
  if (report.has_gold) {
    FillIdentification(enumerated, main.records, result.kept, report);
    report.audit_before = AuditNoise(dataset);
    report.audit_after = AuditNoise(edited);
  }
  report.config_echo = config.echo;

  result.cleaned = EnumerateSamples(edited, max_width);
  result.main_dynamics = std::move(main.records);
  result.timings.total_seconds = SecondsSince(start);
  return result;
}

json CleaningReportToJson(const CleaningReport& r, const LabelSet& labels) {
  json per_class = json::array();
  for (size_t c = 1; c < r.kept_per_class.size(); ++c) {
    per_class.push_back({{"label", labels.name(static_cast<int>(c))},
                         {"kept", r.kept_per_class[c]},
                         {"removed", r.removed_per_class[c]}});
  }
  json removed = json::array();
  for (const auto& s : r.removed) {
    removed.push_back({{"sentence_id", s.key.sentence_id},
                       {"start", s.key.start},
                       {"end", s.key.end},
                       {"label", labels.name(s.label)},
                       {"aum", s.aum}});
  }
  json out{{"thresholds", ThresholdPairToJson(r.thresholds)},
           {"total_samples", r.total_samples},
           {"positives", {{"kept", r.kept_positives}, {"removed", r.removed_positives}}},
           {"negatives", {{"kept", r.kept_negatives}, {"removed", r.removed_negatives}}},
           {"per_class", per_class},
           {"removed", removed},
           {"has_gold", r.has_gold}};
  if (r.has_gold) {
    out["identification"] = {{"positives", IdentificationToJson(r.positive_identification)},
                             {"negatives", IdentificationToJson(r.negative_identification)}};
    out["audit"] = {{"before", AuditToJson(r.audit_before, labels)},
                    {"after", AuditToJson(r.audit_after, labels)}};
  }
  out["config"] = r.config_echo;
  return out;
}

json TimingsToJson(const Timings& t) {
  return {{"threshold_run_seconds", t.threshold_run_seconds},
          {"main_run_seconds", t.main_run_seconds},
          {"total_seconds", t.total_seconds}};
}

FinalResult TrainFinal(const SpanDataset& train, const SpanDataset* test, const FinalConfig& config) {
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  const SpanDataset enumerated = EnumerateSamples(train, config.model.max_width);
  const bool any_positive = std::any_of(enumerated.samples.begin(), enumerated.samples.end(),
                                        [](const SpanSample& s) { return s.positive(); });
  if (!any_positive) throw ConfigError("training set has no positive spans");

  FinalResult result;
  Checkpoint& ck = result.checkpoint;
  ck.vocabulary = Vocabulary::Build(enumerated, config.lowercase);
  ck.labels = enumerated.labels;
  ck.config = config.model;
  ck.config.vocab_size = ck.vocabulary.size();
  ck.config.num_classes = enumerated.labels.num_classes();
  ck.config.Validate();
  ck.seed = config.seed;
  ck.params = SpanClassifierParams::Init(ck.config, DeriveSeed(config.seed, Stream::kInit));
  const TokenizedCorpus corpus = ck.vocabulary.Encode(enumerated);
  AdamOptimizer optimizer(ck.config, config.adam);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    result.epochs.push_back(TrainEpoch(enumerated, corpus, ck.params, optimizer, ck.config,
                                       config.train, config.seed, epoch, config.observer));
    ck.epoch = epoch + 1;
  }
  if (test != nullptr) {
    const auto predicted = PredictDataset(ck, *test, config.threads);
    result.test = ScoreSpans(predicted, GoldLayer(*test, ck.labels), ck.labels.num_types());
  }
  return result;
}

std::vector<std::vector<Span>> PredictDataset(const Checkpoint& ck, const SpanDataset& dataset,
                                              int threads) {
  const size_t n = dataset.sentences.size();
  std::vector<std::vector<Span>> out(n);
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const auto ids = ck.vocabulary.Encode(dataset.sentences[i].tokens);
      out[i] = PredictSpans(ids, ck.params, ck.config, ck.labels.num_types());
    }
  };
  const size_t workers = std::clamp<size_t>(threads, 1, std::max<size_t>(n, 1));
  if (workers == 1) {
    work(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t b = std::min(n, w * chunk), e = std::min(n, b + chunk);
    pool.emplace_back(work, b, e);
  }
  for (auto& t : pool) t.join();
  return out;
}

std::vector<std::vector<Span>> GoldLayer(const SpanDataset& dataset, const LabelSet& target) {
  std::vector<int> remap(dataset.labels.num_types() + 1, kNonEntity);
  for (int c = 1; c <= dataset.labels.num_types(); ++c) {
    const auto found = target.find(dataset.labels.name(c));
    remap[c] = found ? *found : -1;
  }
  std::vector<std::vector<Span>> out;
  out.reserve(dataset.sentences.size());
  for (const auto& s : dataset.sentences) {
    const auto& layer = s.gold_spans ? *s.gold_spans : s.distant_spans;
    auto& spans = out.emplace_back();
    for (const Span& sp : layer) {
      if (remap[sp.label] < 0) {
        throw DataError("evaluation type '" + dataset.labels.name(sp.label) +
                        "' is unknown to the model");
      }
      spans.push_back({sp.start, sp.end, remap[sp.label]});
    }
  }
  return out;
}

}  // namespace spanclean
