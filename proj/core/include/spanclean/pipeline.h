#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanclean/checkpoint.h"
#include "spanclean/corpus.h"
#include "spanclean/dynamics.h"
#include "spanclean/evaluation.h"
#include "spanclean/span_model.h"
#include "spanclean/thresholding.h"

namespace spanclean {

struct CleanConfig {
  // vocab_size and num_classes are filled in from the data.
  ModelConfig model;
  bool lowercase = false;
  int epochs = 5;
  double k_pos = 100.0;
  double k_neg = 90.0;
  TrainOptions train;
  AdamOptions adam;
  uint64_t seed = 13;
  int threads = 1;
  // Removed positives are also added to the mask list.
  bool mask_removed_positives = true;
  bool keep_logits = false;
  // Test hook: use these cutoffs and skip the threshold run.
  std::optional<ThresholdPair> forced_thresholds;
  // Embedded verbatim in the report.
  nlohmann::json echo;
};

// Flagging quality against gold: a positive is mislabeled when its typed span
// is not a gold span, a negative when its bounds match a gold span.
struct Identification {
  size_t flagged = 0;
  size_t mislabeled = 0;
  size_t hits = 0;
  double precision = 0.0;
  double recall = 0.0;
  // ROC-AUC of -AUM as a mislabel detector.
  double auc = 0.5;
};

struct RemovedSample {
  SampleKey key;
  int label = kNonEntity;
  double aum = 0.0;
};

struct CleaningReport {
  ThresholdPair thresholds;
  size_t total_samples = 0;
  size_t kept_positives = 0;
  size_t removed_positives = 0;
  size_t kept_negatives = 0;
  size_t removed_negatives = 0;
  // Indexed by label; entry 0 unused.
  std::vector<size_t> kept_per_class;
  std::vector<size_t> removed_per_class;
  std::vector<RemovedSample> removed;

  bool has_gold = false;
  Identification positive_identification;
  Identification negative_identification;
  std::vector<ClassAudit> audit_before;
  std::vector<ClassAudit> audit_after;

  nlohmann::json config_echo;
};

struct Timings {
  double threshold_run_seconds = 0.0;
  double main_run_seconds = 0.0;
  double total_seconds = 0.0;
};

struct CleaningResult {
  // Input with removed positives deleted and the mask list extended,
  // re-enumerated with the model's width cap.
  SpanDataset cleaned;
  CleaningReport report;
  ThresholdPlan plan;
  std::vector<DynamicsRecord> threshold_dynamics;
  std::vector<DynamicsRecord> main_dynamics;
  // Aligned with main_dynamics.
  std::vector<char> kept;
  Timings timings;
};

// Threshold run, main run, AUM filter. `dataset` need not be enumerated.
CleaningResult RunCleaning(const SpanDataset& dataset, const CleanConfig& config);

// Keeps a sample iff its AUM reaches the cutoff of its polarity.
bool KeepSample(const DynamicsRecord& record, const ThresholdPair& thresholds);

nlohmann::json CleaningReportToJson(const CleaningReport& report, const LabelSet& labels);
nlohmann::json TimingsToJson(const Timings& timings);

struct FinalConfig {
  ModelConfig model;
  bool lowercase = false;
  int epochs = 10;
  TrainOptions train;
  AdamOptions adam;
  uint64_t seed = 13;
  int threads = 1;
  // Called on every training batch.
  BatchObserver observer;
};

struct FinalResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> epochs;
  std::optional<ScoreReport> test;
};

// Trains on the enumerated (masked spans excluded) samples of `train` and, when
// `test` is given, scores predictions against its gold layer (gold spans if
// present, else its span layer). Throws ConfigError without positives.
FinalResult TrainFinal(const SpanDataset& train, const SpanDataset* test, const FinalConfig& config);

// Predicted spans per sentence, labels in the checkpoint's label set.
std::vector<std::vector<Span>> PredictDataset(const Checkpoint& checkpoint,
                                              const SpanDataset& dataset, int threads = 1);

// Gold layer (gold spans if present, else spans) relabeled into `target` by
// type name. Throws DataError on a type missing from `target`.
std::vector<std::vector<Span>> GoldLayer(const SpanDataset& dataset, const LabelSet& target);

}  // namespace spanclean
