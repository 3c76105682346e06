#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spanclean/corpus.h"
#include "spanclean/span_model.h"

namespace spanclean {

// Per-sample trajectory across epochs and its aggregates.
//   aum         = mean of margins
//   confidence  = mean of probs
//   variability = population standard deviation of probs
struct DynamicsRecord {
  SampleKey key;
  int assigned_label = kNonEntity;
  std::vector<double> margins;
  std::vector<double> probs;
  // Full logits per epoch, only filled when requested.
  std::vector<std::vector<double>> logits;
  double aum = 0.0;
  double confidence = 0.0;
  double variability = 0.0;

  size_t epochs() const { return margins.size(); }
};

// Assigned-label logit minus the largest other logit. Needs >= 2 logits.
double Margin(std::span<const double> logits, int assigned_label);

// One empty record per enumerated sample, in sample order.
std::vector<DynamicsRecord> InitRecords(const SpanDataset& dataset);

struct SnapshotOptions {
  int threads = 1;
  bool keep_logits = false;
};

// Eval-mode pass over every sample (dropout off), appending one margin and one
// probability to each record. Records must align with dataset.samples.
void SnapshotEpoch(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                   const SpanClassifierParams& params, const ModelConfig& config,
                   std::vector<DynamicsRecord>& records, const SnapshotOptions& options = {});

// Fills aum/confidence/variability. Throws ContractViolation on an empty
// record and NumericError on a non-finite aggregate.
void Finalize(std::vector<DynamicsRecord>& records);
void Finalize(DynamicsRecord& record);

// One JSON object per line with full round-trip precision.
std::string WriteDynamics(const std::vector<DynamicsRecord>& records);
std::vector<DynamicsRecord> ParseDynamics(std::string_view text);

}  // namespace spanclean
