#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanclean/corpus.h"
#include "spanclean/dynamics.h"

namespace spanclean {

// Integer quotas proportional to `counts` that sum to `total`: floors first,
// then one extra unit to the largest remainders (lower index wins ties).
// Remainders are compared in exact integer arithmetic.
std::vector<size_t> LargestRemainder(std::span<const size_t> counts, size_t total);

// round(positives / (num_types + 1)), halves rounded up.
size_t ThresholdQuota(size_t positives, int num_types);

struct ThresholdPlan {
  // Indexed by label; entry 0 unused.
  std::vector<size_t> positive_quotas;
  size_t quota_total = 0;
  std::vector<SampleKey> positive_keys;
  std::vector<SampleKey> negative_keys;
  int fake_label = 0;
  uint64_t seed = 0;
};

struct ThresholdDataset {
  // Copy of the input with the selected samples relabeled to the fake class.
  SpanDataset dataset;
  ThresholdPlan plan;
};

// Stratified draw of quota_total positives (per-class largest-remainder
// quotas) and a uniform draw of quota_total negatives. Throws ConfigError when
// there are fewer than c + 1 positives or too few negatives.
ThresholdDataset BuildThresholdDataset(const SpanDataset& dataset, uint64_t seed);

// Nearest-rank percentile on ascending order: value at rank ceil(k/100 * m).
// k must lie in (0, 100].
double NearestRankPercentile(std::vector<double> values, double k);

struct ThresholdPair {
  double tau_pos = 0.0;
  double tau_neg = 0.0;
  double k_pos = 100.0;
  double k_neg = 90.0;
  std::string run_id;
  uint64_t seed = 0;
  int epochs = 0;
};

// AUM cutoffs from the finalized dynamics of a threshold run. Positive and
// negative threshold samples are ranked separately.
ThresholdPair EstimateThresholds(const std::vector<DynamicsRecord>& records,
                                 const ThresholdPlan& plan, double k_pos, double k_neg);

nlohmann::json ThresholdPairToJson(const ThresholdPair& pair);
ThresholdPair ThresholdPairFromJson(const nlohmann::json& j);

}  // namespace spanclean
