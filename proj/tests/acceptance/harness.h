#pragma once

#include <cstdint>

#include "spanclean/config.h"
#include "spanclean/distant.h"
#include "spanclean/pipeline.h"

namespace spanclean::harness {

// The synthetic noise setup: generated train/test splits sharing one
// vocabulary, noise injected into train only.
struct Trial {
  uint64_t seed = 0;
  SpanDataset clean_train;
  NoisyCorpus noisy;
  SpanDataset test;
  CleaningResult cleaning;
  double clean_seconds = 0.0;
  // Test micro-F1 of final models trained on the noisy and cleaned data.
  double f1_noisy = 0.0;
  double f1_cleaned = 0.0;
  double final_seconds = 0.0;
};

RunConfig TrialConfig(uint64_t seed);

// Generates data and runs the cleaning pipeline; the final-model comparison
// only runs when `train_final` is set.
Trial RunTrial(const RunConfig& config, bool train_final);

}  // namespace spanclean::harness
