#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanclean/distant.h"
#include "spanclean/pipeline.h"
#include "spanclean/span_model.h"

namespace spanclean {

nlohmann::json ModelConfigToJson(const ModelConfig& config);
// Overlays the keys present in `j` onto `base`; unknown keys are ConfigErrors.
ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig base = {});

// Every tunable of the tool in one place. Precedence when assembling one:
// command-line flag > config file > preset.
struct RunConfig {
  std::string preset = "desk";

  // Corpora.
  std::string train_path;
  // Optional gold layer for train_path, aligned sentence by sentence.
  std::string gold_path;
  std::string test_path;
  std::string dev_path;
  std::string gazetteer_path;
  std::string predictions_path;
  std::string dynamics_path;
  std::string format = "spans";
  std::string output_dir = "run";

  uint64_t seed = 13;
  int threads = 1;

  // Model and training.
  ModelConfig model;
  bool lowercase = false;
  double learning_rate = 1e-3;
  int batch_sentences = 16;
  bool topneg = false;
  double topneg_fraction = 0.05;

  // Cleaning.
  int epochs = 10;
  double k_pos = 100.0;
  double k_neg = 90.0;
  bool mask_removed_positives = true;
  bool keep_logits = false;

  // Final model. TopNeg there is independent of the cleaning runs.
  int final_epochs = 10;
  bool final_topneg = false;

  // Harness commands.
  NoiseSpec noise;
  SyntheticConfig synthetic;
  int synthetic_test_sentences = 500;

  // Throws ConfigError on out-of-range values.
  void Validate() const;
};

// "desk" (default), "conll-preset", "small-corpus-preset".
RunConfig PresetConfig(std::string_view name);
std::vector<std::string> PresetNames();

nlohmann::json RunConfigToJson(const RunConfig& config);
// Overlays `j` onto `base`. A "preset" key, when present, replaces the base
// with that preset before the other keys are applied.
RunConfig RunConfigFromJson(const nlohmann::json& j, RunConfig base = {});

// Pipeline settings derived from a run config. The cleaning echo is the full
// run config.
CleanConfig MakeCleanConfig(const RunConfig& config);
FinalConfig MakeFinalConfig(const RunConfig& config);

}  // namespace spanclean
