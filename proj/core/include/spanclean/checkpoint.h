#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spanclean/corpus.h"
#include "spanclean/span_model.h"

namespace spanclean {

// Everything needed to rebuild a trained span classifier.
struct Checkpoint {
  ModelConfig config;
  uint64_t seed = 0;
  int epoch = 0;
  Vocabulary vocabulary;
  LabelSet labels;
  SpanClassifierParams params;
};

// Layout (docs/checkpoint_format.md): 8-byte magic, u32 version, u64 header
// length, JSON header, then each tensor row-major as little-endian float64 in
// declared order.
std::string SerializeCheckpoint(const Checkpoint& checkpoint);
// Throws DataError on a malformed or truncated buffer.
Checkpoint DeserializeCheckpoint(std::string_view bytes);

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace spanclean
