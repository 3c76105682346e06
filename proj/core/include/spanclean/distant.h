#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spanclean/corpus.h"

namespace spanclean {

// Surface form (token sequence) to entity type. One type per surface form.
class Gazetteer {
 public:
  // Later entries for an existing surface form replace the earlier type.
  void add(std::vector<std::string> surface, std::string_view type);

  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  size_t max_length() const { return max_length_; }
  const LabelSet& labels() const { return labels_; }
  // Type index in labels(), or 0 when absent.
  int lookup(const std::vector<std::string>& tokens, size_t begin, size_t length) const;

 private:
  LabelSet labels_;
  std::map<std::vector<std::string>, int> entries_;
  size_t max_length_ = 0;
};

// "surface form<TAB>TYPE" per line; the surface form is split on whitespace.
Gazetteer ParseGazetteer(std::string_view text);

// Greedy left-to-right longest match. Replaces distant_spans; gazetteer types
// missing from the dataset's label set are appended to it.
SpanDataset Annotate(const SpanDataset& dataset, const Gazetteer& gazetteer);

struct NoiseSpec {
  double fn_rate = 0.25;
  double fp_type_rate = 0.10;
  // Expected number of spurious spans per sentence (Poisson mean).
  double fp_spurious_rate = 0.05;
  uint64_t seed = 0;
  // Width cap for spurious spans.
  int max_width = 8;
};

enum class NoiseOp { kDropped, kFlipped, kAdded };

std::string_view NoiseOpName(NoiseOp op);
NoiseOp ParseNoiseOp(std::string_view name);

struct LedgerEntry {
  int sentence_id = 0;
  // For kFlipped this carries the new label.
  Span span;
  NoiseOp op = NoiseOp::kDropped;
  // Gold label of a flipped span; equals span.label otherwise.
  int original_label = kNonEntity;

  auto operator<=>(const LedgerEntry&) const = default;
};

struct NoisyCorpus {
  SpanDataset dataset;
  std::vector<LedgerEntry> ledger;
};

// Builds distant_spans from gold_spans. Each gold span is dropped with
// probability fn_rate, else retyped with probability fp_type_rate (uniform over
// the other types), else kept. Then a Poisson(fp_spurious_rate) number of
// spurious spans is added per sentence, each overlapping neither a gold span
// nor another distant span. Sentence i draws from its own stream of `seed`.
NoisyCorpus InjectNoise(const SpanDataset& dataset, const NoiseSpec& spec);

// Same record-per-line layout as the span format with an "op" field.
std::string WriteLedger(const std::vector<LedgerEntry>& ledger, const LabelSet& labels);
std::vector<LedgerEntry> ParseLedger(std::string_view text, const LabelSet& labels);

struct SyntheticConfig {
  int vocab_size = 200;
  int num_types = 3;
  int num_sentences = 500;
  int min_length = 8;
  int max_length = 20;
  // Probability that an entity run starts at a free position.
  double entity_rate = 0.12;
  // Tokens owned by each entity type, as a fraction of vocab_size.
  double type_vocab_fraction = 0.1;
  uint64_t seed = 0;
};

struct SyntheticCorpus {
  // Gold spans set; distant spans equal gold.
  SpanDataset dataset;
  // Token strings owned by each type (index 1..c; entry 0 is background).
  std::vector<std::vector<std::string>> vocabulary;
  // Entity runs generated per type (index 1..c).
  std::vector<size_t> entity_counts;
};

// Background tokens with embedded entity runs of 1..3 tokens. Each type owns a
// disjoint sub-vocabulary whose tokens follow a Zipf-like frequency profile.
SyntheticCorpus GenerateSynthetic(const SyntheticConfig& config);

// Config for a held-out split: same vocabulary, an independent sentence stream.
SyntheticConfig HeldOutConfig(const SyntheticConfig& config, int num_sentences);

}  // namespace spanclean
