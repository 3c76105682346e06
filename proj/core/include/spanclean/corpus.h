#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spanclean {

// Label index 0 is the non-entity class. Entity types occupy 1..c and the
// index c+1 is reserved for the fake class used by threshold runs.
inline constexpr int kNonEntity = 0;

// Ordered set of entity type names.
class LabelSet {
 public:
  LabelSet() = default;
  // Throws ConfigError on empty or duplicate names.
  explicit LabelSet(std::vector<std::string> entity_types);

  // Number of entity types (c).
  int num_types() const { return static_cast<int>(names_.size()); }
  // c + 1: the non-entity class plus every entity type.
  int num_classes() const { return num_types() + 1; }
  int fake_label() const { return num_types() + 1; }

  // Index in 1..c, or nullopt for an unknown name.
  std::optional<int> find(std::string_view name) const;
  // Appends the name if it is new and returns its index.
  int intern(std::string_view name);

  // "O" for 0, the type name for 1..c, "<threshold>" for c+1.
  const std::string& name(int index) const;
  const std::vector<std::string>& entity_types() const { return names_; }

  bool operator==(const LabelSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

// Token span with an inclusive end. width() == end - start.
struct Span {
  int start = 0;
  int end = 0;
  int label = kNonEntity;

  int width() const { return end - start; }
  auto operator<=>(const Span&) const = default;
};

struct SampleKey {
  int sentence_id = 0;
  int start = 0;
  int end = 0;

  auto operator<=>(const SampleKey&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::optional<std::vector<Span>> gold_spans;
  std::vector<Span> distant_spans;

  int size() const { return static_cast<int>(tokens.size()); }
};

struct SpanSample {
  int sentence_id = 0;
  int start = 0;
  int end = 0;
  int assigned_label = kNonEntity;
  bool is_threshold_sample = false;

  int width() const { return end - start; }
  bool positive() const { return assigned_label > kNonEntity; }
  SampleKey key() const { return {sentence_id, start, end}; }
};

struct SpanDataset {
  LabelSet labels;
  std::vector<Sentence> sentences;
  // Sorted by key once enumerated.
  std::vector<SpanSample> samples;
  // Spans excluded from supervision.
  std::set<SampleKey> mask_list;
  // Width cap used by the last enumeration, -1 when not enumerated.
  int max_width = -1;

  bool enumerated() const { return max_width >= 0; }
  bool has_gold() const;
};

enum class CorpusFormat { kBio, kSpans };

CorpusFormat ParseCorpusFormat(std::string_view name);

// Reads "token<TAB>tag" lines, blank line between sentences. Runs of B-X/I-X
// become distant spans; an I-X that does not continue an X run opens a new
// span. When `known` is given, types outside it are rejected; otherwise the
// label set is built in order of first appearance.
SpanDataset ParseBio(std::string_view text, const LabelSet* known = nullptr);

// Writes distant spans as BIO. Spans must not overlap.
std::string WriteBio(const SpanDataset& dataset);

// One JSON object per line: {"tokens": [...], "spans": [{"start", "end",
// "label"}], "gold_spans": [...], "masked_spans": [{"start", "end"}]}. An
// optional first line {"label_set": [...]} fixes label order; when present
// (or when `known` is given) unknown label names are errors.
SpanDataset ParseSpans(std::string_view text, const LabelSet* known = nullptr);

// Canonical span format: label_set header line, keys sorted, spans sorted by
// (start, end, label). Masked spans come from the dataset's mask_list.
std::string WriteSpans(const SpanDataset& dataset);

SpanDataset ReadDataset(const std::filesystem::path& path, CorpusFormat format,
                        const LabelSet* known = nullptr);
void WriteDataset(const std::filesystem::path& path, const SpanDataset& dataset,
                  CorpusFormat format);

// Sets each sentence's gold spans to the span layer of the matching sentence
// in `gold`; types are matched by name and interned when new. Throws DataError
// when sentence counts or tokens differ.
void AttachGold(SpanDataset& dataset, const SpanDataset& gold);

std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, std::string_view text);

// Emits every span of width <= max_width that is not masked, labeled by the
// matching distant span (0 when none). Distant spans wider than max_width are
// dropped from the positives with a warning.
SpanDataset EnumerateSamples(const SpanDataset& dataset, int max_width);

// Number of spans of width <= max_width in a sentence of n tokens.
size_t CandidateSpanCount(int num_tokens, int max_width);

struct DatasetStats {
  size_t sentences = 0;
  size_t tokens = 0;
  // Distant spans of any width.
  size_t entity_spans = 0;
  // Distant spans wider than the enumeration cap.
  size_t overwidth_spans = 0;
  // Indexed by label; entry 0 unused.
  std::vector<size_t> positives_per_class;
  size_t positives = 0;
  size_t negatives = 0;
  size_t masked = 0;
  size_t gold_spans = 0;
};

DatasetStats ComputeStats(const SpanDataset& dataset);

}  // namespace spanclean
