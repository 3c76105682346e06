#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spanclean/corpus.h"
#include "spanclean/dynamics.h"

namespace spanclean {

struct SpanScore {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Ratios with zero denominators are 0.
  static SpanScore FromCounts(size_t tp, size_t fp, size_t fn);
};

struct ScoreReport {
  SpanScore micro;
  // Indexed by label; entry 0 unused.
  std::vector<SpanScore> per_class;
};

// Exact (start, end, type) matching, micro-averaged over all sentences.
// Throws ContractViolation when the two sides have different sentence counts.
ScoreReport ScoreSpans(const std::vector<std::vector<Span>>& predicted,
                       const std::vector<std::vector<Span>>& gold, int num_types);

// Per-class comparison of a (distant or cleaned) annotation layer with gold.
//   positives        distant spans of the class
//   true_positives   of those, the ones that match a gold span exactly
//   false_positives  positives - true_positives
//   false_negatives  gold spans of the class absent from the distant layer and
//                    not masked (a masked span is no longer a negative)
struct ClassAudit {
  size_t positives = 0;
  size_t true_positives = 0;
  size_t false_positives = 0;
  size_t false_negatives = 0;

  size_t false_annotations() const { return false_positives + false_negatives; }
  bool operator==(const ClassAudit&) const = default;
};

// Indexed by label; entry 0 unused. Requires gold spans on every sentence.
std::vector<ClassAudit> AuditNoise(const SpanDataset& dataset);

// Area under the ROC curve of `scores` as a detector of `is_positive`; tied
// scores count one half. Returns 0.5 when either class is empty.
double RocAuc(std::span<const double> scores, std::span<const char> is_positive);

struct DatamapRow {
  SampleKey key;
  int label = kNonEntity;
  double aum = 0.0;
  double confidence = 0.0;
  double variability = 0.0;
  bool is_positive = false;
};

// Header line plus one comma-separated row per record, shortest round-trip
// float formatting.
std::string WriteDatamapCsv(const std::vector<DynamicsRecord>& records);
std::vector<DatamapRow> ParseDatamapCsv(std::string_view text);

// Scatter of variability (x) against confidence (y), colored by AUM tercile.
std::string RenderDatamapSvg(const std::vector<DynamicsRecord>& records);

// Writes <prefix>.csv and <prefix>.svg. Throws IoError.
void ExportDatamap(const std::vector<DynamicsRecord>& records,
                   const std::filesystem::path& prefix);

}  // namespace spanclean
