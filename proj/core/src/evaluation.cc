#include "spanclean/evaluation.h"

#include <algorithm>
#include <set>

#include "spanclean/errors.h"

namespace spanclean {

SpanScore SpanScore::FromCounts(size_t tp, size_t fp, size_t fn) {
  SpanScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = s.precision + s.recall == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

ScoreReport ScoreSpans(const std::vector<std::vector<Span>>& predicted,
                       const std::vector<std::vector<Span>>& gold, int num_types) {
  if (predicted.size() != gold.size()) {
    throw ContractViolation("prediction and gold sentence counts differ");
  }
  std::vector<size_t> tp(num_types + 1, 0), fp(num_types + 1, 0), fn(num_types + 1, 0);
  auto bucket = [num_types](int label) {
    if (label < 1 || label > num_types) throw ContractViolation("span label outside 1..c");
    return static_cast<size_t>(label);
  };
  for (size_t i = 0; i < gold.size(); ++i) {
    // Multiset so each gold span matches at most one prediction.
    std::multiset<Span> remaining(gold[i].begin(), gold[i].end());
    for (const auto& p : predicted[i]) {
      auto it = remaining.find(p);
      if (it != remaining.end()) {
        ++tp[bucket(p.label)];
        remaining.erase(it);
      } else {
        ++fp[bucket(p.label)];
      }
    }
    for (const auto& g : remaining) ++fn[bucket(g.label)];
  }
  ScoreReport report;
  report.per_class.resize(num_types + 1);
  size_t total_tp = 0, total_fp = 0, total_fn = 0;
  for (int k = 1; k <= num_types; ++k) {
    report.per_class[k] = SpanScore::FromCounts(tp[k], fp[k], fn[k]);
    total_tp += tp[k];
    total_fp += fp[k];
    total_fn += fn[k];
  }
  report.micro = SpanScore::FromCounts(total_tp, total_fp, total_fn);
  return report;
}

std::vector<ClassAudit> AuditNoise(const SpanDataset& dataset) {
  const int c = dataset.labels.num_types();
  std::vector<ClassAudit> audit(c + 1);
  for (size_t id = 0; id < dataset.sentences.size(); ++id) {
    const auto& sentence = dataset.sentences[id];
    if (!sentence.gold_spans) throw DataError("noise audit needs gold spans on every sentence");
    const std::set<Span> gold(sentence.gold_spans->begin(), sentence.gold_spans->end());
    const std::set<Span> distant(sentence.distant_spans.begin(), sentence.distant_spans.end());
    for (const auto& span : distant) {
      if (span.label < 1 || span.label > c) continue;
      auto& row = audit[span.label];
      ++row.positives;
      if (gold.contains(span)) {
        ++row.true_positives;
      } else {
        ++row.false_positives;
      }
    }
    const int sid = static_cast<int>(id);
    for (const auto& span : gold) {
      if (span.label < 1 || span.label > c) continue;
      if (distant.contains(span)) continue;
      if (dataset.mask_list.contains({sid, span.start, span.end})) continue;
      ++audit[span.label].false_negatives;
    }
  }
  return audit;
}

double RocAuc(std::span<const double> scores, std::span<const char> is_positive) {
  if (scores.size() != is_positive.size()) throw ContractViolation("score/label size mismatch");
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double positive_rank_sum = 0.0;
  size_t positives = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double average_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) {
      if (is_positive[order[k]]) {
        positive_rank_sum += average_rank;
        ++positives;
      }
    }
    i = j;
  }
  const size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

}  // namespace spanclean
