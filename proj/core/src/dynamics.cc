#include "spanclean/dynamics.h"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "spanclean/errors.h"

namespace spanclean {

using nlohmann::json;

double Margin(std::span<const double> logits, int assigned_label) {
  if (logits.size() < 2) throw ContractViolation("margin needs at least two classes");
  if (assigned_label < 0 || static_cast<size_t>(assigned_label) >= logits.size()) {
    throw ContractViolation("assigned label outside the logits");
  }
  double other = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < logits.size(); ++k) {
    if (static_cast<int>(k) != assigned_label) other = std::max(other, logits[k]);
  }
  return logits[assigned_label] - other;
}

std::vector<DynamicsRecord> InitRecords(const SpanDataset& dataset) {
  std::vector<DynamicsRecord> records(dataset.samples.size());
  for (size_t i = 0; i < records.size(); ++i) {
    records[i].key = dataset.samples[i].key();
    records[i].assigned_label = dataset.samples[i].assigned_label;
  }
  return records;
}

void SnapshotEpoch(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                   const SpanClassifierParams& params, const ModelConfig& config,
                   std::vector<DynamicsRecord>& records, const SnapshotOptions& options) {
  if (records.size() != dataset.samples.size()) {
    throw ContractViolation("dynamics records do not match the sample set");
  }
  const Matrix logits = ScoreSamples(dataset, corpus, params, config, options.threads);
  std::vector<double> row(static_cast<size_t>(logits.cols()));
  for (size_t i = 0; i < records.size(); ++i) {
    auto& record = records[i];
    if (record.key != dataset.samples[i].key()) {
      throw ContractViolation("dynamics records are out of order");
    }
    for (Eigen::Index k = 0; k < logits.cols(); ++k) row[k] = logits(i, k);
    const int label = record.assigned_label;
    record.margins.push_back(Margin(row, label));
    const double max = logits.row(i).maxCoeff();
    double denom = 0.0;
    for (double z : row) denom += std::exp(z - max);
    record.probs.push_back(std::exp(row[label] - max) / denom);
    if (options.keep_logits) record.logits.push_back(row);
  }
}

void Finalize(DynamicsRecord& record) {
  const size_t epochs = record.margins.size();
  if (epochs == 0 || record.probs.size() != epochs) {
    throw ContractViolation("dynamics record has no complete epochs");
  }
  const double count = static_cast<double>(epochs);
  double margin_sum = 0.0;
  double prob_sum = 0.0;
  for (size_t e = 0; e < epochs; ++e) {
    margin_sum += record.margins[e];
    prob_sum += record.probs[e];
  }
  record.aum = margin_sum / count;
  record.confidence = prob_sum / count;
  double spread = 0.0;
  for (double p : record.probs) spread += (p - record.confidence) * (p - record.confidence);
  record.variability = std::sqrt(spread / count);
  if (!std::isfinite(record.aum) || !std::isfinite(record.confidence)) {
    throw NumericError("non-finite training dynamics for sample (" +
                       std::to_string(record.key.sentence_id) + ", " +
                       std::to_string(record.key.start) + ", " + std::to_string(record.key.end) +
                       ")");
  }
}

void Finalize(std::vector<DynamicsRecord>& records) {
  for (auto& r : records) Finalize(r);
}

std::string WriteDynamics(const std::vector<DynamicsRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json line{{"sentence_id", r.key.sentence_id},
              {"start", r.key.start},
              {"end", r.key.end},
              {"label", r.assigned_label},
              {"margins", r.margins},
              {"probs", r.probs},
              {"aum", r.aum},
              {"confidence", r.confidence},
              {"variability", r.variability}};
    if (!r.logits.empty()) line["logits"] = r.logits;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::vector<DynamicsRecord> ParseDynamics(std::string_view text) {
  std::vector<DynamicsRecord> records;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      json j = json::parse(line);
      DynamicsRecord r;
      r.key = {j.at("sentence_id").get<int>(), j.at("start").get<int>(), j.at("end").get<int>()};
      r.assigned_label = j.at("label").get<int>();
      r.margins = j.at("margins").get<std::vector<double>>();
      r.probs = j.at("probs").get<std::vector<double>>();
      r.aum = j.at("aum").get<double>();
      r.confidence = j.at("confidence").get<double>();
      r.variability = j.at("variability").get<double>();
      if (j.contains("logits")) r.logits = j["logits"].get<std::vector<std::vector<double>>>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return records;
}

}  // namespace spanclean
