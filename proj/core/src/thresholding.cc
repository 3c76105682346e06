#include "spanclean/thresholding.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "spanclean/errors.h"
#include "spanclean/random.h"

namespace spanclean {

std::vector<size_t> LargestRemainder(std::span<const size_t> counts, size_t total) {
  const size_t sum = std::accumulate(counts.begin(), counts.end(), size_t{0});
  std::vector<size_t> quotas(counts.size(), 0);
  if (sum == 0) {
    if (total != 0) throw ConfigError("cannot allocate a quota over empty classes");
    return quotas;
  }
  std::vector<size_t> remainder(counts.size());
  size_t assigned = 0;
  for (size_t k = 0; k < counts.size(); ++k) {
    // Both stay far below 2^64 for any realistic corpus.
    const unsigned __int128 scaled = static_cast<unsigned __int128>(counts[k]) * total;
    quotas[k] = static_cast<size_t>(scaled / sum);
    remainder[k] = static_cast<size_t>(scaled % sum);
    assigned += quotas[k];
  }
  std::vector<size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (size_t i = 0; assigned < total; ++i) {
    ++quotas[order[i % order.size()]];
    ++assigned;
  }
  return quotas;
}

size_t ThresholdQuota(size_t positives, int num_types) {
  const size_t classes = static_cast<size_t>(num_types) + 1;
  return (2 * positives + classes) / (2 * classes);
}

ThresholdDataset BuildThresholdDataset(const SpanDataset& dataset, uint64_t seed) {
  if (!dataset.enumerated()) throw ContractViolation("threshold plan needs enumerated samples");
  const int c = dataset.labels.num_types();
  std::vector<std::vector<size_t>> by_class(c + 1);
  std::vector<size_t> negatives;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.assigned_label > c) throw DataError("sample carries a label outside the label set");
    if (s.positive()) {
      by_class[s.assigned_label].push_back(i);
    } else {
      negatives.push_back(i);
    }
  }
  size_t positives = 0;
  std::vector<size_t> counts(c, 0);
  for (int k = 1; k <= c; ++k) {
    counts[k - 1] = by_class[k].size();
    positives += counts[k - 1];
  }
  if (positives < static_cast<size_t>(c) + 1) {
    throw ConfigError("threshold estimation needs at least c + 1 = " + std::to_string(c + 1) +
                      " positive samples, found " + std::to_string(positives));
  }

  ThresholdDataset result;
  auto& plan = result.plan;
  plan.quota_total = ThresholdQuota(positives, c);
  if (negatives.size() < plan.quota_total) {
    throw ConfigError("not enough negative samples for " + std::to_string(plan.quota_total) +
                      " negative threshold samples");
  }
  plan.fake_label = dataset.labels.fake_label();
  plan.seed = seed;
  const auto quotas = LargestRemainder(counts, plan.quota_total);
  plan.positive_quotas.assign(c + 1, 0);
  std::copy(quotas.begin(), quotas.end(), plan.positive_quotas.begin() + 1);

  Rng rng(DeriveSeed(seed, Stream::kThresholdPlan));
  std::vector<size_t> chosen_pos;
  for (int k = 1; k <= c; ++k) {
    auto pool = by_class[k];
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen_pos.insert(chosen_pos.end(), pool.begin(), pool.begin() + plan.positive_quotas[k]);
  }
  auto neg_pool = negatives;
  std::shuffle(neg_pool.begin(), neg_pool.end(), rng);
  std::vector<size_t> chosen_neg(neg_pool.begin(), neg_pool.begin() + plan.quota_total);
  std::sort(chosen_pos.begin(), chosen_pos.end());
  std::sort(chosen_neg.begin(), chosen_neg.end());

  result.dataset = dataset;
  for (size_t i : chosen_pos) {
    auto& s = result.dataset.samples[i];
    plan.positive_keys.push_back(s.key());
    s.assigned_label = plan.fake_label;
    s.is_threshold_sample = true;
  }
  for (size_t i : chosen_neg) {
    auto& s = result.dataset.samples[i];
    plan.negative_keys.push_back(s.key());
    s.assigned_label = plan.fake_label;
    s.is_threshold_sample = true;
  }
  return result;
}

double NearestRankPercentile(std::vector<double> values, double k) {
  if (values.empty()) throw ContractViolation("percentile of an empty set");
  if (!(k > 0.0 && k <= 100.0)) throw ContractViolation("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double m = static_cast<double>(values.size());
  // k * m first keeps integer percentiles exact.
  double rank = std::ceil(k * m / 100.0 - 1e-9);
  rank = std::clamp(rank, 1.0, m);
  return values[static_cast<size_t>(rank) - 1];
}

ThresholdPair EstimateThresholds(const std::vector<DynamicsRecord>& records,
                                 const ThresholdPlan& plan, double k_pos, double k_neg) {
  if (plan.positive_keys.empty() || plan.negative_keys.empty()) {
    throw ContractViolation("threshold plan has no samples");
  }
  std::map<SampleKey, const DynamicsRecord*> by_key;
  for (const auto& r : records) by_key.emplace(r.key, &r);
  auto collect = [&](const std::vector<SampleKey>& keys) {
    std::vector<double> values;
    values.reserve(keys.size());
    for (const auto& key : keys) {
      auto it = by_key.find(key);
      if (it == by_key.end() || it->second->epochs() == 0) {
        throw ContractViolation("threshold sample lacks finalized dynamics");
      }
      values.push_back(it->second->aum);
    }
    return values;
  };
  ThresholdPair pair;
  pair.k_pos = k_pos;
  pair.k_neg = k_neg;
  pair.tau_pos = NearestRankPercentile(collect(plan.positive_keys), k_pos);
  pair.tau_neg = NearestRankPercentile(collect(plan.negative_keys), k_neg);
  pair.seed = plan.seed;
  return pair;
}

namespace {

// JSON has no infinities; forced cutoffs of -inf are written as strings.
nlohmann::json CutoffToJson(double value) {
  if (std::isfinite(value)) return value;
  if (std::isnan(value)) return "nan";
  return value > 0 ? "inf" : "-inf";
}

double CutoffFromJson(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const auto text = j.get<std::string>();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw DataError("bad threshold value: " + text);
}

}  // namespace

nlohmann::json ThresholdPairToJson(const ThresholdPair& pair) {
  return {{"tau_pos", CutoffToJson(pair.tau_pos)}, {"tau_neg", CutoffToJson(pair.tau_neg)},
          {"k_pos", pair.k_pos},
          {"k_neg", pair.k_neg},     {"seed", pair.seed},       {"epochs", pair.epochs},
          {"run_id", pair.run_id}};
}

ThresholdPair ThresholdPairFromJson(const nlohmann::json& j) {
  ThresholdPair pair;
  try {
    pair.tau_pos = CutoffFromJson(j.at("tau_pos"));
    pair.tau_neg = CutoffFromJson(j.at("tau_neg"));
    pair.k_pos = j.at("k_pos").get<double>();
    pair.k_neg = j.at("k_neg").get<double>();
    pair.seed = j.at("seed").get<uint64_t>();
    pair.epochs = j.at("epochs").get<int>();
    pair.run_id = j.value("run_id", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed thresholds record: ") + e.what());
  }
  return pair;
}

}  // namespace spanclean
