#include "spanclean/distant.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "spanclean/errors.h"
#include "spanclean/random.h"

namespace spanclean {

using nlohmann::json;

void Gazetteer::add(std::vector<std::string> surface, std::string_view type) {
  if (surface.empty()) throw ConfigError("gazetteer entry with empty surface form");
  const int index = labels_.intern(type);
  max_length_ = std::max(max_length_, surface.size());
  auto [it, inserted] = entries_.try_emplace(std::move(surface), index);
  if (!inserted && it->second != index) {
    std::string joined;
    for (const auto& t : it->first) joined += (joined.empty() ? "" : " ") + t;
    spdlog::warn("gazetteer: '{}' retyped from {} to {}", joined, labels_.name(it->second), type);
    it->second = index;
  }
}

int Gazetteer::lookup(const std::vector<std::string>& tokens, size_t begin,
                      size_t length) const {
  std::vector<std::string> key(tokens.begin() + begin, tokens.begin() + begin + length);
  auto it = entries_.find(key);
  return it == entries_.end() ? kNonEntity : it->second;
}

Gazetteer ParseGazetteer(std::string_view text) {
  Gazetteer gazetteer;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    size_t tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected surface<TAB>TYPE");
    std::string_view type = line.substr(tab + 1);
    if (type.empty()) throw ParseError(line_no, "empty type");
    std::istringstream words{std::string(line.substr(0, tab))};
    std::vector<std::string> surface;
    for (std::string w; words >> w;) surface.push_back(w);
    if (surface.empty()) throw ParseError(line_no, "empty surface form");
    gazetteer.add(std::move(surface), type);
  }
  return gazetteer;
}

SpanDataset Annotate(const SpanDataset& dataset, const Gazetteer& gazetteer) {
  SpanDataset out = dataset;
  out.samples.clear();
  out.max_width = -1;
  // Gazetteer type index -> dataset label index.
  std::vector<int> remap(gazetteer.labels().num_classes(), kNonEntity);
  for (int t = 1; t <= gazetteer.labels().num_types(); ++t) {
    remap[t] = out.labels.intern(gazetteer.labels().name(t));
  }
  for (auto& sentence : out.sentences) {
    sentence.distant_spans.clear();
    const size_t n = sentence.tokens.size();
    size_t i = 0;
    while (i < n) {
      size_t longest = std::min(gazetteer.max_length(), n - i);
      int matched_type = kNonEntity;
      size_t matched_length = 0;
      for (size_t len = longest; len >= 1; --len) {
        int type = gazetteer.lookup(sentence.tokens, i, len);
        if (type != kNonEntity) {
          matched_type = type;
          matched_length = len;
          break;
        }
      }
      if (matched_type == kNonEntity) {
        ++i;
        continue;
      }
      sentence.distant_spans.push_back(
          {static_cast<int>(i), static_cast<int>(i + matched_length - 1), remap[matched_type]});
      i += matched_length;
    }
  }
  return out;
}

std::string_view NoiseOpName(NoiseOp op) {
  switch (op) {
    case NoiseOp::kDropped:
      return "dropped";
    case NoiseOp::kFlipped:
      return "flipped";
    case NoiseOp::kAdded:
      return "added";
  }
  return "?";
}

NoiseOp ParseNoiseOp(std::string_view name) {
  if (name == "dropped") return NoiseOp::kDropped;
  if (name == "flipped") return NoiseOp::kFlipped;
  if (name == "added") return NoiseOp::kAdded;
  throw DataError("unknown ledger op: " + std::string(name));
}

namespace {

void ValidateNoiseSpec(const NoiseSpec& spec, int num_types) {
  auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!in_unit(spec.fn_rate)) throw ConfigError("fn_rate must lie in [0, 1]");
  if (!in_unit(spec.fp_type_rate)) throw ConfigError("fp_type_rate must lie in [0, 1]");
  if (spec.fn_rate + spec.fp_type_rate > 1.0) {
    throw ConfigError("fn_rate + fp_type_rate must not exceed 1");
  }
  if (!(spec.fp_spurious_rate >= 0.0)) throw ConfigError("fp_spurious_rate must be >= 0");
  if (spec.max_width < 0) throw ConfigError("noise max_width must be >= 0");
  if (spec.fp_type_rate > 0.0 && num_types < 2) {
    throw ConfigError("type flips need at least two entity types");
  }
  if (spec.fp_spurious_rate > 0.0 && num_types < 1) {
    throw ConfigError("spurious spans need at least one entity type");
  }
}

bool Overlaps(const Span& a, const Span& b) { return a.start <= b.end && b.start <= a.end; }

}  // namespace

NoisyCorpus InjectNoise(const SpanDataset& dataset, const NoiseSpec& spec) {
  const int c = dataset.labels.num_types();
  ValidateNoiseSpec(spec, c);
  NoisyCorpus result;
  result.dataset = dataset;
  result.dataset.samples.clear();
  result.dataset.max_width = -1;

  for (size_t id = 0; id < dataset.sentences.size(); ++id) {
    const auto& source = dataset.sentences[id];
    if (!source.gold_spans) {
      throw DataError("sentence " + std::to_string(id) + " has no gold spans to corrupt");
    }
    auto& sentence = result.dataset.sentences[id];
    sentence.distant_spans.clear();
    const int sid = static_cast<int>(id);
    Rng rng(DeriveSeed(spec.seed, Stream::kNoise, id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Span> gold = *source.gold_spans;
    std::sort(gold.begin(), gold.end());
    for (const auto& span : gold) {
      const double u = unit(rng);
      if (u < spec.fn_rate) {
        result.ledger.push_back({sid, span, NoiseOp::kDropped, span.label});
      } else if (u < spec.fn_rate + spec.fp_type_rate) {
        // Uniform over the other c - 1 types.
        std::uniform_int_distribution<int> pick(1, c - 1);
        int type = pick(rng);
        if (type >= span.label) ++type;
        Span flipped{span.start, span.end, type};
        sentence.distant_spans.push_back(flipped);
        result.ledger.push_back({sid, flipped, NoiseOp::kFlipped, span.label});
      } else {
        sentence.distant_spans.push_back(span);
      }
    }

    if (spec.fp_spurious_rate > 0.0) {
      std::poisson_distribution<int> count_dist(spec.fp_spurious_rate);
      const int wanted = count_dist(rng);
      const int n = source.size();
      const int max_w = std::min(spec.max_width, n - 1);
      for (int k = 0; k < wanted; ++k) {
        // Bounded retries; a crowded sentence may accept fewer spans.
        for (int attempt = 0; attempt < 32; ++attempt) {
          const int width = std::uniform_int_distribution<int>(0, max_w)(rng);
          const int start = std::uniform_int_distribution<int>(0, n - 1 - width)(rng);
          const int type = std::uniform_int_distribution<int>(1, c)(rng);
          Span candidate{start, start + width, type};
          auto clash = [&](const Span& s) { return Overlaps(s, candidate); };
          if (std::any_of(gold.begin(), gold.end(), clash) ||
              std::any_of(sentence.distant_spans.begin(), sentence.distant_spans.end(), clash)) {
            continue;
          }
          sentence.distant_spans.push_back(candidate);
          result.ledger.push_back({sid, candidate, NoiseOp::kAdded, type});
          break;
        }
      }
    }
    std::sort(sentence.distant_spans.begin(), sentence.distant_spans.end());
  }
  return result;
}

std::string WriteLedger(const std::vector<LedgerEntry>& ledger, const LabelSet& labels) {
  std::string out;
  for (const auto& entry : ledger) {
    json record{{"sentence_id", entry.sentence_id},
                {"start", entry.span.start},
                {"end", entry.span.end},
                {"label", labels.name(entry.span.label)},
                {"op", NoiseOpName(entry.op)}};
    if (entry.op == NoiseOp::kFlipped) record["original_label"] = labels.name(entry.original_label);
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<LedgerEntry> ParseLedger(std::string_view text, const LabelSet& labels) {
  std::vector<LedgerEntry> ledger;
  std::istringstream in{std::string(text)};
  size_t line_no = 0;
  auto label_of = [&](const json& value) {
    auto found = labels.find(value.get<std::string>());
    if (!found) throw ParseError(line_no, "unknown label " + value.get<std::string>());
    return *found;
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json record = json::parse(line);
      LedgerEntry entry;
      entry.sentence_id = record.at("sentence_id").get<int>();
      entry.span = {record.at("start").get<int>(), record.at("end").get<int>(),
                    label_of(record.at("label"))};
      entry.op = ParseNoiseOp(record.at("op").get<std::string>());
      entry.original_label = entry.op == NoiseOp::kFlipped ? label_of(record.at("original_label"))
                                                           : entry.span.label;
      ledger.push_back(entry);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return ledger;
}

namespace {

std::string TokenName(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", index);
  return buf;
}

std::string TypeName(int type) {
  static const char* kNames[] = {"PER", "LOC", "ORG", "MISC"};
  if (type >= 1 && type <= 4) return kNames[type - 1];
  return "TYPE" + std::to_string(type);
}

}  // namespace

SyntheticCorpus GenerateSynthetic(const SyntheticConfig& config) {
  if (config.num_types < 2) throw ConfigError("synthetic corpus needs at least 2 types");
  if (config.vocab_size < 10 * config.num_types) {
    throw ConfigError("vocab_size must be at least 10 x num_types");
  }
  if (config.num_sentences < 0) throw ConfigError("num_sentences must be >= 0");
  if (config.min_length < 1 || config.max_length < config.min_length) {
    throw ConfigError("sentence length range is invalid");
  }
  if (!(config.entity_rate >= 0.0 && config.entity_rate <= 1.0)) {
    throw ConfigError("entity_rate must lie in [0, 1]");
  }
  const int per_type = std::max(
      1, static_cast<int>(config.vocab_size * config.type_vocab_fraction));
  const int background = config.vocab_size - per_type * config.num_types;
  if (per_type < 1 || background < per_type) {
    throw ConfigError("vocabulary too small for the requested entity sub-vocabularies");
  }

  SyntheticCorpus corpus;
  std::vector<std::string> type_names;
  for (int t = 1; t <= config.num_types; ++t) type_names.push_back(TypeName(t));
  corpus.dataset.labels = LabelSet(type_names);
  corpus.vocabulary.resize(config.num_types + 1);
  corpus.entity_counts.assign(config.num_types + 1, 0);

  // Background first, then one contiguous block per type.
  int next = 0;
  for (int i = 0; i < background; ++i) corpus.vocabulary[0].push_back(TokenName(next++));
  for (int t = 1; t <= config.num_types; ++t) {
    for (int i = 0; i < per_type; ++i) corpus.vocabulary[t].push_back(TokenName(next++));
  }

  auto zipf = [](size_t n) {
    std::vector<double> w(n);
    for (size_t r = 0; r < n; ++r) w[r] = 1.0 / static_cast<double>(r + 1);
    return std::discrete_distribution<size_t>(w.begin(), w.end());
  };
  auto background_dist = zipf(corpus.vocabulary[0].size());
  auto entity_dist = zipf(per_type);

  for (int id = 0; id < config.num_sentences; ++id) {
    Rng rng(DeriveSeed(config.seed, Stream::kSynthetic, static_cast<uint64_t>(id)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = std::uniform_int_distribution<int>(config.min_length, config.max_length)(rng);
    Sentence sentence;
    std::vector<Span> gold;
    int position = 0;
    while (position < n) {
      const bool previous_entity = !gold.empty() && gold.back().end == position - 1;
      if (!previous_entity && unit(rng) < config.entity_rate) {
        const int width = std::uniform_int_distribution<int>(1, 3)(rng);
        const int type = std::uniform_int_distribution<int>(1, config.num_types)(rng);
        if (position + width <= n) {
          for (int k = 0; k < width; ++k) {
            sentence.tokens.push_back(corpus.vocabulary[type][entity_dist(rng)]);
          }
          gold.push_back({position, position + width - 1, type});
          ++corpus.entity_counts[type];
          position += width;
          continue;
        }
      }
      sentence.tokens.push_back(corpus.vocabulary[0][background_dist(rng)]);
      ++position;
    }
    sentence.distant_spans = gold;
    sentence.gold_spans = std::move(gold);
    corpus.dataset.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

SyntheticConfig HeldOutConfig(const SyntheticConfig& config, int num_sentences) {
  SyntheticConfig out = config;
  out.seed = DeriveSeed(config.seed, Stream::kSynthetic, uint64_t{1} << 32);
  out.num_sentences = num_sentences;
  return out;
}

}  // namespace spanclean
