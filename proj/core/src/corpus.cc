#include "spanclean/corpus.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "spanclean/errors.h"

namespace spanclean {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> entity_types) {
  for (auto& name : entity_types) {
    if (name.empty()) throw ConfigError("empty entity type name");
    if (index_.contains(name)) throw ConfigError("duplicate entity type: " + name);
    intern(name);
  }
}

std::optional<int> LabelSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelSet::intern(std::string_view name) {
  if (name.empty()) throw ConfigError("empty entity type name");
  if (auto found = find(name)) return *found;
  names_.emplace_back(name);
  int index = static_cast<int>(names_.size());
  index_.emplace(names_.back(), index);
  return index;
}

const std::string& LabelSet::name(int index) const {
  static const std::string kOutside = "O";
  static const std::string kFake = "<threshold>";
  if (index == kNonEntity) return kOutside;
  if (index == fake_label()) return kFake;
  if (index < 0 || index > num_types()) {
    throw ContractViolation("label index out of range: " + std::to_string(index));
  }
  return names_[index - 1];
}

bool SpanDataset::has_gold() const {
  return !sentences.empty() &&
         std::all_of(sentences.begin(), sentences.end(),
                     [](const Sentence& s) { return s.gold_spans.has_value(); });
}

CorpusFormat ParseCorpusFormat(std::string_view name) {
  if (name == "bio") return CorpusFormat::kBio;
  if (name == "spans") return CorpusFormat::kSpans;
  throw ConfigError("unknown corpus format: " + std::string(name));
}

namespace {

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

int ResolveLabel(LabelSet& labels, std::string_view name, bool closed, size_t line) {
  if (closed) {
    auto found = labels.find(name);
    if (!found) throw ParseError(line, "unknown label: " + std::string(name));
    return *found;
  }
  return labels.intern(name);
}

}  // namespace

SpanDataset ParseBio(std::string_view text, const LabelSet* known) {
  SpanDataset dataset;
  if (known) dataset.labels = *known;
  const bool closed = known != nullptr;

  Sentence current;
  // Open span: start index and type, or type 0 when none.
  int open_start = 0;
  int open_type = kNonEntity;

  auto close_span = [&](int end) {
    if (open_type != kNonEntity) {
      current.distant_spans.push_back({open_start, end, open_type});
      open_type = kNonEntity;
    }
  };
  auto flush_sentence = [&] {
    close_span(current.size() - 1);
    if (!current.tokens.empty()) dataset.sentences.push_back(std::move(current));
    current = Sentence{};
  };

  const auto lines = SplitLines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    const size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      flush_sentence();
      continue;
    }
    size_t tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
      throw ParseError(line_no, "expected exactly two tab-separated fields");
    }
    std::string_view token = line.substr(0, tab);
    std::string_view tag = line.substr(tab + 1);
    if (token.empty()) throw ParseError(line_no, "empty token");

    const int position = current.size();
    if (tag == "O") {
      close_span(position - 1);
    } else if (tag.size() > 2 && (tag.starts_with("B-") || tag.starts_with("I-"))) {
      int type = ResolveLabel(dataset.labels, tag.substr(2), closed, line_no);
      bool continues = tag[0] == 'I' && open_type == type;
      if (!continues) {
        close_span(position - 1);
        open_start = position;
        open_type = type;
      }
    } else {
      throw ParseError(line_no, "unknown tag: " + std::string(tag));
    }
    current.tokens.emplace_back(token);
  }
  flush_sentence();
  return dataset;
}

std::string WriteBio(const SpanDataset& dataset) {
  std::string out;
  bool first = true;
  for (const auto& sentence : dataset.sentences) {
    std::vector<std::string> tags(sentence.tokens.size(), "O");
    std::vector<Span> spans = sentence.distant_spans;
    std::sort(spans.begin(), spans.end());
    int covered_until = -1;
    for (const auto& span : spans) {
      if (span.start <= covered_until) {
        throw ContractViolation("BIO output requires non-overlapping spans");
      }
      const auto& type = dataset.labels.name(span.label);
      tags[span.start] = "B-" + type;
      for (int t = span.start + 1; t <= span.end; ++t) tags[t] = "I-" + type;
      covered_until = span.end;
    }
    if (!first) out += '\n';
    first = false;
    for (size_t t = 0; t < sentence.tokens.size(); ++t) {
      out += sentence.tokens[t];
      out += '\t';
      out += tags[t];
      out += '\n';
    }
  }
  return out;
}

namespace {

std::vector<Span> ParseSpanArray(const json& array, LabelSet& labels, bool closed, int num_tokens,
                                 size_t line, const char* field) {
  if (!array.is_array()) throw ParseError(line, std::string(field) + " must be an array");
  std::vector<Span> spans;
  std::set<Span> seen;
  for (const auto& item : array) {
    if (!item.is_object() || !item.contains("start") || !item.contains("end") ||
        !item.contains("label")) {
      throw ParseError(line, std::string(field) + " entries need start, end and label");
    }
    if (!item["start"].is_number_integer() || !item["end"].is_number_integer() ||
        !item["label"].is_string()) {
      throw ParseError(line, std::string(field) + " entry has wrong field types");
    }
    Span span;
    span.start = item["start"].get<int>();
    span.end = item["end"].get<int>();
    if (span.start < 0 || span.end < span.start || span.end >= num_tokens) {
      throw ParseError(line, std::string(field) + " span [" + std::to_string(span.start) + ", " +
                                 std::to_string(span.end) + "] out of range");
    }
    span.label = ResolveLabel(labels, item["label"].get<std::string>(), closed, line);
    if (!seen.insert(span).second) {
      throw ParseError(line, std::string("duplicate span in ") + field);
    }
    spans.push_back(span);
  }
  return spans;
}

json SpansToJson(std::vector<Span> spans, const LabelSet& labels) {
  std::sort(spans.begin(), spans.end());
  json array = json::array();
  for (const auto& span : spans) {
    array.push_back({{"start", span.start}, {"end", span.end}, {"label", labels.name(span.label)}});
  }
  return array;
}

}  // namespace

SpanDataset ParseSpans(std::string_view text, const LabelSet* known) {
  SpanDataset dataset;
  bool closed = false;
  if (known) {
    dataset.labels = *known;
    closed = true;
  }
  const auto lines = SplitLines(text);
  bool seen_record = false;
  for (size_t i = 0; i < lines.size(); ++i) {
    const size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(line_no, "record must be a JSON object");

    if (record.contains("label_set")) {
      if (seen_record) throw ParseError(line_no, "label_set header must come first");
      if (!record["label_set"].is_array()) throw ParseError(line_no, "label_set must be an array");
      std::vector<std::string> names;
      for (const auto& name : record["label_set"]) {
        if (!name.is_string()) throw ParseError(line_no, "label names must be strings");
        names.push_back(name.get<std::string>());
      }
      LabelSet header;
      try {
        header = LabelSet(names);
      } catch (const ConfigError& e) {
        throw ParseError(line_no, e.what());
      }
      if (known && !(header == *known)) {
        throw ParseError(line_no, "label_set header disagrees with the expected label set");
      }
      dataset.labels = std::move(header);
      closed = true;
      seen_record = true;
      continue;
    }
    seen_record = true;

    if (!record.contains("tokens") || !record["tokens"].is_array()) {
      throw ParseError(line_no, "missing tokens array");
    }
    Sentence sentence;
    for (const auto& token : record["tokens"]) {
      if (!token.is_string()) throw ParseError(line_no, "tokens must be strings");
      sentence.tokens.push_back(token.get<std::string>());
    }
    if (sentence.tokens.empty()) throw ParseError(line_no, "sentence has no tokens");
    const int n = sentence.size();
    const json empty = json::array();
    sentence.distant_spans = ParseSpanArray(record.contains("spans") ? record["spans"] : empty,
                                            dataset.labels, closed, n, line_no, "spans");
    if (record.contains("gold_spans")) {
      sentence.gold_spans =
          ParseSpanArray(record["gold_spans"], dataset.labels, closed, n, line_no, "gold_spans");
    }
    const int sentence_id = static_cast<int>(dataset.sentences.size());
    if (record.contains("masked_spans")) {
      const auto& masked = record["masked_spans"];
      if (!masked.is_array()) throw ParseError(line_no, "masked_spans must be an array");
      for (const auto& item : masked) {
        if (!item.is_object() || !item.contains("start") || !item.contains("end") ||
            !item["start"].is_number_integer() || !item["end"].is_number_integer()) {
          throw ParseError(line_no, "masked_spans entries need integer start and end");
        }
        int start = item["start"].get<int>();
        int end = item["end"].get<int>();
        if (start < 0 || end < start || end >= n) {
          throw ParseError(line_no, "masked span out of range");
        }
        if (!dataset.mask_list.insert({sentence_id, start, end}).second) {
          throw ParseError(line_no, "duplicate masked span");
        }
      }
    }
    dataset.sentences.push_back(std::move(sentence));
  }
  return dataset;
}

std::string WriteSpans(const SpanDataset& dataset) {
  std::string out;
  out += json{{"label_set", dataset.labels.entity_types()}}.dump();
  out += '\n';
  auto mask_it = dataset.mask_list.begin();
  for (size_t id = 0; id < dataset.sentences.size(); ++id) {
    const auto& sentence = dataset.sentences[id];
    json record;
    record["tokens"] = sentence.tokens;
    record["spans"] = SpansToJson(sentence.distant_spans, dataset.labels);
    if (sentence.gold_spans) record["gold_spans"] = SpansToJson(*sentence.gold_spans, dataset.labels);
    json masked = json::array();
    while (mask_it != dataset.mask_list.end() && mask_it->sentence_id == static_cast<int>(id)) {
      masked.push_back({{"start", mask_it->start}, {"end", mask_it->end}});
      ++mask_it;
    }
    if (!masked.empty()) record["masked_spans"] = std::move(masked);
    out += record.dump();
    out += '\n';
  }
  return out;
}

void AttachGold(SpanDataset& dataset, const SpanDataset& gold) {
  if (dataset.sentences.size() != gold.sentences.size()) {
    throw DataError("gold file has " + std::to_string(gold.sentences.size()) +
                    " sentences, expected " + std::to_string(dataset.sentences.size()));
  }
  std::vector<int> remap(gold.labels.num_types() + 1, kNonEntity);
  for (int c = 1; c <= gold.labels.num_types(); ++c) {
    remap[c] = dataset.labels.intern(gold.labels.name(c));
  }
  for (size_t i = 0; i < gold.sentences.size(); ++i) {
    if (dataset.sentences[i].tokens != gold.sentences[i].tokens) {
      throw DataError("gold sentence " + std::to_string(i) + " has different tokens");
    }
    std::vector<Span> spans;
    for (const Span& sp : gold.sentences[i].distant_spans) {
      spans.push_back({sp.start, sp.end, remap[sp.label]});
    }
    std::sort(spans.begin(), spans.end());
    dataset.sentences[i].gold_spans = std::move(spans);
  }
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteTextFile(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

SpanDataset ReadDataset(const std::filesystem::path& path, CorpusFormat format,
                        const LabelSet* known) {
  const std::string text = ReadTextFile(path);
  try {
    return format == CorpusFormat::kBio ? ParseBio(text, known) : ParseSpans(text, known);
  } catch (const ParseError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void WriteDataset(const std::filesystem::path& path, const SpanDataset& dataset,
                  CorpusFormat format) {
  WriteTextFile(path, format == CorpusFormat::kBio ? WriteBio(dataset) : WriteSpans(dataset));
}

size_t CandidateSpanCount(int num_tokens, int max_width) {
  size_t count = 0;
  for (int w = 0; w <= std::min(max_width, num_tokens - 1); ++w) count += num_tokens - w;
  return count;
}

SpanDataset EnumerateSamples(const SpanDataset& dataset, int max_width) {
  if (max_width < 0) throw ContractViolation("max_width must be >= 0");
  SpanDataset out;
  out.labels = dataset.labels;
  out.sentences = dataset.sentences;
  out.mask_list = dataset.mask_list;
  out.max_width = max_width;

  size_t overwidth = 0;
  for (size_t id = 0; id < dataset.sentences.size(); ++id) {
    const auto& sentence = dataset.sentences[id];
    const int n = sentence.size();
    std::map<std::pair<int, int>, int> positive;
    for (const auto& span : sentence.distant_spans) {
      if (span.width() > max_width) {
        ++overwidth;
        continue;
      }
      auto [it, inserted] = positive.emplace(std::make_pair(span.start, span.end), span.label);
      if (!inserted && it->second != span.label) {
        throw DataError("sentence " + std::to_string(id) + " has conflicting labels for span [" +
                        std::to_string(span.start) + ", " + std::to_string(span.end) + "]");
      }
    }
    const int sid = static_cast<int>(id);
    for (int start = 0; start < n; ++start) {
      for (int end = start; end < n && end - start <= max_width; ++end) {
        if (out.mask_list.contains({sid, start, end})) continue;
        SpanSample sample{sid, start, end, kNonEntity, false};
        if (auto it = positive.find({start, end}); it != positive.end()) {
          sample.assigned_label = it->second;
        }
        out.samples.push_back(sample);
      }
    }
  }
  if (overwidth > 0) {
    spdlog::warn("{} distant spans wider than the width cap {} were dropped from the positives",
                 overwidth, max_width);
  }
  return out;
}

DatasetStats ComputeStats(const SpanDataset& dataset) {
  DatasetStats stats;
  stats.sentences = dataset.sentences.size();
  stats.positives_per_class.assign(dataset.labels.num_classes(), 0);
  for (const auto& sentence : dataset.sentences) {
    stats.tokens += sentence.tokens.size();
    stats.entity_spans += sentence.distant_spans.size();
    if (sentence.gold_spans) stats.gold_spans += sentence.gold_spans->size();
    if (dataset.enumerated()) {
      for (const auto& span : sentence.distant_spans) {
        if (span.width() > dataset.max_width) ++stats.overwidth_spans;
      }
    }
  }
  for (const auto& sample : dataset.samples) {
    if (sample.positive()) {
      if (sample.assigned_label < static_cast<int>(stats.positives_per_class.size())) {
        ++stats.positives_per_class[sample.assigned_label];
      }
      ++stats.positives;
    } else {
      ++stats.negatives;
    }
  }
  stats.masked = dataset.mask_list.size();
  return stats;
}

}  // namespace spanclean
