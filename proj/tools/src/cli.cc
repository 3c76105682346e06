#include "cli.h"

#include <cstdio>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "spanclean/checkpoint.h"
#include "spanclean/config.h"
#include "spanclean/corpus.h"
#include "spanclean/distant.h"
#include "spanclean/dynamics.h"
#include "spanclean/errors.h"
#include "spanclean/evaluation.h"
#include "spanclean/pipeline.h"
#include "spanclean/thresholding.h"

namespace spanclean::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags that override config-file values when given.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<int> threads;

  std::optional<std::string> train;
  std::optional<std::string> gold;
  std::optional<std::string> test;
  std::optional<std::string> gazetteer;
  std::optional<std::string> predictions;
  std::optional<std::string> dynamics;

  std::optional<int> epochs;
  std::optional<int> final_epochs;
  std::optional<double> k_pos;
  std::optional<double> k_neg;
  std::optional<bool> topneg;
  std::optional<double> topneg_fraction;
  std::optional<double> learning_rate;
  std::optional<int> batch_sentences;
  std::optional<std::string> encoder;
  std::optional<int> max_width;
  std::optional<bool> mask_removed_positives;
  std::optional<bool> keep_logits;
  std::optional<bool> lowercase;

  std::optional<double> fn_rate;
  std::optional<double> fp_type_rate;
  std::optional<double> fp_spurious_rate;
  std::optional<int> sentences;
  std::optional<int> test_sentences;
  std::optional<int> types;
  std::optional<int> vocab;

  // eval-only inputs
  std::optional<std::string> checkpoint;
  std::optional<std::string> audit;
};

template <typename T>
void Apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

RunConfig BuildConfig(const Overrides& o) {
  RunConfig config = PresetConfig(o.preset.value_or("desk"));
  if (o.config_path) {
    json file;
    try {
      file = json::parse(ReadTextFile(*o.config_path));
    } catch (const json::exception& e) {
      throw ConfigError(*o.config_path + ": " + e.what());
    }
    // An explicit --preset outranks the file's preset key.
    if (o.preset && file.is_object()) file.erase("preset");
    config = RunConfigFromJson(file, config);
  }
  if (o.seed) {
    config.seed = *o.seed;
    config.noise.seed = *o.seed;
    config.synthetic.seed = *o.seed;
  }
  Apply(o.out, config.output_dir);
  Apply(o.format, config.format);
  Apply(o.threads, config.threads);
  Apply(o.train, config.train_path);
  Apply(o.gold, config.gold_path);
  Apply(o.test, config.test_path);
  Apply(o.gazetteer, config.gazetteer_path);
  Apply(o.predictions, config.predictions_path);
  Apply(o.dynamics, config.dynamics_path);
  Apply(o.epochs, config.epochs);
  Apply(o.final_epochs, config.final_epochs);
  Apply(o.k_pos, config.k_pos);
  Apply(o.k_neg, config.k_neg);
  Apply(o.topneg, config.topneg);
  Apply(o.topneg_fraction, config.topneg_fraction);
  Apply(o.learning_rate, config.learning_rate);
  Apply(o.batch_sentences, config.batch_sentences);
  if (o.encoder) config.model.encoder = ParseEncoderVariant(*o.encoder);
  if (o.max_width) {
    config.model.max_width = *o.max_width;
    config.noise.max_width = *o.max_width;
  }
  Apply(o.mask_removed_positives, config.mask_removed_positives);
  Apply(o.keep_logits, config.keep_logits);
  Apply(o.lowercase, config.lowercase);
  Apply(o.fn_rate, config.noise.fn_rate);
  Apply(o.fp_type_rate, config.noise.fp_type_rate);
  Apply(o.fp_spurious_rate, config.noise.fp_spurious_rate);
  Apply(o.sentences, config.synthetic.num_sentences);
  Apply(o.test_sentences, config.synthetic_test_sentences);
  Apply(o.types, config.synthetic.num_types);
  Apply(o.vocab, config.synthetic.vocab_size);
  config.Validate();
  return config;
}

void Require(const std::string& value, const char* field, const char* flag) {
  if (value.empty()) {
    throw ConfigError(std::string(field) + " is required (set it in the config or pass " + flag +
                      ")");
  }
}

SpanDataset LoadCorpus(const std::string& path, const RunConfig& config,
                       const LabelSet* known = nullptr) {
  return ReadDataset(path, ParseCorpusFormat(config.format), known);
}

SpanDataset LoadTrain(const RunConfig& config) {
  Require(config.train_path, "train_path", "--train");
  SpanDataset train = LoadCorpus(config.train_path, config);
  if (!config.gold_path.empty()) AttachGold(train, LoadCorpus(config.gold_path, config));
  return train;
}

void WriteJson(const fs::path& path, const json& j) { WriteTextFile(path, j.dump(2) + "\n"); }

std::string Fixed(double value, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

json ScoreToJson(const SpanScore& s) {
  return {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn},
          {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

json ScoreReportToJson(const ScoreReport& r, const LabelSet& labels) {
  json per_class = json::object();
  for (size_t c = 1; c < r.per_class.size(); ++c) {
    per_class[labels.name(static_cast<int>(c))] = ScoreToJson(r.per_class[c]);
  }
  return {{"micro", ScoreToJson(r.micro)}, {"per_class", per_class}};
}

void PrintScore(std::ostream& out, const ScoreReport& r, const LabelSet& labels) {
  out << "P " << Fixed(r.micro.precision) << " R " << Fixed(r.micro.recall) << " F1 "
      << Fixed(r.micro.f1) << " (tp " << r.micro.tp << ", fp " << r.micro.fp << ", fn "
      << r.micro.fn << ")\n";
  for (size_t c = 1; c < r.per_class.size(); ++c) {
    const SpanScore& s = r.per_class[c];
    out << "  " << labels.name(static_cast<int>(c)) << ": P " << Fixed(s.precision) << " R "
        << Fixed(s.recall) << " F1 " << Fixed(s.f1) << "\n";
  }
}

void PrintAudit(std::ostream& out, const std::vector<ClassAudit>& audit, const LabelSet& labels) {
  out << "label\tpositives\ttrue_positives\tfalse_annotations\n";
  for (size_t c = 1; c < audit.size(); ++c) {
    out << labels.name(static_cast<int>(c)) << "\t" << audit[c].positives << "\t"
        << audit[c].true_positives << "\t" << audit[c].false_annotations() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Commands

int CmdClean(const RunConfig& config, std::ostream& out) {
  const SpanDataset train = LoadTrain(config);
  const CleaningResult result = RunCleaning(train, MakeCleanConfig(config));
  const fs::path dir = config.output_dir;
  WriteTextFile(dir / "cleaned.jsonl", WriteSpans(result.cleaned));
  WriteJson(dir / "report.json", CleaningReportToJson(result.report, train.labels));
  WriteJson(dir / "thresholds.json", ThresholdPairToJson(result.report.thresholds));
  WriteTextFile(dir / "dynamics_threshold.jsonl", WriteDynamics(result.threshold_dynamics));
  WriteTextFile(dir / "dynamics_main.jsonl", WriteDynamics(result.main_dynamics));
  WriteJson(dir / "timings.json", TimingsToJson(result.timings));

  const CleaningReport& r = result.report;
  out << "tau_pos " << r.thresholds.tau_pos << " (k=" << r.thresholds.k_pos << "), tau_neg "
      << r.thresholds.tau_neg << " (k=" << r.thresholds.k_neg << ")\n";
  out << "positives kept " << r.kept_positives << " removed " << r.removed_positives
      << "; negatives kept " << r.kept_negatives << " removed " << r.removed_negatives << "\n";
  if (r.has_gold) {
    const auto& p = r.positive_identification;
    const auto& n = r.negative_identification;
    out << "mislabel identification: positives P " << Fixed(p.precision) << " R "
        << Fixed(p.recall) << " AUC " << Fixed(p.auc) << "; negatives P " << Fixed(n.precision)
        << " R " << Fixed(n.recall) << " AUC " << Fixed(n.auc) << "\n";
    out << "audit before cleaning:\n";
    PrintAudit(out, r.audit_before, train.labels);
    out << "audit after cleaning:\n";
    PrintAudit(out, r.audit_after, train.labels);
  }
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

int CmdTrain(const RunConfig& config, std::ostream& out) {
  const SpanDataset train = LoadTrain(config);
  std::optional<SpanDataset> test;
  if (!config.test_path.empty()) test = LoadCorpus(config.test_path, config);
  const FinalResult result = TrainFinal(train, test ? &*test : nullptr, MakeFinalConfig(config));
  const fs::path dir = config.output_dir;
  SaveCheckpoint(dir / "model.ckpt", result.checkpoint);
  json metrics{{"epochs", json::array()}, {"config", RunConfigToJson(config)}};
  for (const auto& e : result.epochs) {
    metrics["epochs"].push_back({{"loss", e.loss}, {"steps", e.steps}, {"terms", e.terms}});
  }
  if (result.test) {
    metrics["test"] = ScoreReportToJson(*result.test, result.checkpoint.labels);
    PrintScore(out, *result.test, result.checkpoint.labels);
  }
  WriteJson(dir / "metrics.json", metrics);
  out << "wrote " << (dir / "model.ckpt").string() << "\n";
  return kOk;
}

int CmdEval(const RunConfig& config, const Overrides& o, std::ostream& out) {
  json report = json::object();
  bool did_something = false;
  if (!config.predictions_path.empty() || o.checkpoint) {
    Require(config.test_path, "test_path", "--test");
    const SpanDataset gold = LoadCorpus(config.test_path, config);
    LabelSet labels;
    std::vector<std::vector<Span>> predicted;
    if (o.checkpoint) {
      const Checkpoint ck = LoadCheckpoint(*o.checkpoint);
      labels = ck.labels;
      predicted = PredictDataset(ck, gold, config.threads);
    } else {
      const SpanDataset pred = LoadCorpus(config.predictions_path, config);
      labels = pred.labels;
      for (int c = 1; c <= gold.labels.num_types(); ++c) labels.intern(gold.labels.name(c));
      // Only the span layer of a predictions file counts.
      for (const auto& s : pred.sentences) {
        auto& spans = predicted.emplace_back();
        for (const Span& sp : s.distant_spans) {
          spans.push_back({sp.start, sp.end, *labels.find(pred.labels.name(sp.label))});
        }
      }
    }
    const auto gold_layer = GoldLayer(gold, labels);
    if (predicted.size() != gold_layer.size()) {
      throw DataError("predictions have " + std::to_string(predicted.size()) +
                      " sentences, gold has " + std::to_string(gold_layer.size()));
    }
    const ScoreReport score = ScoreSpans(predicted, gold_layer, labels.num_types());
    PrintScore(out, score, labels);
    report["score"] = ScoreReportToJson(score, labels);
    did_something = true;
  }
  if (o.audit) {
    SpanDataset data = LoadCorpus(*o.audit, config);
    if (!config.gold_path.empty()) AttachGold(data, LoadCorpus(config.gold_path, config));
    if (!data.has_gold()) throw DataError(*o.audit + ": audit needs gold spans on every sentence");
    const auto audit = AuditNoise(data);
    PrintAudit(out, audit, data.labels);
    json rows = json::array();
    for (size_t c = 1; c < audit.size(); ++c) {
      rows.push_back({{"label", data.labels.name(static_cast<int>(c))},
                      {"positives", audit[c].positives},
                      {"true_positives", audit[c].true_positives},
                      {"false_annotations", audit[c].false_annotations()}});
    }
    report["audit"] = rows;
    did_something = true;
  }
  if (!did_something) {
    throw ConfigError("eval needs --pred or --checkpoint (with --test), or --audit");
  }
  if (o.out) WriteJson(fs::path(config.output_dir) / "eval.json", report);
  return kOk;
}

int CmdSynth(const RunConfig& config, std::ostream& out) {
  const SyntheticCorpus train = GenerateSynthetic(config.synthetic);
  const fs::path dir = config.output_dir;
  WriteTextFile(dir / "train.jsonl", WriteSpans(train.dataset));
  out << "wrote " << (dir / "train.jsonl").string() << " (" << train.dataset.sentences.size()
      << " sentences)\n";
  if (config.synthetic_test_sentences > 0) {
    const SyntheticCorpus test =
        GenerateSynthetic(HeldOutConfig(config.synthetic, config.synthetic_test_sentences));
    WriteTextFile(dir / "test.jsonl", WriteSpans(test.dataset));
    out << "wrote " << (dir / "test.jsonl").string() << " (" << test.dataset.sentences.size()
        << " sentences)\n";
  }
  return kOk;
}

int CmdInject(const RunConfig& config, std::ostream& out) {
  Require(config.train_path, "train_path", "--input");
  SpanDataset input = LoadCorpus(config.train_path, config);
  if (!input.has_gold()) {
    // Without a gold layer the current spans are taken as gold.
    for (auto& s : input.sentences) s.gold_spans = s.distant_spans;
  }
  const NoisyCorpus noisy = InjectNoise(input, config.noise);
  const fs::path dir = config.output_dir;
  WriteTextFile(dir / "noisy.jsonl", WriteSpans(noisy.dataset));
  WriteTextFile(dir / "ledger.jsonl", WriteLedger(noisy.ledger, noisy.dataset.labels));
  size_t counts[3] = {0, 0, 0};
  for (const auto& e : noisy.ledger) ++counts[static_cast<int>(e.op)];
  out << "dropped " << counts[0] << ", flipped " << counts[1] << ", added " << counts[2] << "\n";
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

int CmdAnnotate(const RunConfig& config, std::ostream& out) {
  Require(config.train_path, "train_path", "--input");
  Require(config.gazetteer_path, "gazetteer_path", "--gazetteer");
  const SpanDataset input = LoadCorpus(config.train_path, config);
  const Gazetteer gazetteer = ParseGazetteer(ReadTextFile(config.gazetteer_path));
  const SpanDataset annotated = Annotate(input, gazetteer);
  const fs::path path = fs::path(config.output_dir) / "annotated.jsonl";
  WriteTextFile(path, WriteSpans(annotated));
  size_t spans = 0;
  for (const auto& s : annotated.sentences) spans += s.distant_spans.size();
  out << "annotated " << spans << " spans in " << annotated.sentences.size() << " sentences\n";
  out << "wrote " << path.string() << "\n";
  return kOk;
}

int CmdDatamap(const RunConfig& config, std::ostream& out) {
  Require(config.dynamics_path, "dynamics_path", "--dynamics");
  const auto records = ParseDynamics(ReadTextFile(config.dynamics_path));
  const fs::path prefix = fs::path(config.output_dir) / "datamap";
  ExportDatamap(records, prefix);
  out << "wrote " << records.size() << " rows to " << prefix.string() << ".csv and "
      << prefix.string() << ".svg\n";
  return kOk;
}

int CmdStats(const RunConfig& config, std::ostream& out) {
  const SpanDataset data = LoadTrain(config);
  const DatasetStats stats = ComputeStats(EnumerateSamples(data, config.model.max_width));
  json per_class = json::object();
  for (int c = 1; c < static_cast<int>(stats.positives_per_class.size()); ++c) {
    per_class[data.labels.name(c)] = stats.positives_per_class[c];
  }
  json j{{"sentences", stats.sentences},
         {"tokens", stats.tokens},
         {"entity_spans", stats.entity_spans},
         {"overwidth_spans", stats.overwidth_spans},
         {"positives", stats.positives},
         {"negatives", stats.negatives},
         {"masked", stats.masked},
         {"gold_spans", stats.gold_spans},
         {"positives_per_class", per_class}};
  out << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-dynamics label cleaning for distantly supervised span NER", "spanclean"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config_path, "JSON run config");
  app.add_option("--preset", o.preset, "desk | conll-preset | small-corpus-preset");
  app.add_option("--seed", o.seed, "Base seed (also seeds noise and synthetic data)");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--format", o.format, "Corpus format: spans | bio");
  app.add_option("--threads", o.threads, "Worker threads for scoring");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  auto add_training = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", o.epochs, "Epochs per cleaning run");
    cmd->add_option("--lr", o.learning_rate, "Adam learning rate");
    cmd->add_option("--batch-sentences", o.batch_sentences, "Sentences per batch");
    cmd->add_option("--topneg", o.topneg, "Restrict negatives to the TopNeg selection (true|false)");
    cmd->add_option("--topneg-fraction", o.topneg_fraction, "TopNeg fraction N_r");
    cmd->add_option("--encoder", o.encoder, "lookup | window");
    cmd->add_option("--max-width", o.max_width, "Span width cap L");
    cmd->add_option("--lowercase", o.lowercase, "Lowercase tokens (true|false)");
  };

  auto* clean = app.add_subcommand("clean", "Estimate thresholds and filter the training data");
  clean->add_option("--train", o.train, "Distantly labeled training corpus");
  clean->add_option("--gold", o.gold, "Gold layer aligned with --train");
  add_training(clean);
  clean->add_option("--k-pos", o.k_pos, "Positive percentile");
  clean->add_option("--k-neg", o.k_neg, "Negative percentile");
  clean->add_option("--mask-removed-positives", o.mask_removed_positives, "true|false");
  clean->add_option("--keep-logits", o.keep_logits, "Store full logits in the dumps");

  auto* train = app.add_subcommand("train", "Train a span classifier and optionally score it");
  train->add_option("--train", o.train, "Training corpus (masked spans are skipped)");
  train->add_option("--test", o.test, "Gold test corpus");
  add_training(train);
  train->add_option("--final-epochs", o.final_epochs, "Training epochs");

  auto* eval = app.add_subcommand("eval", "Score predictions or audit a distant layer");
  eval->add_option("--pred", o.predictions, "Predicted spans corpus");
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint to predict with");
  eval->add_option("--test,--gold-test", o.test, "Gold corpus to score against");
  eval->add_option("--audit", o.audit, "Corpus whose span layer is audited against its gold");
  eval->add_option("--gold", o.gold, "Gold layer aligned with --audit");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with train/test splits");
  synth->add_option("--sentences", o.sentences, "Training sentences");
  synth->add_option("--test-sentences", o.test_sentences, "Held-out sentences (0 to skip)");
  synth->add_option("--types", o.types, "Entity types");
  synth->add_option("--vocab", o.vocab, "Vocabulary size");

  auto* inject = app.add_subcommand("inject", "Corrupt gold spans and write the noise ledger");
  inject->add_option("--input", o.train, "Corpus with gold spans");
  inject->add_option("--fn-rate", o.fn_rate, "Probability of dropping a gold span");
  inject->add_option("--fp-type-rate", o.fp_type_rate, "Probability of retyping a kept span");
  inject->add_option("--fp-spurious-rate", o.fp_spurious_rate, "Spurious spans per sentence");
  inject->add_option("--max-width", o.max_width, "Width cap for spurious spans");

  auto* annotate = app.add_subcommand("annotate", "Label a corpus by gazetteer matching");
  annotate->add_option("--input", o.train, "Corpus to annotate");
  annotate->add_option("--gazetteer", o.gazetteer, "surface<TAB>TYPE lines");

  auto* datamap = app.add_subcommand("datamap", "Export a data map from a dynamics dump");
  datamap->add_option("--dynamics", o.dynamics, "Dynamics dump");

  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  stats->add_option("--input,--train", o.train, "Corpus");
  stats->add_option("--gold", o.gold, "Gold layer aligned with --input");
  stats->add_option("--max-width", o.max_width, "Span width cap L");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    const RunConfig config = BuildConfig(o);
    if (clean->parsed()) return CmdClean(config, out);
    if (train->parsed()) return CmdTrain(config, out);
    if (eval->parsed()) return CmdEval(config, o, out);
    if (synth->parsed()) return CmdSynth(config, out);
    if (inject->parsed()) return CmdInject(config, out);
    if (annotate->parsed()) return CmdAnnotate(config, out);
    if (datamap->parsed()) return CmdDatamap(config, out);
    if (stats->parsed()) return CmdStats(config, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const ContractViolation& e) {
    err << "internal error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace spanclean::cli
