#include "spanclean/config.h"

#include <set>

#include "spanclean/errors.h"

namespace spanclean {

using nlohmann::json;

namespace {

void RejectUnknownKeys(const json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void Overlay(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json ModelConfigToJson(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"encoder", EncoderVariantName(c.encoder)},
          {"window_radius", c.window_radius},
          {"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"width_embed_dim", c.width_embed_dim},
          {"max_width", c.max_width},
          {"num_classes", c.num_classes},
          {"dropout_rate", c.dropout_rate}};
}

ModelConfig ModelConfigFromJson(const json& j, ModelConfig c) {
  RejectUnknownKeys(j,
                    {"vocab_size", "embed_dim", "encoder", "window_radius", "hidden_dim",
                     "num_layers", "width_embed_dim", "max_width", "num_classes", "dropout_rate"},
                    "model config");
  Overlay(j, "vocab_size", c.vocab_size);
  Overlay(j, "embed_dim", c.embed_dim);
  if (j.contains("encoder")) {
    std::string name;
    Overlay(j, "encoder", name);
    c.encoder = ParseEncoderVariant(name);
  }
  Overlay(j, "window_radius", c.window_radius);
  Overlay(j, "hidden_dim", c.hidden_dim);
  Overlay(j, "num_layers", c.num_layers);
  Overlay(j, "width_embed_dim", c.width_embed_dim);
  Overlay(j, "max_width", c.max_width);
  Overlay(j, "num_classes", c.num_classes);
  Overlay(j, "dropout_rate", c.dropout_rate);
  return c;
}

void RunConfig::Validate() const {
  ParseCorpusFormat(format);
  if (!(k_pos > 0.0 && k_pos <= 100.0)) throw ConfigError("k_pos must lie in (0, 100]");
  if (!(k_neg > 0.0 && k_neg <= 100.0)) throw ConfigError("k_neg must lie in (0, 100]");
  if (!(topneg_fraction > 0.0 && topneg_fraction <= 1.0)) {
    throw ConfigError("topneg_fraction must lie in (0, 1]");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (final_epochs < 1) throw ConfigError("final_epochs must be >= 1");
  if (batch_sentences < 1) throw ConfigError("batch_sentences must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (synthetic_test_sentences < 0) throw ConfigError("synthetic_test_sentences must be >= 0");
  ModelConfig probe = model;
  probe.vocab_size = std::max(probe.vocab_size, 2);
  probe.num_classes = std::max(probe.num_classes, 2);
  probe.Validate();
}

RunConfig PresetConfig(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  // Desk scale: from-scratch window encoder with a full-width span head.
  c.model.embed_dim = 50;
  c.model.encoder = EncoderVariant::kWindow;
  c.model.window_radius = 1;
  c.model.hidden_dim = 150;
  c.model.num_layers = 2;
  c.model.width_embed_dim = 150;
  c.model.max_width = 8;
  c.model.dropout_rate = 0.2;
  c.learning_rate = 1e-3;
  c.batch_sentences = 16;
  c.topneg = true;
  c.topneg_fraction = 0.05;
  c.k_pos = 100.0;
  c.k_neg = 90.0;
  // The final model trains on cleaned data and supervises every negative.
  c.final_topneg = false;
  if (name == "desk") {
    // A from-scratch encoder needs a larger step than fine-tuning, and
    // k_pos = 100 removes most clean positives at this scale.
    c.learning_rate = 3e-3;
    c.k_pos = 90.0;
    c.epochs = 10;
    c.final_epochs = 10;
    return c;
  }
  if (name == "conll-preset" || name == "small-corpus-preset") {
    c.learning_rate = 1e-5;
    c.epochs = name == "conll-preset" ? 5 : 10;
    return c;
  }
  throw ConfigError("unknown preset: " + std::string(name));
}

std::vector<std::string> PresetNames() { return {"desk", "conll-preset", "small-corpus-preset"}; }

json RunConfigToJson(const RunConfig& c) {
  json noise{{"fn_rate", c.noise.fn_rate},
             {"fp_type_rate", c.noise.fp_type_rate},
             {"fp_spurious_rate", c.noise.fp_spurious_rate},
             {"seed", c.noise.seed},
             {"max_width", c.noise.max_width}};
  json synthetic{{"vocab_size", c.synthetic.vocab_size},
                 {"num_types", c.synthetic.num_types},
                 {"num_sentences", c.synthetic.num_sentences},
                 {"min_length", c.synthetic.min_length},
                 {"max_length", c.synthetic.max_length},
                 {"entity_rate", c.synthetic.entity_rate},
                 {"type_vocab_fraction", c.synthetic.type_vocab_fraction},
                 {"seed", c.synthetic.seed}};
  return {{"preset", c.preset},
          {"train_path", c.train_path},
          {"gold_path", c.gold_path},
          {"test_path", c.test_path},
          {"dev_path", c.dev_path},
          {"gazetteer_path", c.gazetteer_path},
          {"predictions_path", c.predictions_path},
          {"dynamics_path", c.dynamics_path},
          {"format", c.format},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"threads", c.threads},
          {"model", ModelConfigToJson(c.model)},
          {"lowercase", c.lowercase},
          {"learning_rate", c.learning_rate},
          {"batch_sentences", c.batch_sentences},
          {"topneg", c.topneg},
          {"topneg_fraction", c.topneg_fraction},
          {"epochs", c.epochs},
          {"k_pos", c.k_pos},
          {"k_neg", c.k_neg},
          {"mask_removed_positives", c.mask_removed_positives},
          {"keep_logits", c.keep_logits},
          {"final_epochs", c.final_epochs},
          {"final_topneg", c.final_topneg},
          {"noise", noise},
          {"synthetic", synthetic},
          {"synthetic_test_sentences", c.synthetic_test_sentences}};
}

RunConfig RunConfigFromJson(const json& j, RunConfig c) {
  RejectUnknownKeys(
      j,
      {"preset", "train_path", "gold_path", "test_path", "dev_path", "gazetteer_path", "predictions_path",
       "dynamics_path", "format", "output_dir", "seed", "threads", "model", "lowercase",
       "learning_rate", "batch_sentences", "topneg", "topneg_fraction", "epochs", "k_pos",
       "k_neg", "mask_removed_positives", "keep_logits", "final_epochs", "final_topneg", "noise", "synthetic",
       "synthetic_test_sentences"},
      "run config");
  if (j.contains("preset")) {
    std::string name;
    Overlay(j, "preset", name);
    c = PresetConfig(name);
  }
  Overlay(j, "train_path", c.train_path);
  Overlay(j, "gold_path", c.gold_path);
  Overlay(j, "test_path", c.test_path);
  Overlay(j, "dev_path", c.dev_path);
  Overlay(j, "gazetteer_path", c.gazetteer_path);
  Overlay(j, "predictions_path", c.predictions_path);
  Overlay(j, "dynamics_path", c.dynamics_path);
  Overlay(j, "format", c.format);
  Overlay(j, "output_dir", c.output_dir);
  Overlay(j, "seed", c.seed);
  Overlay(j, "threads", c.threads);
  if (j.contains("model")) c.model = ModelConfigFromJson(j["model"], c.model);
  Overlay(j, "lowercase", c.lowercase);
  Overlay(j, "learning_rate", c.learning_rate);
  Overlay(j, "batch_sentences", c.batch_sentences);
  Overlay(j, "topneg", c.topneg);
  Overlay(j, "topneg_fraction", c.topneg_fraction);
  Overlay(j, "epochs", c.epochs);
  Overlay(j, "k_pos", c.k_pos);
  Overlay(j, "k_neg", c.k_neg);
  Overlay(j, "mask_removed_positives", c.mask_removed_positives);
  Overlay(j, "keep_logits", c.keep_logits);
  Overlay(j, "final_epochs", c.final_epochs);
  Overlay(j, "final_topneg", c.final_topneg);
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    RejectUnknownKeys(n, {"fn_rate", "fp_type_rate", "fp_spurious_rate", "seed", "max_width"},
                      "noise config");
    Overlay(n, "fn_rate", c.noise.fn_rate);
    Overlay(n, "fp_type_rate", c.noise.fp_type_rate);
    Overlay(n, "fp_spurious_rate", c.noise.fp_spurious_rate);
    Overlay(n, "seed", c.noise.seed);
    Overlay(n, "max_width", c.noise.max_width);
  }
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    RejectUnknownKeys(s,
                      {"vocab_size", "num_types", "num_sentences", "min_length", "max_length",
                       "entity_rate", "type_vocab_fraction", "seed"},
                      "synthetic config");
    Overlay(s, "vocab_size", c.synthetic.vocab_size);
    Overlay(s, "num_types", c.synthetic.num_types);
    Overlay(s, "num_sentences", c.synthetic.num_sentences);
    Overlay(s, "min_length", c.synthetic.min_length);
    Overlay(s, "max_length", c.synthetic.max_length);
    Overlay(s, "entity_rate", c.synthetic.entity_rate);
    Overlay(s, "type_vocab_fraction", c.synthetic.type_vocab_fraction);
    Overlay(s, "seed", c.synthetic.seed);
  }
  Overlay(j, "synthetic_test_sentences", c.synthetic_test_sentences);
  return c;
}

CleanConfig MakeCleanConfig(const RunConfig& c) {
  CleanConfig out;
  out.model = c.model;
  out.lowercase = c.lowercase;
  out.epochs = c.epochs;
  out.k_pos = c.k_pos;
  out.k_neg = c.k_neg;
  out.train.batch_sentences = c.batch_sentences;
  out.train.loss.topneg = c.topneg;
  out.train.loss.topneg_fraction = c.topneg_fraction;
  out.adam.learning_rate = c.learning_rate;
  out.seed = c.seed;
  out.threads = c.threads;
  out.mask_removed_positives = c.mask_removed_positives;
  out.keep_logits = c.keep_logits;
  out.echo = RunConfigToJson(c);
  return out;
}

FinalConfig MakeFinalConfig(const RunConfig& c) {
  FinalConfig out;
  out.model = c.model;
  out.lowercase = c.lowercase;
  out.epochs = c.final_epochs;
  out.train.batch_sentences = c.batch_sentences;
  out.train.loss.topneg = c.final_topneg;
  out.train.loss.topneg_fraction = c.topneg_fraction;
  out.adam.learning_rate = c.learning_rate;
  out.seed = c.seed;
  out.threads = c.threads;
  return out;
}

}  // namespace spanclean
