#include "spanclean/span_model.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "spanclean/errors.h"

namespace spanclean {

std::string_view EncoderVariantName(EncoderVariant variant) {
  return variant == EncoderVariant::kLookup ? "lookup" : "window";
}

EncoderVariant ParseEncoderVariant(std::string_view name) {
  if (name == "lookup") return EncoderVariant::kLookup;
  if (name == "window") return EncoderVariant::kWindow;
  throw ConfigError("unknown encoder variant: " + std::string(name));
}

void ModelConfig::Validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (embed_dim < 1 || hidden_dim < 1 || width_embed_dim < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (window_radius < 0) throw ConfigError("window_radius must be >= 0");
  if (max_width < 0) throw ConfigError("max_width must be >= 0");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(bool lowercase) : lowercase_(lowercase) {
  tokens_ = {"<pad>", "<unk>"};
}

std::string Vocabulary::Normalize(std::string_view token) const {
  std::string out(token);
  if (lowercase_) {
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

Vocabulary Vocabulary::Build(const SpanDataset& dataset, bool lowercase, int min_count) {
  Vocabulary vocab(lowercase);
  std::unordered_map<std::string, int> counts;
  std::vector<std::string> order;
  for (const auto& sentence : dataset.sentences) {
    for (const auto& token : sentence.tokens) {
      auto key = vocab.Normalize(token);
      if (counts[key]++ == 0) order.push_back(key);
    }
  }
  for (auto& token : order) {
    if (counts[token] >= min_count) {
      vocab.index_.emplace(token, vocab.size());
      vocab.tokens_.push_back(std::move(token));
    }
  }
  return vocab;
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens, bool lowercase) {
  if (tokens.size() < 2) throw DataError("vocabulary needs the padding and unknown entries");
  Vocabulary vocab(lowercase);
  vocab.tokens_ = std::move(tokens);
  for (int i = 2; i < vocab.size(); ++i) vocab.index_.emplace(vocab.tokens_[i], i);
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(Normalize(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::Encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::vector<int>> Vocabulary::Encode(const SpanDataset& dataset) const {
  std::vector<std::vector<int>> out;
  out.reserve(dataset.sentences.size());
  for (const auto& sentence : dataset.sentences) out.push_back(Encode(sentence.tokens));
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

SpanClassifierParams SpanClassifierParams::Zeros(const ModelConfig& config) {
  config.Validate();
  SpanClassifierParams p;
  const int d = config.embed_dim;
  p.embedding = Matrix::Zero(config.vocab_size, d);
  if (config.encoder == EncoderVariant::kWindow) {
    p.mixer_weight = Matrix::Zero(d, 2 * d);
    p.mixer_bias = Vector::Zero(d);
  }
  p.width_embedding = Matrix::Zero(config.max_width + 1, config.width_embed_dim);
  int in = config.span_dim();
  for (int l = 0; l < config.num_layers; ++l) {
    const int out = l + 1 == config.num_layers ? config.num_classes : config.hidden_dim;
    p.head_weights.push_back(Matrix::Zero(out, in));
    p.head_biases.push_back(Vector::Zero(out));
    in = out;
  }
  return p;
}

SpanClassifierParams SpanClassifierParams::Init(const ModelConfig& config, uint64_t seed) {
  SpanClassifierParams p = Zeros(config);
  Rng rng(DeriveSeed(seed, Stream::kInit));
  auto fill_uniform = [&rng](auto& m, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  fill_uniform(p.embedding, std::sqrt(3.0 / config.embed_dim));
  p.embedding.row(Vocabulary::kPad).setZero();
  if (config.encoder == EncoderVariant::kWindow) {
    fill_uniform(p.mixer_weight, std::sqrt(6.0 / (3.0 * config.embed_dim)));
  }
  fill_uniform(p.width_embedding, std::sqrt(3.0 / config.width_embed_dim));
  for (auto& w : p.head_weights) {
    fill_uniform(w, std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols())));
  }
  return p;
}

namespace {

const std::vector<std::string>& LayerNames(size_t layers) {
  // Names live as long as the process so TensorView can hold string_views.
  static std::map<size_t, std::vector<std::string>> cache;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  auto& names = cache[layers];
  if (names.empty()) {
    for (size_t l = 0; l < layers; ++l) {
      names.push_back("head." + std::to_string(l) + ".weight");
      names.push_back("head." + std::to_string(l) + ".bias");
    }
  }
  return names;
}

template <typename View, typename Params>
std::vector<View> CollectTensors(Params& p) {
  std::vector<View> out;
  out.push_back({"embedding", p.embedding.data(), p.embedding.rows(), p.embedding.cols()});
  if (p.mixer_weight.size() > 0) {
    out.push_back(
        {"mixer.weight", p.mixer_weight.data(), p.mixer_weight.rows(), p.mixer_weight.cols()});
    out.push_back({"mixer.bias", p.mixer_bias.data(), p.mixer_bias.size(), 1});
  }
  out.push_back(
      {"width", p.width_embedding.data(), p.width_embedding.rows(), p.width_embedding.cols()});
  const auto& names = LayerNames(p.head_weights.size());
  for (size_t l = 0; l < p.head_weights.size(); ++l) {
    out.push_back({names[2 * l], p.head_weights[l].data(), p.head_weights[l].rows(),
                   p.head_weights[l].cols()});
    out.push_back({names[2 * l + 1], p.head_biases[l].data(), p.head_biases[l].size(), 1});
  }
  return out;
}

}  // namespace

std::vector<TensorView> SpanClassifierParams::tensors() {
  return CollectTensors<TensorView>(*this);
}

std::vector<ConstTensorView> SpanClassifierParams::tensors() const {
  return CollectTensors<ConstTensorView>(*this);
}

size_t SpanClassifierParams::parameter_count() const {
  size_t n = 0;
  for (const auto& t : tensors()) n += t.values().size();
  return n;
}

void SpanClassifierParams::SetZero() {
  for (auto& t : tensors()) std::fill(t.values().begin(), t.values().end(), 0.0);
}

bool SpanClassifierParams::AllFinite() const {
  for (const auto& t : tensors()) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool SpanClassifierParams::operator==(const SpanClassifierParams& other) const {
  auto a = tensors();
  auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
    if (!std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin())) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

struct Encoded {
  Matrix input;  // n x d (lookup) or n x 2d: [E[t_i], window mean]
  Matrix pre;    // n x d, window only
  Matrix h;      // n x d
};

Encoded EncodeInternal(std::span<const int> ids, const SpanClassifierParams& params,
                       const ModelConfig& config) {
  const int n = static_cast<int>(ids.size());
  const int d = config.embed_dim;
  Matrix emb(n, d);
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= params.embedding.rows()) {
      throw ContractViolation("token id outside the embedding table");
    }
    emb.row(i) = params.embedding.row(ids[i]);
  }
  Encoded enc;
  if (config.encoder == EncoderVariant::kLookup) {
    enc.h = emb;
    enc.input = std::move(emb);
    return enc;
  }
  const int w = config.window_radius;
  enc.input.resize(n, 2 * d);
  enc.input.leftCols(d) = emb;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - w);
    const int hi = std::min(n - 1, i + w);
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d);
    for (int j = lo; j <= hi; ++j) sum += emb.row(j);
    enc.input.row(i).tail(d) = sum / static_cast<double>(hi - lo + 1);
  }
  enc.pre = enc.input * params.mixer_weight.transpose();
  enc.pre.rowwise() += params.mixer_bias.transpose();
  enc.h = enc.pre.cwiseMax(0.0);
  return enc;
}

void EncodeBackward(const Encoded& enc, std::span<const int> ids, const Matrix& dh,
                    const SpanClassifierParams& params, const ModelConfig& config,
                    SpanClassifierParams& grads) {
  const int n = static_cast<int>(ids.size());
  if (config.encoder == EncoderVariant::kLookup) {
    for (int i = 0; i < n; ++i) grads.embedding.row(ids[i]) += dh.row(i);
    return;
  }
  const int d = config.embed_dim;
  const int w = config.window_radius;
  Matrix dpre = dh.cwiseProduct((enc.pre.array() > 0.0).cast<double>().matrix());
  grads.mixer_weight.noalias() += dpre.transpose() * enc.input;
  grads.mixer_bias += dpre.colwise().sum().transpose();
  Matrix dinput = dpre * params.mixer_weight;
  Matrix demb = dinput.leftCols(d);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - w);
    const int hi = std::min(n - 1, i + w);
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    for (int j = lo; j <= hi; ++j) demb.row(j) += inv * dinput.row(i).tail(d);
  }
  for (int i = 0; i < n; ++i) grads.embedding.row(ids[i]) += demb.row(i);
}

}  // namespace

Matrix Encode(std::span<const int> token_ids, const SpanClassifierParams& params,
              const ModelConfig& config) {
  return EncodeInternal(token_ids, params, config).h;
}

Vector SpanRepr(const Matrix& h, int start, int end, const SpanClassifierParams& params) {
  if (start < 0 || end < start || end >= h.rows()) {
    throw ContractViolation("span indices outside the sentence");
  }
  if (end - start >= params.width_embedding.rows()) {
    throw ContractViolation("span width exceeds the width table");
  }
  const Eigen::Index d = h.cols();
  const Eigen::Index dw = params.width_embedding.cols();
  Vector x(2 * d + dw);
  x.head(d) = h.row(start).transpose();
  x.segment(d, d) = h.row(end).transpose();
  x.tail(dw) = params.width_embedding.row(end - start).transpose();
  return x;
}

Vector Softmax(const Vector& logits) {
  const double max = logits.maxCoeff();
  Vector e = (logits.array() - max).exp();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Head

namespace {

double UniformUnit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Inverted dropout mask: 0 or 1/(1-p).
void DrawMask(Rng& rng, double rate, Vector& mask) {
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index k = 0; k < mask.size(); ++k) {
    mask[k] = UniformUnit(rng) < rate ? 0.0 : keep_scale;
  }
}

// Activations of one span through the head, kept for the backward pass.
struct HeadTrace {
  std::vector<Vector> pre;    // pre-activation of every layer; last = logits
  std::vector<Vector> out;    // rectified, masked outputs of hidden layers
  std::vector<Vector> masks;  // empty in eval mode
};

// Runs layers 1.. given the first layer's pre-activation.
void HeadFromFirstLayer(Vector first_pre, const SpanClassifierParams& params,
                        const ModelConfig& config, Mode mode, Rng* rng, HeadTrace& trace) {
  const int layers = config.num_layers;
  const bool dropout = mode == Mode::kTrain && config.dropout_rate > 0.0;
  trace.pre.resize(layers);
  trace.out.resize(layers - 1);
  trace.masks.resize(dropout ? layers - 1 : 0);
  trace.pre[0] = std::move(first_pre);
  for (int l = 0; l + 1 < layers; ++l) {
    trace.out[l] = trace.pre[l].cwiseMax(0.0);
    if (dropout) {
      if (rng == nullptr) throw ContractViolation("train-mode dropout needs a generator");
      trace.masks[l].resize(trace.out[l].size());
      DrawMask(*rng, config.dropout_rate, trace.masks[l]);
      trace.out[l] = trace.out[l].cwiseProduct(trace.masks[l]);
    }
    trace.pre[l + 1] = params.head_weights[l + 1] * trace.out[l] + params.head_biases[l + 1];
  }
}

void CheckFinite(const HeadTrace& trace) {
  for (size_t l = 0; l < trace.pre.size(); ++l) {
    if (!trace.pre[l].allFinite()) {
      const bool last = l + 1 == trace.pre.size();
      throw NumericError(last ? std::string("non-finite logits")
                              : "non-finite activations in head layer " + std::to_string(l));
    }
  }
}

// Accumulates head gradients for one span and returns d(first-layer pre).
Vector HeadBackward(const HeadTrace& trace, const Vector& dlogits,
                    const SpanClassifierParams& params, SpanClassifierParams& grads) {
  Vector da = dlogits;
  for (int l = static_cast<int>(trace.pre.size()) - 1; l >= 1; --l) {
    grads.head_weights[l].noalias() += da * trace.out[l - 1].transpose();
    grads.head_biases[l] += da;
    Vector dout = params.head_weights[l].transpose() * da;
    if (!trace.masks.empty()) dout = dout.cwiseProduct(trace.masks[l - 1]);
    da = dout.cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  grads.head_biases[0] += da;
  return da;
}

// First-layer projections of token vectors onto the start and end blocks.
struct SentenceProjection {
  Matrix start;  // n x out0
  Matrix end;    // n x out0
};

SentenceProjection ProjectTokens(const Matrix& h, const SpanClassifierParams& params) {
  const Eigen::Index d = h.cols();
  const auto& w0 = params.head_weights[0];
  return {h * w0.leftCols(d).transpose(), h * w0.middleCols(d, d).transpose()};
}

Matrix ProjectWidths(const SpanClassifierParams& params) {
  const auto& w0 = params.head_weights[0];
  const Eigen::Index dw = params.width_embedding.cols();
  return params.width_embedding * w0.rightCols(dw).transpose();
}

Vector FirstLayerPre(const SentenceProjection& proj, const Matrix& widths,
                     const SpanClassifierParams& params, int start, int end) {
  return proj.start.row(start).transpose() + proj.end.row(end).transpose() +
         widths.row(end - start).transpose() + params.head_biases[0];
}

}  // namespace

ForwardResult Forward(const Vector& x, const SpanClassifierParams& params,
                      const ModelConfig& config, Mode mode, Rng* rng) {
  if (!x.allFinite()) throw NumericError("non-finite span vector");
  if (x.size() != params.head_weights[0].cols()) {
    throw ContractViolation("span vector has the wrong length");
  }
  HeadTrace trace;
  HeadFromFirstLayer(params.head_weights[0] * x + params.head_biases[0], params, config, mode, rng,
                     trace);
  CheckFinite(trace);
  ForwardResult result;
  result.logits = trace.pre.back();
  result.probs = Softmax(result.logits);
  return result;
}

// ---------------------------------------------------------------------------
// TopNeg

size_t TopNegCount(size_t num_negatives, double fraction) {
  if (num_negatives == 0) return 0;
  const double raw = std::ceil(fraction * static_cast<double>(num_negatives) - 1e-9);
  return std::clamp<size_t>(static_cast<size_t>(std::max(raw, 1.0)), 1, num_negatives);
}

double MeanCosine(const Vector& x, std::span<const Vector> others) {
  if (others.empty()) return 0.0;
  const double nx = x.norm();
  double sum = 0.0;
  for (const auto& o : others) {
    const double no = o.norm();
    if (nx == 0.0 || no == 0.0) continue;
    sum += x.dot(o) / (nx * no);
  }
  return sum / static_cast<double>(others.size());
}

std::vector<size_t> TopNegSelect(std::span<const Vector> negatives,
                                 std::span<const Vector> positives, double fraction,
                                 Rng& fallback) {
  const size_t count = TopNegCount(negatives.size(), fraction);
  std::vector<size_t> order(negatives.size());
  std::iota(order.begin(), order.end(), 0);
  if (positives.empty()) {
    std::shuffle(order.begin(), order.end(), fallback);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
  }
  std::vector<double> positive_norms;
  positive_norms.reserve(positives.size());
  for (const auto& p : positives) positive_norms.push_back(p.norm());
  std::vector<double> score(negatives.size());
  for (size_t i = 0; i < negatives.size(); ++i) {
    const double nx = negatives[i].norm();
    double sum = 0.0;
    for (size_t j = 0; j < positives.size(); ++j) {
      if (nx == 0.0 || positive_norms[j] == 0.0) continue;
      sum += negatives[i].dot(positives[j]) / (nx * positive_norms[j]);
    }
    score[i] = sum / static_cast<double>(positives.size());
  }
  std::partial_sort(order.begin(), order.begin() + count, order.end(), [&](size_t a, size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

// ---------------------------------------------------------------------------
// Loss

LossResult LossAndGrads(const Batch& batch, const TokenizedCorpus& corpus,
                        const SpanClassifierParams& params, const ModelConfig& config,
                        const LossOptions& options, uint64_t step_seed) {
  if (batch.samples.empty()) throw ContractViolation("empty batch");
  LossResult result;
  result.grads = SpanClassifierParams::Zeros(config);

  // Contiguous runs of samples per sentence.
  struct Group {
    int sentence_id;
    size_t begin;
    size_t end;
    Encoded enc;
  };
  std::vector<Group> groups;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const int sid = batch.samples[i].sentence_id;
    if (groups.empty() || groups.back().sentence_id != sid) groups.push_back({sid, i, i, {}});
    groups.back().end = i + 1;
  }
  for (auto& g : groups) {
    if (g.sentence_id < 0 || static_cast<size_t>(g.sentence_id) >= corpus.size()) {
      throw ContractViolation("batch references an unknown sentence");
    }
    g.enc = EncodeInternal(corpus[g.sentence_id], params, config);
  }

  // Which samples contribute a loss term.
  std::vector<char> in_loss(batch.samples.size(), 1);
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    if (s.assigned_label < 0 || s.assigned_label >= config.num_classes) {
      throw ContractViolation("sample label outside the classifier's classes");
    }
    if (s.width() > config.max_width) throw ContractViolation("sample wider than max_width");
    result.positives += s.positive() ? 1 : 0;
  }
  if (options.topneg) {
    std::vector<Vector> pos_vectors;
    std::vector<Vector> neg_vectors;
    std::vector<size_t> neg_index;
    for (const auto& g : groups) {
      for (size_t i = g.begin; i < g.end; ++i) {
        const auto& s = batch.samples[i];
        Vector x = SpanRepr(g.enc.h, s.start, s.end, params);
        if (s.positive()) {
          pos_vectors.push_back(std::move(x));
        } else {
          neg_vectors.push_back(std::move(x));
          neg_index.push_back(i);
        }
      }
    }
    for (size_t i : neg_index) in_loss[i] = 0;
    Rng fallback(DeriveSeed(step_seed, Stream::kTopNegFallback));
    for (size_t k : TopNegSelect(neg_vectors, pos_vectors, options.topneg_fraction, fallback)) {
      in_loss[neg_index[k]] = 1;
    }
  }

  Rng rng(step_seed);
  const Matrix widths = ProjectWidths(params);
  Matrix dwidths = Matrix::Zero(widths.rows(), widths.cols());
  const Eigen::Index d = config.embed_dim;
  const Eigen::Index dw = config.width_embed_dim;
  const auto& w0 = params.head_weights[0];
  HeadTrace trace;

  for (const auto& g : groups) {
    const SentenceProjection proj = ProjectTokens(g.enc.h, params);
    Matrix dstart = Matrix::Zero(proj.start.rows(), proj.start.cols());
    Matrix dend = Matrix::Zero(proj.end.rows(), proj.end.cols());
    bool touched = false;
    for (size_t i = g.begin; i < g.end; ++i) {
      if (!in_loss[i]) continue;
      const auto& s = batch.samples[i];
      HeadFromFirstLayer(FirstLayerPre(proj, widths, params, s.start, s.end), params, config,
                         options.mode, &rng, trace);
      CheckFinite(trace);
      const Vector& z = trace.pre.back();
      const double max = z.maxCoeff();
      const double lse = max + std::log((z.array() - max).exp().sum());
      result.loss += lse - z[s.assigned_label];
      Vector dz = (z.array() - lse).exp().matrix();
      dz[s.assigned_label] -= 1.0;
      Vector dfirst = HeadBackward(trace, dz, params, result.grads);
      dstart.row(s.start) += dfirst.transpose();
      dend.row(s.end) += dfirst.transpose();
      dwidths.row(s.width()) += dfirst.transpose();
      ++result.terms;
      if (!s.positive()) ++result.selected_negatives;
      touched = true;
    }
    if (!touched) continue;
    const Matrix& h = g.enc.h;
    auto& gw0 = result.grads.head_weights[0];
    gw0.leftCols(d).noalias() += dstart.transpose() * h;
    gw0.middleCols(d, d).noalias() += dend.transpose() * h;
    Matrix dh = dstart * w0.leftCols(d) + dend * w0.middleCols(d, d);
    EncodeBackward(g.enc, corpus[g.sentence_id], dh, params, config, result.grads);
  }
  result.grads.head_weights[0].rightCols(dw).noalias() +=
      dwidths.transpose() * params.width_embedding;
  result.grads.width_embedding.noalias() += dwidths * w0.rightCols(dw);
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss");
  return result;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop

AdamOptimizer::AdamOptimizer(const ModelConfig& config, AdamOptions options)
    : options_(options),
      first_moment_(SpanClassifierParams::Zeros(config)),
      second_moment_(SpanClassifierParams::Zeros(config)) {
  if (!(options.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
}

void AdamOptimizer::Step(SpanClassifierParams& params, const SpanClassifierParams& grads) {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = first_moment_.tensors();
  auto v = second_moment_.tensors();
  if (p.size() != g.size()) throw ContractViolation("gradient layout mismatch");
  for (size_t t = 0; t < p.size(); ++t) {
    auto pv = p[t].values();
    auto gv = g[t].values();
    auto mv = m[t].values();
    auto vv = v[t].values();
    for (size_t i = 0; i < pv.size(); ++i) {
      mv[i] = b1 * mv[i] + (1.0 - b1) * gv[i];
      vv[i] = b2 * vv[i] + (1.0 - b2) * gv[i] * gv[i];
      const double mhat = mv[i] / correction1;
      const double vhat = vv[i] / correction2;
      pv[i] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

namespace {

// [begin, end) of each sentence's samples in an enumerated dataset.
std::vector<std::pair<size_t, size_t>> SentenceRanges(const SpanDataset& dataset) {
  std::vector<std::pair<size_t, size_t>> ranges(dataset.sentences.size(), {0, 0});
  size_t i = 0;
  const auto& samples = dataset.samples;
  while (i < samples.size()) {
    const int sid = samples[i].sentence_id;
    if (sid < 0 || static_cast<size_t>(sid) >= ranges.size()) {
      throw ContractViolation("sample references an unknown sentence");
    }
    size_t j = i;
    while (j < samples.size() && samples[j].sentence_id == sid) ++j;
    if (ranges[sid].second != 0) throw ContractViolation("samples are not grouped by sentence");
    ranges[sid] = {i, j};
    i = j;
  }
  return ranges;
}

}  // namespace

EpochStats TrainEpoch(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                      SpanClassifierParams& params, AdamOptimizer& optimizer,
                      const ModelConfig& config, const TrainOptions& options, uint64_t seed,
                      int epoch, const BatchObserver& observer) {
  if (options.batch_sentences < 1) throw ConfigError("batch size must be >= 1");
  const auto ranges = SentenceRanges(dataset);
  std::vector<int> order;
  for (size_t sid = 0; sid < ranges.size(); ++sid) {
    if (ranges[sid].second > ranges[sid].first) order.push_back(static_cast<int>(sid));
  }
  Rng shuffle_rng(DeriveSeed(seed, Stream::kShuffle, static_cast<uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochStats stats;
  const uint64_t epoch_seed = DeriveSeed(seed, Stream::kDropout, static_cast<uint64_t>(epoch));
  for (size_t b = 0; b < order.size(); b += options.batch_sentences) {
    Batch batch;
    const size_t stop = std::min(order.size(), b + options.batch_sentences);
    for (size_t k = b; k < stop; ++k) {
      const auto [begin, end] = ranges[order[k]];
      batch.samples.insert(batch.samples.end(), dataset.samples.begin() + begin,
                           dataset.samples.begin() + end);
    }
    if (observer) observer(batch);
    LossResult loss =
        LossAndGrads(batch, corpus, params, config, options.loss, DeriveSeed(epoch_seed, b));
    optimizer.Step(params, loss.grads);
    stats.loss += loss.loss;
    stats.terms += loss.terms;
    ++stats.steps;
  }
  return stats;
}

Matrix ScoreSentence(std::span<const int> token_ids, const SpanClassifierParams& params,
                     const ModelConfig& config) {
  const int n = static_cast<int>(token_ids.size());
  const Encoded enc = EncodeInternal(token_ids, params, config);
  const SentenceProjection proj = ProjectTokens(enc.h, params);
  const Matrix widths = ProjectWidths(params);
  Matrix logits(static_cast<Eigen::Index>(CandidateSpanCount(n, config.max_width)),
                config.num_classes);
  HeadTrace trace;
  Eigen::Index row = 0;
  for (int start = 0; start < n; ++start) {
    for (int end = start; end < n && end - start <= config.max_width; ++end) {
      HeadFromFirstLayer(FirstLayerPre(proj, widths, params, start, end), params, config,
                         Mode::kEval, nullptr, trace);
      CheckFinite(trace);
      logits.row(row++) = trace.pre.back().transpose();
    }
  }
  return logits;
}

Matrix ScoreSamples(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                    const SpanClassifierParams& params, const ModelConfig& config, int threads) {
  if (dataset.max_width > config.max_width) {
    throw ContractViolation("dataset enumerated wider than the model's width table");
  }
  const auto ranges = SentenceRanges(dataset);
  Matrix out(static_cast<Eigen::Index>(dataset.samples.size()), config.num_classes);

  auto score_range = [&](size_t first, size_t last) {
    for (size_t sid = first; sid < last; ++sid) {
      const auto [begin, end] = ranges[sid];
      if (begin == end) continue;
      const int n = static_cast<int>(corpus[sid].size());
      const Matrix logits = ScoreSentence(corpus[sid], params, config);
      // Row of the first span starting at each position.
      std::vector<Eigen::Index> offset(n + 1, 0);
      for (int s = 0; s < n; ++s) {
        offset[s + 1] = offset[s] + std::min(n - 1, s + config.max_width) - s + 1;
      }
      for (size_t i = begin; i < end; ++i) {
        const auto& sample = dataset.samples[i];
        out.row(static_cast<Eigen::Index>(i)) =
            logits.row(offset[sample.start] + (sample.end - sample.start));
      }
    }
  };

  const size_t num_sentences = ranges.size();
  const size_t workers = std::clamp<size_t>(threads, 1, std::max<size_t>(1, num_sentences));
  if (workers == 1) {
    score_range(0, num_sentences);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const size_t chunk = (num_sentences + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t first = std::min(num_sentences, w * chunk);
    const size_t last = std::min(num_sentences, first + chunk);
    pool.emplace_back([&, w, first, last] {
      try {
        score_range(first, last);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Span> ResolveOverlaps(std::vector<ScoredSpan> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.width() < b.span.width();
  });
  std::vector<Span> kept;
  for (const auto& c : candidates) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const Span& k) {
      return c.span.start <= k.end && k.start <= c.span.end;
    });
    if (!clash) kept.push_back(c.span);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<Span> PredictSpans(std::span<const int> token_ids, const SpanClassifierParams& params,
                               const ModelConfig& config, int num_types) {
  const int n = static_cast<int>(token_ids.size());
  const Matrix logits = ScoreSentence(token_ids, params, config);
  std::vector<ScoredSpan> candidates;
  Eigen::Index row = 0;
  for (int start = 0; start < n; ++start) {
    for (int end = start; end < n && end - start <= config.max_width; ++end) {
      const Vector probs = Softmax(logits.row(row++).transpose());
      Eigen::Index best = 0;
      probs.maxCoeff(&best);
      if (best >= 1 && best <= num_types) {
        candidates.push_back({{start, end, static_cast<int>(best)}, probs[best]});
      }
    }
  }
  return ResolveOverlaps(std::move(candidates));
}

}  // namespace spanclean
