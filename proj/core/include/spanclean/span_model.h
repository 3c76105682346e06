#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "spanclean/corpus.h"
#include "spanclean/random.h"

namespace spanclean {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Token contextualizer in front of the span head.
//   kLookup: h_i = E[t_i]
//   kWindow: h_i = relu(W [E[t_i]; mean(E[t_{i-w..i+w}])] + b), window clipped
//            to the sentence.
enum class EncoderVariant { kLookup, kWindow };

std::string_view EncoderVariantName(EncoderVariant variant);
EncoderVariant ParseEncoderVariant(std::string_view name);

struct ModelConfig {
  int vocab_size = 2;
  int embed_dim = 50;
  EncoderVariant encoder = EncoderVariant::kWindow;
  int window_radius = 2;
  int hidden_dim = 150;
  // Linear layers in the head; every layer but the last is followed by a
  // rectifier and dropout.
  int num_layers = 2;
  int width_embed_dim = 150;
  int max_width = 8;
  int num_classes = 2;
  double dropout_rate = 0.2;

  // Throws ConfigError.
  void Validate() const;
  int token_dim() const { return embed_dim; }
  int span_dim() const { return 2 * embed_dim + width_embed_dim; }
};

// Token to row index. Row 0 is padding, row 1 the unknown token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  explicit Vocabulary(bool lowercase = false);
  static Vocabulary Build(const SpanDataset& dataset, bool lowercase = false, int min_count = 1);
  // Restores a vocabulary from its token list (as saved in checkpoints).
  static Vocabulary FromTokens(std::vector<std::string> tokens, bool lowercase);

  int id(std::string_view token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool lowercase() const { return lowercase_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> Encode(const std::vector<std::string>& tokens) const;
  std::vector<std::vector<int>> Encode(const SpanDataset& dataset) const;

 private:
  std::string Normalize(std::string_view token) const;

  bool lowercase_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

using TokenizedCorpus = std::vector<std::vector<int>>;

struct TensorView {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  std::span<double> values() const { return {data, static_cast<size_t>(rows * cols)}; }
};

struct ConstTensorView {
  std::string_view name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  std::span<const double> values() const { return {data, static_cast<size_t>(rows * cols)}; }
};

// All trainable tensors. The same layout doubles as the gradient container.
struct SpanClassifierParams {
  Matrix embedding;        // V x d
  Matrix mixer_weight;     // d x 2d, window encoder only
  Vector mixer_bias;       // d, window encoder only
  Matrix width_embedding;  // (L + 1) x d_w
  std::vector<Matrix> head_weights;  // layer l: out x in
  std::vector<Vector> head_biases;

  static SpanClassifierParams Zeros(const ModelConfig& config);
  // Xavier-uniform weights, small uniform embeddings, zero biases and padding.
  static SpanClassifierParams Init(const ModelConfig& config, uint64_t seed);

  // Declared order: embedding, mixer.weight, mixer.bias, width, head.<l>.weight,
  // head.<l>.bias. Mixer tensors are omitted for the lookup encoder.
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;

  size_t parameter_count() const;
  void SetZero();
  bool AllFinite() const;
  bool operator==(const SpanClassifierParams& other) const;
};

// Per-token vectors h_1..h_n, one row per token.
Matrix Encode(std::span<const int> token_ids, const SpanClassifierParams& params,
              const ModelConfig& config);

// h_start ++ h_end ++ D[end - start]. Throws ContractViolation when the width
// exceeds the table or the indices fall outside h.
Vector SpanRepr(const Matrix& h, int start, int end, const SpanClassifierParams& params);

// Softmax with max subtraction.
Vector Softmax(const Vector& logits);

enum class Mode { kTrain, kEval };

struct ForwardResult {
  Vector logits;
  Vector probs;
};

// Head over one span vector. Train mode draws inverted-dropout masks from
// `rng`; eval mode ignores it. Throws NumericError on non-finite values.
ForwardResult Forward(const Vector& x, const SpanClassifierParams& params,
                      const ModelConfig& config, Mode mode, Rng* rng = nullptr);

struct Batch {
  // Samples grouped by sentence in key order; labels are the training targets.
  std::vector<SpanSample> samples;
};

struct LossOptions {
  bool topneg = false;
  double topneg_fraction = 0.05;
  // Training mode applies dropout; kEval gives the deterministic loss.
  Mode mode = Mode::kTrain;
};

struct LossResult {
  double loss = 0.0;
  SpanClassifierParams grads;
  // Samples that contributed a loss term.
  size_t terms = 0;
  size_t positives = 0;
  size_t selected_negatives = 0;
};

// Summed cross-entropy over the positives and either all negatives or the
// TopNeg selection, with exact gradients for every tensor. Dropout masks come
// from a generator seeded with `step_seed`, one draw per term in batch order,
// so equal seeds give equal masks.
LossResult LossAndGrads(const Batch& batch, const TokenizedCorpus& corpus,
                        const SpanClassifierParams& params, const ModelConfig& config,
                        const LossOptions& options, uint64_t step_seed);

// Mean cosine similarity of one vector to a set; zero-norm pairs contribute 0.
double MeanCosine(const Vector& x, std::span<const Vector> others);

// Indices (ascending) of the ceil(fraction * |negatives|) negatives with the
// highest mean cosine to the positives, ties broken by lower index. At least
// one is chosen when negatives exist. With no positives, a uniform random
// subset of the same size is drawn from `fallback`.
std::vector<size_t> TopNegSelect(std::span<const Vector> negatives,
                                 std::span<const Vector> positives, double fraction,
                                 Rng& fallback);

size_t TopNegCount(size_t num_negatives, double fraction);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelConfig& config, AdamOptions options);
  void Step(SpanClassifierParams& params, const SpanClassifierParams& grads);
  long steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  SpanClassifierParams first_moment_;
  SpanClassifierParams second_moment_;
  long steps_ = 0;
};

struct TrainOptions {
  int batch_sentences = 16;
  LossOptions loss;
};

struct EpochStats {
  double loss = 0.0;
  size_t steps = 0;
  size_t terms = 0;
};

// Optional hook run on every batch before its optimizer step.
using BatchObserver = std::function<void(const Batch&)>;

// One pass over the enumerated samples: sentences shuffled with the epoch's
// stream of `seed`, grouped 16 per batch, one Adam step per batch.
EpochStats TrainEpoch(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                      SpanClassifierParams& params, AdamOptimizer& optimizer,
                      const ModelConfig& config, const TrainOptions& options, uint64_t seed,
                      int epoch, const BatchObserver& observer = nullptr);

// Eval-mode logits for every span of width <= max_width in one sentence, in
// (start, end) order; row r belongs to the r-th enumerated span.
Matrix ScoreSentence(std::span<const int> token_ids, const SpanClassifierParams& params,
                     const ModelConfig& config);

// Eval-mode logits for every sample of an enumerated dataset (row per sample).
// Sentences are split over `threads` workers; the result does not depend on it.
Matrix ScoreSamples(const SpanDataset& dataset, const TokenizedCorpus& corpus,
                    const SpanClassifierParams& params, const ModelConfig& config,
                    int threads = 1);

// Candidates are spans whose argmax is an entity type (1..num_types); overlaps
// are resolved greedily by descending argmax probability, then earlier start,
// then shorter width.
std::vector<Span> PredictSpans(std::span<const int> token_ids, const SpanClassifierParams& params,
                               const ModelConfig& config, int num_types);

struct ScoredSpan {
  Span span;
  double prob = 0.0;
};

// The overlap-resolution rule of PredictSpans on precomputed candidates.
std::vector<Span> ResolveOverlaps(std::vector<ScoredSpan> candidates);

}  // namespace spanclean
