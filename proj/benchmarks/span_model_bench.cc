#include <benchmark/benchmark.h>

#include "spanclean/config.h"
#include "spanclean/distant.h"
#include "spanclean/dynamics.h"
#include "spanclean/random.h"
#include "spanclean/span_model.h"

namespace spanclean {
namespace {

struct Setup {
  SpanDataset dataset;
  TokenizedCorpus corpus;
  ModelConfig model;
  SpanClassifierParams params;
};

// Desk preset model on a synthetic corpus of the given size.
Setup MakeSetup(int sentences) {
  Setup s;
  SyntheticConfig synth;
  synth.num_sentences = sentences;
  synth.seed = 3;
  s.model = PresetConfig("desk").model;
  s.dataset = EnumerateSamples(GenerateSynthetic(synth).dataset, s.model.max_width);
  const Vocabulary vocab = Vocabulary::Build(s.dataset);
  s.corpus = vocab.Encode(s.dataset);
  s.model.vocab_size = vocab.size();
  s.model.num_classes = s.dataset.labels.num_classes();
  s.params = SpanClassifierParams::Init(s.model, 3);
  return s;
}

void BM_TrainEpoch(benchmark::State& state) {
  Setup s = MakeSetup(static_cast<int>(state.range(0)));
  TrainOptions options;
  options.loss.topneg = state.range(1) != 0;
  AdamOptimizer optimizer(s.model, AdamOptions{});
  int epoch = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        TrainEpoch(s.dataset, s.corpus, s.params, optimizer, s.model, options, 3, epoch++));
  }
  state.SetItemsProcessed(state.iterations() * s.dataset.samples.size());
}
BENCHMARK(BM_TrainEpoch)->Args({100, 0})->Args({100, 1})->Unit(benchmark::kMillisecond);

void BM_SnapshotEpoch(benchmark::State& state) {
  Setup s = MakeSetup(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto records = InitRecords(s.dataset);
    SnapshotEpoch(s.dataset, s.corpus, s.params, s.model, records);
    benchmark::DoNotOptimize(records.data());
  }
  state.SetItemsProcessed(state.iterations() * s.dataset.samples.size());
}
BENCHMARK(BM_SnapshotEpoch)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TopNegSelect(benchmark::State& state) {
  const size_t negatives = static_cast<size_t>(state.range(0));
  Rng rng(5);
  std::normal_distribution<double> normal;
  auto draw = [&](size_t n) {
    std::vector<Vector> v(n, Vector(250));
    for (auto& x : v) {
      for (auto& e : x) e = normal(rng);
    }
    return v;
  };
  const auto neg = draw(negatives);
  const auto pos = draw(20);
  for (auto _ : state) {
    benchmark::DoNotOptimize(TopNegSelect(neg, pos, 0.05, rng));
  }
}
BENCHMARK(BM_TopNegSelect)->Arg(100)->Arg(1000);

}  // namespace
}  // namespace spanclean

BENCHMARK_MAIN();
