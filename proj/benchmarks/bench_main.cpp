#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "crt/metrics.hpp"
#include "crt/synth.hpp"
#include "crt/trainer.hpp"

namespace crt {
namespace {

ModelConfig bench_model(std::size_t d_model) {
  ModelConfig m;
  m.visual_dim = 32;
  m.d_model = d_model;
  m.layers = 2;
  m.heads = 4;
  m.d_ff = 2 * d_model;
  m.max_len = 16;
  return m;
}

SceneSet bench_scenes(std::size_t count) {
  SynthOptions so;
  so.seed = 7;
  so.count = count;
  so.visual_dim = 32;
  return synth_generate(so);
}

Vocabulary bench_vocab(const SceneSet& set) {
  std::vector<std::string> sentences;
  for (const Scene& s : set.scenes) sentences.insert(sentences.end(), s.sentences.begin(), s.sentences.end());
  return build_vocab(sentences);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Tensor a({n, n}), b({n, n});
  for (double& x : a.data()) x = normal(rng);
  for (double& x : b.data()) x = normal(rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(512);

void BM_EncodeScene(benchmark::State& state) {
  const SceneSet set = bench_scenes(8);
  const CrtModel model(bench_model(static_cast<std::size_t>(state.range(0))), bench_vocab(set), 1);
  std::size_t i = 0;
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(model.encode_scene(tape, set.scenes[i++ % set.scenes.size()]).value().size());
  }
}
BENCHMARK(BM_EncodeScene)->Arg(32)->Arg(128);

void BM_GreedyDecode(benchmark::State& state) {
  const SceneSet set = bench_scenes(8);
  const CrtModel model(bench_model(static_cast<std::size_t>(state.range(0))), bench_vocab(set), 1);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.greedy_decode(set.scenes[i++ % set.scenes.size()]));
}
BENCHMARK(BM_GreedyDecode)->Arg(32)->Arg(128);

void BM_TrainingStep(benchmark::State& state) {
  const SceneSet set = bench_scenes(15);
  CrtModel model(bench_model(32), bench_vocab(set), 1);
  TrainConfig config;
  const auto samples = make_samples(set.scenes, model.vocab(), 16);
  for (auto _ : state) {
    model.parameters().zero_grad();
    for (const TrainingSample& s : samples) {
      Tape tape;
      Var loss = scale(model.sequence_nll(tape, *s.scene, s.reference),
                       1.0 / static_cast<double>(samples.size()));
      tape.backward(loss);
    }
    adam_step(model.parameters(), config);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_CorpusMetrics(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Words lexicon{"move", "the", "red", "blue", "cup", "to", "left", "box", "a", "put"};
  std::uniform_int_distribution<std::size_t> word(0, lexicon.size() - 1);
  auto sentence = [&] {
    Words w(9);
    for (auto& x : w) x = lexicon[word(rng)];
    return w;
  };
  std::vector<EvalPair> pairs;
  for (std::int64_t i = 0; i < state.range(0); ++i)
    pairs.push_back({std::to_string(i), sentence(), {sentence(), sentence()}});
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu4(pairs));
    benchmark::DoNotOptimize(rouge_l(pairs));
    benchmark::DoNotOptimize(cider_d(pairs));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorpusMetrics)->Arg(200)->Arg(2000);

}  // namespace
}  // namespace crt

BENCHMARK_MAIN();
