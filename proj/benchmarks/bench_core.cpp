#include <benchmark/benchmark.h>

#include "dmt/data.hpp"
#include "dmt/dropout_gate.hpp"
#include "dmt/inference.hpp"
#include "dmt/metrics.hpp"
#include "dmt/tensor.hpp"
#include "dmt/transformer.hpp"
#include "dmt/variational.hpp"

namespace {

using namespace dmt;

Tensor random_matrix(int rows, int cols, rng::Stream& stream) {
  Tensor t = Tensor::zeros(rows, cols, true);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t.set(i, j, stream.range(-1.0, 1.0));
  return t;
}

TransformerParams desk_model(int vocab) {
  TransformerConfig cfg;
  cfg.vocab_size = vocab;
  return TransformerParams::init(cfg, 7);
}

void BM_MatmulForward(benchmark::State& state) {
  const int n = int(state.range(0));
  rng::Stream stream(1);
  Tensor a = random_matrix(n, n, stream);
  Tensor b = random_matrix(n, n, stream);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.at(0, 0));
  }
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const int n = int(state.range(0));
  rng::Stream stream(1);
  Tensor a = random_matrix(n, n, stream);
  Tensor b = random_matrix(n, n, stream);
  for (auto _ : state) {
    Tensor loss = sum_all(matmul(a, b));
    backward(loss);
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_ForwardLogprobs(benchmark::State& state) {
  TransformerParams params = desk_model(32);
  params.set_requires_grad(false);
  std::vector<int> src(12), prefix(12);
  for (int i = 0; i < 12; ++i) src[size_t(i)] = 4 + (i % 20);
  prefix[0] = Vocab::kBos;
  for (int i = 1; i < 12; ++i) prefix[size_t(i)] = 4 + (i % 20);
  for (auto _ : state) {
    Tensor rows = forward_logprobs(src, prefix, params);
    benchmark::DoNotOptimize(rows.at(0, 0));
  }
}
BENCHMARK(BM_ForwardLogprobs);

void BM_RelaxedMask(benchmark::State& state) {
  TransformerParams params = desk_model(32);
  auto gates = gate_placement(params, GateSelection::preset("encdec"));
  rng::Stream stream(3);
  for (auto _ : state) {
    for (const auto& gate : gates) {
      auto draws = draw_uniforms(gate.columns(), stream);
      MaskSample mask = relaxed_mask(gate, draws);
      benchmark::DoNotOptimize(mask.keep[0]);
    }
  }
}
BENCHMARK(BM_RelaxedMask);

void BM_BeamSearch(benchmark::State& state) {
  TransformerParams params = desk_model(32);
  params.set_requires_grad(false);
  std::vector<int> src(10);
  for (int i = 0; i < 10; ++i) src[size_t(i)] = 4 + (i % 20);
  BeamConfig beam;
  beam.beam_size = int(state.range(0));
  for (auto _ : state) {
    auto out = beam_search_tokens(src, params, beam);
    benchmark::DoNotOptimize(out.front().score);
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4);

void BM_CorpusBleu(benchmark::State& state) {
  SynthSpec spec;
  spec.task = "copy";
  spec.size = 256;
  spec.seed = 5;
  auto corpus = synth_task_generate(spec).corpus;
  std::vector<std::vector<std::string>> hyp, ref;
  for (const auto& pair : corpus.pairs) {
    hyp.push_back(pair.source);
    ref.push_back(pair.target);
  }
  for (auto _ : state) {
    BleuReport report = corpus_bleu(hyp, ref);
    benchmark::DoNotOptimize(report.bleu);
  }
}
BENCHMARK(BM_CorpusBleu);

void BM_ElboBatch(benchmark::State& state) {
  SynthSpec spec;
  spec.task = "copy";
  spec.size = 16;
  spec.seed = 5;
  auto corpus = synth_task_generate(spec).corpus;
  Vocab vocab = build_vocab(corpus, 64);
  TransformerParams params = desk_model(vocab.size());
  auto gates = gate_placement(params, GateSelection::preset("encdec"));
  auto batches = make_batches(corpus, vocab, 256, 1);
  VariationalConfig cfg;
  rng::Stream stream(9);
  long tokens = corpus_target_tokens(corpus);
  for (auto _ : state) {
    std::vector<std::vector<std::vector<double>>> draws(1);
    for (const auto& gate : gates)
      draws[0].push_back(draw_uniforms(gate.columns(), stream));
    ElboLoss el = elbo_batch_loss(batches[0], params, gates, cfg, tokens, draws);
    backward(el.loss);
    for (auto& gate : gates) gate.logits.zero_grad();
    benchmark::DoNotOptimize(el.nll);
  }
}
BENCHMARK(BM_ElboBatch);

}  // namespace

BENCHMARK_MAIN();
