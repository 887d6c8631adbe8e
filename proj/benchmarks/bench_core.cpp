// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "residscope/autograd.hpp"
#include "residscope/metrics.hpp"
#include "residscope/model.hpp"
#include "residscope/rng.hpp"
#include "residscope/tasks.hpp"
#include "residscope/train.hpp"

namespace rs = residscope;

namespace {

rs::Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  rs::Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return rs::Tensor({r, c}, std::move(v));
}

rs::ModelBundle toy_model(std::size_t layers, std::size_t d) {
  rs::ModelConfig c;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = 4;
  c.d_ff = 2 * d;
  c.vocab_size = rs::Tokenizer::standard().vocab_size();
  rs::Rng rng(0);
  return rs::init_model(c, rs::Tokenizer::standard(), rng);
}

rs::TaskSpec kv() {
  rs::TaskSpec t;
  t.kind = rs::TaskKind::KvMultihop;
  t.hops = 4;
  t.n_entities = 8;
  return t;
}

std::vector<rs::PromptExample> examples(std::size_t n) {
  rs::Rng rng(1);
  return rs::generate_examples(kv(), rs::Tokenizer::standard(), n, rng);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(640, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rs::matmul(a, b));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 640 * n * n * 1e-9,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(192)->Arg(384);

void BM_ForwardWithTape(benchmark::State& state) {
  const auto m = toy_model(static_cast<std::size_t>(state.range(0)),
                           static_cast<std::size_t>(state.range(1)));
  const auto tokens = examples(1).front().tokens;
  for (auto _ : state) benchmark::DoNotOptimize(rs::forward_with_tape(m, tokens));
}
BENCHMARK(BM_ForwardWithTape)->Args({4, 128})->Args({8, 192});

void BM_TrainStep(benchmark::State& state) {
  const auto m = toy_model(static_cast<std::size_t>(state.range(0)),
                           static_cast<std::size_t>(state.range(1)));
  const auto batch = rs::make_batch(examples(8), true);
  const auto params = m.parameters();
  for (auto _ : state) {
    std::vector<rs::Tensor> leaves;
    for (const auto& p : params) leaves.push_back(p.tensor.as_leaf(true));
    const auto model = m.with_parameters(leaves);
    benchmark::DoNotOptimize(rs::backward(rs::batch_loss(rs::batch_logits(model, batch), batch)));
  }
}
BENCHMARK(BM_TrainStep)->Args({4, 128})->Args({8, 192})->Unit(benchmark::kMillisecond);

void BM_EffectMatrix(benchmark::State& state) {
  const auto m = toy_model(4, 128);
  const auto ps = examples(4);
  for (auto _ : state)
    benchmark::DoNotOptimize(rs::downstream_effect_matrix(m, ps, {state.range(0) != 0, 4, 0}));
}
BENCHMARK(BM_EffectMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
