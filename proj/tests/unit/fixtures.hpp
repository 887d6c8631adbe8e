// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "residscope/model.hpp"
#include "residscope/rng.hpp"
#include "residscope/tasks.hpp"

namespace fixtures {

using namespace residscope;

inline ModelConfig tiny_config(std::size_t layers = 2, std::size_t d = 8) {
  ModelConfig c;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = 2;
  c.d_ff = 2 * d;
  c.vocab_size = Tokenizer::standard().vocab_size();
  c.max_seq = 64;
  return c;
}

// Random weights with non-trivial norm gains.
inline ModelBundle random_model(const ModelConfig& c, std::uint64_t seed = 0) {
  Rng rng(seed);
  ModelBundle m = init_model(c, Tokenizer::standard(), rng);
  std::vector<Tensor> params;
  for (const auto& p : m.parameters()) {
    if (p.tensor.rank() != 1) {
      params.push_back(p.tensor);
      continue;
    }
    std::vector<double> g(p.tensor.numel());
    for (auto& x : g) x = rng.uniform(0.5, 1.5);
    params.push_back(Tensor(p.tensor.shape(), std::move(g)));
  }
  return m.with_parameters(params);
}

inline std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed, 99);
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.below(vocab));
  return t;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0,
                            bool requires_grad = false) {
  Rng rng(seed, 7);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline PromptExample kv_prompt(std::uint64_t seed, std::size_t hops = 2) {
  TaskSpec t;
  t.kind = TaskKind::KvMultihop;
  t.hops = hops;
  t.n_entities = 6;
  Rng rng(seed);
  return generate_example(t, Tokenizer::standard(), rng);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("residscope-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
