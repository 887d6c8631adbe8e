// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/model.hpp"

#include <cmath>

#include "residscope/errors.hpp"
#include "residscope/rng.hpp"

namespace residscope {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ContractError("config: n_layers must be at least 1");
  if (vocab_size < 2) throw ContractError("config: vocab_size must be at least 2");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
  }
  if ((d_model / n_heads) % 2 != 0) throw ContractError("config: head width must be even for rotary");
  if (d_ff == 0) throw ContractError("config: d_ff must be positive");
  if (max_seq == 0) throw ContractError("config: max_seq must be positive");
  if (!(rope_theta > 0.0)) throw ContractError("config: rope_theta must be positive");
  if (!(rms_eps >= 0.0)) throw ContractError("config: rms_eps must be nonnegative");
}

std::vector<std::pair<std::string, Shape>> ModelBundle::expected_shapes(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("embedding", Shape{c.vocab_size, d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "attn_norm", Shape{d});
    out.emplace_back(p + "wq", Shape{d, d});
    out.emplace_back(p + "wk", Shape{d, d});
    out.emplace_back(p + "wv", Shape{d, d});
    out.emplace_back(p + "wo", Shape{d, d});
    out.emplace_back(p + "mlp_norm", Shape{d});
    out.emplace_back(p + "w_gate", Shape{d, c.d_ff});
    out.emplace_back(p + "w_up", Shape{d, c.d_ff});
    out.emplace_back(p + "w_down", Shape{c.d_ff, d});
  }
  out.emplace_back("final_norm", Shape{d});
  out.emplace_back("w_out", Shape{d, c.vocab_size});
  return out;
}

std::vector<NamedTensor> ModelBundle::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"embedding", embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    const auto& w = layers[l];
    out.push_back({p + "attn_norm", w.attn_norm});
    out.push_back({p + "wq", w.wq});
    out.push_back({p + "wk", w.wk});
    out.push_back({p + "wv", w.wv});
    out.push_back({p + "wo", w.wo});
    out.push_back({p + "mlp_norm", w.mlp_norm});
    out.push_back({p + "w_gate", w.w_gate});
    out.push_back({p + "w_up", w.w_up});
    out.push_back({p + "w_down", w.w_down});
  }
  out.push_back({"final_norm", final_norm});
  out.push_back({"w_out", w_out});
  return out;
}

ModelBundle ModelBundle::with_parameters(const std::vector<Tensor>& params) const {
  const std::size_t expected = 3 + 9 * layers.size();
  if (params.size() != expected) {
    throw ContractError("with_parameters: expected " + std::to_string(expected) + " tensors, got " +
                        std::to_string(params.size()));
  }
  ModelBundle m = *this;
  std::size_t i = 0;
  m.embedding = params[i++];
  for (auto& w : m.layers) {
    w.attn_norm = params[i++];
    w.wq = params[i++];
    w.wk = params[i++];
    w.wv = params[i++];
    w.wo = params[i++];
    w.mlp_norm = params[i++];
    w.w_gate = params[i++];
    w.w_up = params[i++];
    w.w_down = params[i++];
  }
  m.final_norm = params[i++];
  m.w_out = params[i++];
  m.validate();
  return m;
}

void ModelBundle::validate() const {
  config.validate();
  if (tokenizer.vocab_size() != config.vocab_size) {
    throw CheckpointShapeError("tokenizer", "tokenizer vocabulary " +
                                                std::to_string(tokenizer.vocab_size()) +
                                                " does not match config vocab_size " +
                                                std::to_string(config.vocab_size));
  }
  if (layers.size() != config.n_layers) {
    throw CheckpointShapeError("layers", "model has " + std::to_string(layers.size()) +
                                             " layers, config says " +
                                             std::to_string(config.n_layers));
  }
  const auto expected = expected_shapes(config);
  const auto actual = parameters();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!actual[i].tensor.defined() || actual[i].tensor.shape() != expected[i].second) {
      throw CheckpointShapeError(expected[i].first,
                                 "tensor '" + expected[i].first + "' has shape " +
                                     shape_string(actual[i].tensor.shape()) + ", expected " +
                                     shape_string(expected[i].second));
    }
  }
}

ModelBundle ModelBundle::detached() const {
  std::vector<Tensor> params;
  for (auto& p : parameters()) params.push_back(p.tensor.detach());
  return with_parameters(params);
}

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor({r, c}, std::move(v));
}

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape()); }

}  // namespace

ModelBundle init_model(const ModelConfig& config, const Tokenizer& tokenizer, Rng& rng) {
  config.validate();
  ModelBundle m;
  m.config = config;
  m.tokenizer = tokenizer;
  const std::size_t d = config.d_model, f = config.d_ff;
  const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_f = 1.0 / std::sqrt(static_cast<double>(f));
  const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  m.embedding = random_matrix(config.vocab_size, d, 1.0, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LayerWeights w;
    w.attn_norm = Tensor::full({d}, 1.0);
    w.wq = random_matrix(d, d, s_d, rng);
    w.wk = random_matrix(d, d, s_d, rng);
    w.wv = random_matrix(d, d, s_d, rng);
    w.wo = random_matrix(d, d, s_d * resid, rng);
    w.mlp_norm = Tensor::full({d}, 1.0);
    w.w_gate = random_matrix(d, f, s_d, rng);
    w.w_up = random_matrix(d, f, s_d, rng);
    w.w_down = random_matrix(f, d, s_f * resid, rng);
    m.layers.push_back(std::move(w));
  }
  m.final_norm = Tensor::full({d}, 1.0);
  m.w_out = random_matrix(d, config.vocab_size, s_d, rng);
  m.validate();
  return m;
}

ModelBundle with_layer_zeroed(const ModelBundle& model, std::size_t layer) {
  if (layer >= model.layers.size()) throw ContractError("with_layer_zeroed: layer out of range");
  ModelBundle m = model;
  auto& w = m.layers[layer];
  w.wq = zeros_like(w.wq);
  w.wk = zeros_like(w.wk);
  w.wv = zeros_like(w.wv);
  w.wo = zeros_like(w.wo);
  w.w_gate = zeros_like(w.w_gate);
  w.w_up = zeros_like(w.w_up);
  w.w_down = zeros_like(w.w_down);
  return m;
}

void check_tokens(const ModelBundle& model, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ContractError("empty token sequence");
  if (tokens.size() > model.config.max_seq) {
    throw ContractError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                        std::to_string(model.config.max_seq));
  }
  for (auto t : tokens) {
    if (t >= model.config.vocab_size) {
      throw ContractError("token id " + std::to_string(t) + " out of range for vocabulary of " +
                          std::to_string(model.config.vocab_size));
    }
  }
}

Tensor embed(const ModelBundle& model, std::span<const TokenId> tokens) {
  return embedding(model.embedding, tokens);
}

LayerOutput apply_layer(const ModelBundle& model, std::size_t layer, const Tensor& h,
                        std::size_t seq_len) {
  const auto& c = model.config;
  const auto& w = model.layers.at(layer);
  const Tensor xn = rmsnorm(h, w.attn_norm, c.rms_eps);
  const Tensor q = rope(matmul(xn, w.wq), c.n_heads, c.rope_theta, seq_len);
  const Tensor k = rope(matmul(xn, w.wk), c.n_heads, c.rope_theta, seq_len);
  const Tensor v = matmul(xn, w.wv);
  LayerOutput out;
  out.attn = matmul(causal_attention(q, k, v, c.n_heads, seq_len), w.wo);
  const Tensor mid = add(h, out.attn);
  const Tensor xn2 = rmsnorm(mid, w.mlp_norm, c.rms_eps);
  const Tensor gated = mul(silu(matmul(xn2, w.w_gate)), matmul(xn2, w.w_up));
  out.mlp = matmul(gated, w.w_down);
  out.next = add(mid, out.mlp);
  return out;
}

Tensor output_logits(const ModelBundle& model, const Tensor& h) {
  return matmul(rmsnorm(h, model.final_norm, model.config.rms_eps), model.w_out);
}

Tensor lens_probs(const ModelBundle& model, const Tensor& h) {
  const Tensor rows = h.rank() == 1 ? h.reshape({1, h.numel()}) : h;
  return softmax_rows(output_logits(model, rows));
}

ResidualTape forward_with_tape(const ModelBundle& model, std::span<const TokenId> tokens,
                               const LayerHook& hook) {
  check_tokens(model, tokens);
  const std::size_t T = tokens.size();
  ResidualTape tape;
  tape.tokens.assign(tokens.begin(), tokens.end());
  tape.residuals.reserve(model.config.n_layers + 1);
  tape.residuals.push_back(embed(model, tokens));
  for (std::size_t l = 0; l < model.config.n_layers; ++l) {
    const Tensor& h = tape.residuals.back();
    LayerOutput out = apply_layer(model, l, h, T);
    if (hook) hook(l, h, out);
    tape.attn.push_back(std::move(out.attn));
    tape.mlp.push_back(std::move(out.mlp));
    tape.residuals.push_back(std::move(out.next));
  }
  tape.logits = output_logits(model, tape.residuals.back());
  tape.probs = softmax_rows(tape.logits);
  return tape;
}

Tensor logits_from_layer(const ModelBundle& model, std::size_t first, const Tensor& h,
                         std::size_t seq_len) {
  if (first > model.config.n_layers) throw ContractError("logits_from_layer: layer out of range");
  Tensor cur = h;
  for (std::size_t l = first; l < model.config.n_layers; ++l) {
    cur = apply_layer(model, l, cur, seq_len).next;
  }
  return output_logits(model, cur);
}

}  // namespace residscope
