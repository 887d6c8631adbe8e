// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm decoder-only transformer: RMSNorm, rotary positions, gated-SiLU
// MLP, no biases, untied output head. x·W convention throughout.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "residscope/tensor.hpp"
#include "residscope/tokenizer.hpp"

namespace residscope {

class Rng;

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 0;
  std::size_t max_seq = 64;
  double rope_theta = 10000.0;
  double rms_eps = 1e-6;

  // Throws ContractError naming the violated invariant.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Tensor attn_norm;  // d
  Tensor wq, wk, wv, wo;  // d×d
  Tensor mlp_norm;  // d
  Tensor w_gate, w_up;  // d×d_ff
  Tensor w_down;  // d_ff×d
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelBundle {
  ModelConfig config;
  Tokenizer tokenizer = Tokenizer::standard();
  Tensor embedding;  // V×d
  std::vector<LayerWeights> layers;
  Tensor final_norm;  // d
  Tensor w_out;  // d×V

  // Canonical parameter order; checkpoints are written in this order.
  std::vector<NamedTensor> parameters() const;
  // Replaces parameters (same order and shapes as parameters()).
  ModelBundle with_parameters(const std::vector<Tensor>& params) const;
  // Shapes parameters() must have under `config`.
  static std::vector<std::pair<std::string, Shape>> expected_shapes(const ModelConfig& config);
  // Throws CheckpointShapeError naming the first tensor that disagrees.
  void validate() const;
  // All parameters cut from any gradient graph.
  ModelBundle detached() const;
};

// Random initialization: N(0, 1/fan_in) projections, residual-writing
// projections further scaled by 1/sqrt(2L), unit norm gains.
ModelBundle init_model(const ModelConfig& config, const Tokenizer& tokenizer, Rng& rng);

// Copy whose layer `layer` has all attention and MLP projections zeroed, so
// the layer contributes exactly nothing to the residual.
ModelBundle with_layer_zeroed(const ModelBundle& model, std::size_t layer);

struct LayerOutput {
  Tensor attn;  // a_l
  Tensor mlp;   // m_l
  Tensor next;  // h_{l+1} = (h_l + a_l) + m_l
};

Tensor embed(const ModelBundle& model, std::span<const TokenId> tokens);

// One transformer layer on a stack of sequences (rows = n_seq × seq_len).
LayerOutput apply_layer(const ModelBundle& model, std::size_t layer, const Tensor& h,
                        std::size_t seq_len);

// Final norm and output head.
Tensor output_logits(const ModelBundle& model, const Tensor& h);

// Logit lens: softmax(final_norm(h) · W_out) for each row of h (or a single
// d-vector).
Tensor lens_probs(const ModelBundle& model, const Tensor& h);

struct ResidualTape {
  std::vector<TokenId> tokens;
  std::vector<Tensor> residuals;  // L+1 entries, T×d: h_0 … h_L
  std::vector<Tensor> attn;       // L entries, T×d
  std::vector<Tensor> mlp;        // L entries, T×d
  Tensor logits;                  // T×V
  Tensor probs;                   // T×V

  std::size_t n_layers() const { return attn.size(); }
  std::size_t length() const { return tokens.size(); }
};

// Called after layer `layer` has produced its outputs from `input`; may
// replace any of them. The replacement is what the tape records and what
// later layers consume.
using LayerHook = std::function<void(std::size_t layer, const Tensor& input, LayerOutput& out)>;

// Throws ContractError for empty/too-long sequences or out-of-range ids.
void check_tokens(const ModelBundle& model, std::span<const TokenId> tokens);

ResidualTape forward_with_tape(const ModelBundle& model, std::span<const TokenId> tokens,
                               const LayerHook& hook = {});

// Runs layers [first, L) from residual `h` and returns logits. Used by
// attribution, which differentiates w.r.t. an intermediate residual.
Tensor logits_from_layer(const ModelBundle& model, std::size_t first, const Tensor& h,
                         std::size_t seq_len);

}  // namespace residscope
