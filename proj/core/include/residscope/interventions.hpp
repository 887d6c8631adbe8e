// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Causal interventions on the residual stream. Every function here is pure
// in (model, tokens, spec) and safe to call concurrently.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "residscope/model.hpp"

namespace residscope {

// h̄_{s+1} := h̄_s at every position; later layers recomputed.
struct SkipLayer {
  std::size_t layer;
};

// Layer skipped only at positions t ≤ until; later positions keep the layer
// but see the altered context through attention.
struct SkipLayerUpToPosition {
  std::size_t layer;
  std::size_t until;
};

// Later layers recomputed once on h_l − c_s, nothing propagated.
struct RemoveContributionLocal {
  std::size_t layer;
};

// Residual of one (layer, position) cell overwritten with the corpus mean.
struct EraseResidual {
  std::size_t layer;
  std::size_t position;
};

using InterventionKind =
    std::variant<SkipLayer, SkipLayerUpToPosition, RemoveContributionLocal, EraseResidual>;

struct InterventionSpec {
  InterventionKind kind;

  bool propagate() const { return !std::holds_alternative<RemoveContributionLocal>(kind); }
  // Throws ContractError when indices fall outside the model/sequence.
  void validate(std::size_t n_layers, std::size_t seq_len) const;
  std::string describe() const;
};

struct MeanResidual {
  std::vector<std::vector<double>> layers;  // L+1 vectors of d_model
  std::size_t sample_count = 0;

  std::size_t n_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t width() const { return layers.empty() ? 0 : layers.front().size(); }
};

// Mean of h_l over every position of every sequence, per layer.
MeanResidual compute_mean_residual(const ModelBundle& model,
                                   std::span<const std::vector<TokenId>> corpus);

ResidualTape run_with_skip(const ModelBundle& model, std::span<const TokenId> tokens,
                           std::size_t layer);

ResidualTape run_with_skip_upto(const ModelBundle& model, std::span<const TokenId> tokens,
                                std::size_t layer, std::size_t until);

enum class ErasureIndex {
  NextLayer,  // h̄_{l+1}[t] := h̃_{l+1}
  Literal,    // h̄_{l+1}[t] := h̃_l
};

ResidualTape run_with_erasure(const ModelBundle& model, std::span<const TokenId> tokens,
                              std::size_t layer, std::size_t position, const MeanResidual& mean,
                              ErasureIndex index = ErasureIndex::NextLayer);

enum class LocalSubtrahend {
  Contribution,  // c_s = a_s + m_s
  Residual,      // h_s
};

struct LocalRemovalOptions {
  LocalSubtrahend subtrahend = LocalSubtrahend::Contribution;
  // When set, the subtraction is applied only at positions ≤ *until.
  std::optional<std::size_t> until;
};

struct LocalPair {
  std::size_t layer;
  Tensor clean_attn, clean_mlp;
  Tensor attn, mlp;
};

struct LocalRemoval {
  std::size_t removed_layer;
  std::vector<LocalPair> pairs;  // one per layer l > removed_layer
};

LocalRemoval run_with_local_removal(const ModelBundle& model, const ResidualTape& clean,
                                    std::size_t layer, const LocalRemovalOptions& options = {});
LocalRemoval run_with_local_removal(const ModelBundle& model, std::span<const TokenId> tokens,
                                    std::size_t layer, const LocalRemovalOptions& options = {});

// Dispatches on `spec.kind`. Local removal has no tape; use
// run_with_local_removal for it.
ResidualTape run_intervention(const ModelBundle& model, std::span<const TokenId> tokens,
                              const InterventionSpec& spec, const MeanResidual* mean = nullptr);

}  // namespace residscope
