// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-layer series and layer×layer / layer×token grids computed from clean
// and intervened residual tapes.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "residscope/interventions.hpp"
#include "residscope/model.hpp"
#include "residscope/prompt.hpp"

namespace residscope {

struct Meta {
  std::string model;
  std::string corpus;
  std::uint64_t seed = 0;
  std::string reduction;  // "mean" | "max" | ...
  std::map<std::string, std::string> flags;

  bool operator==(const Meta&) const = default;
};

// Per-layer curve. Entries are empty when no token contributed to them.
struct LayerSeries {
  std::string name;
  std::string axis = "layer";
  std::vector<std::string> ticks;
  std::vector<std::optional<double>> values;
  Meta meta;
  // Tokens dropped because a denominator norm fell below kZeroNorm.
  std::size_t excluded = 0;

  bool operator==(const LayerSeries&) const = default;
};

struct HeatmapGrid {
  std::string name;
  std::string row_axis, col_axis;
  std::vector<std::string> rows, cols;
  std::vector<std::optional<double>> values;  // row-major, rows × cols
  Meta meta;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return cols.size(); }
  const std::optional<double>& at(std::size_t r, std::size_t c) const {
    return values[r * cols.size() + c];
  }
  std::optional<double>& at(std::size_t r, std::size_t c) { return values[r * cols.size() + c]; }
  // Throws ContractError if values does not match the tick labels.
  void validate() const;

  bool operator==(const HeatmapGrid&) const = default;
};

// Norms below this are treated as zero denominators.
inline constexpr double kZeroNorm = 1e-12;

double l2_norm(std::span<const double> x);
double cossim(std::span<const double> x, std::span<const double> y);

std::vector<std::string> layer_ticks(std::size_t n, std::size_t first = 0);

// ‖a+m‖/‖h‖, ‖a‖/‖h‖, ‖m‖/‖h+a‖; mean over all tokens of all tapes.
std::vector<LayerSeries> relative_contributions(std::span<const ResidualTape> tapes);
// cossim(a+m, h), cossim(a, h), cossim(m, h+a).
std::vector<LayerSeries> contribution_cossims(std::span<const ResidualTape> tapes);
// cossim(h_l, h_{l+1}).
LayerSeries neighbor_cossim(std::span<const ResidualTape> tapes);
// ‖h_l‖ (L+1 entries), ‖a_l‖, ‖m_l‖.
std::vector<LayerSeries> residual_norms(std::span<const ResidualTape> tapes);

// max over positions of ‖y_t − ȳ_t‖₂.
double output_change(const ResidualTape& clean, const ResidualTape& intervened,
                     std::span<const std::size_t> positions);

struct EffectOptions {
  bool restrict_to_future = false;
  std::size_t split_count = 4;  // t_s samples per prompt
  std::uint64_t seed = 0;
};

struct EffectResult {
  HeatmapGrid effects;         // E[s, l], null for l ≤ s
  LayerSeries output_change;   // per skipped layer s
  std::size_t excluded = 0;    // samples with zero clean contribution
};

// Candidate split positions for a prompt: answer positions p with
// 1 < p < T−1, falling back to every such position when the answer has
// none.
std::vector<std::size_t> split_candidates(const PromptExample& prompt);
// Up to `count` distinct candidates, drawn uniformly.
std::vector<std::size_t> sample_splits(const PromptExample& prompt, std::size_t count, Rng& rng);

// Relative change of later layers' contributions when layer s is skipped,
// clipped to [0,1] per sample, max over prompts, positions and split samples.
EffectResult downstream_effect_matrix(const ModelBundle& model,
                                      std::span<const PromptExample> prompts,
                                      const EffectOptions& options = {});

struct LocalEffectOptions {
  bool restrict_to_future = false;
  std::size_t split_count = 4;
  std::uint64_t seed = 0;
  LocalSubtrahend subtrahend = LocalSubtrahend::Contribution;
};

// ‖(a_l+m_l) − (ā_l+m̄_l)‖/‖a_l+m_l‖ under non-propagated removal of layer s.
HeatmapGrid local_effect_matrix(const ModelBundle& model, std::span<const PromptExample> prompts,
                                const LocalEffectOptions& options = {});

enum class KlDirection {
  FinalToLens,  // KL(p_L ‖ p_l)
  LensToFinal,  // KL(p_l ‖ p_L)
};

struct LogitLensOptions {
  std::size_t top_k = 5;
  KlDirection direction = KlDirection::FinalToLens;
};

double kl_divergence(std::span<const double> p, std::span<const double> q);
// Indices of the k largest entries; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> p, std::size_t k);

struct LogitLensResult {
  LayerSeries kl;       // mean over tokens; max recorded in meta flags
  LayerSeries overlap;  // |top_k(p_l) ∩ top_k(p_L)| / k
};

LogitLensResult logitlens_curves(const ModelBundle& model, std::span<const ResidualTape> tapes,
                                 const LogitLensOptions& options = {});

// Positions whose next-token prediction is an answer token.
std::vector<std::size_t> answer_prediction_positions(const PromptExample& prompt);

// Output change over the answer predictions for every erased (layer, token).
HeatmapGrid erasure_grid(const ModelBundle& model, const PromptExample& prompt,
                         const MeanResidual& mean, ErasureIndex index = ErasureIndex::NextLayer);

// e_s = mean over l > s of E[s,l]. The last layer has no successors; its
// entry is `last_layer_value` when given, else 0.
LayerSeries layer_importance_from_effects(const HeatmapGrid& effects,
                                          std::optional<double> last_layer_value = std::nullopt);

// d = Σ_l l·e_l / Σ_m e_m with 1-based layer indices.
double depth_score(const LayerSeries& importance);
double depth_score(std::span<const double> importance);

}  // namespace residscope
