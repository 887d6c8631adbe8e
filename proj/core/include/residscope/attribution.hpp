// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Integrated gradients over the residual stream, one (layer × token) grid
// per prompt.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "residscope/interventions.hpp"
#include "residscope/metrics.hpp"
#include "residscope/model.hpp"
#include "residscope/prompt.hpp"

namespace residscope {

enum class IGBaseline { MeanResidual, Zeros };

enum class IGRule {
  Right,     // α_k = k/m
  Midpoint,  // α_k = (k − ½)/m
};

struct IGConfig {
  std::size_t steps = 64;
  IGBaseline baseline = IGBaseline::MeanResidual;
  IGRule rule = IGRule::Right;
};

// F(h_l) = Σ over answer predictions of log p(answer token), running layers
// [layer, L) from h_l.
double answer_log_prob(const ModelBundle& model, std::span<const TokenId> tokens, Span answer,
                       std::size_t layer, const Tensor& h);

struct IGLayer {
  std::vector<double> attributions;  // one per position
  double f_actual = 0.0;
  double f_baseline = 0.0;

  double gap() const { return f_actual - f_baseline; }
  // Σ_t attributions[t] − (F(actual) − F(baseline)).
  double completeness_residual() const;
};

// `mean` may be null when cfg.baseline is Zeros.
IGLayer ig_layer(const ModelBundle& model, std::span<const TokenId> tokens, Span answer,
                 std::size_t layer, const MeanResidual* mean, const IGConfig& cfg = {});

struct AttributionGrid {
  std::size_t n_rows = 0;  // L + 1
  std::size_t n_cols = 0;  // T
  std::vector<double> values;  // signed, row-major
  Span answer_span;
  std::vector<double> completeness_residuals;  // per layer
  std::vector<double> gaps;                    // F(actual) − F(baseline) per layer

  double at(std::size_t l, std::size_t t) const { return values[l * n_cols + t]; }
  // Largest |residual| / |gap| over layers with a nonzero gap.
  double worst_relative_residual() const;
  HeatmapGrid to_heatmap(const Tokenizer& tokenizer, std::span<const TokenId> tokens) const;
};

AttributionGrid ig_grid(const ModelBundle& model, const PromptExample& prompt,
                        const MeanResidual* mean, const IGConfig& cfg = {});

}  // namespace residscope
