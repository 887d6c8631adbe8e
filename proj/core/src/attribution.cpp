// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/attribution.hpp"

#include <cmath>
#include <cstdio>

#include "residscope/autograd.hpp"
#include "residscope/errors.hpp"
#include "residscope/parallel.hpp"

namespace residscope {

namespace {

void check_answer(Span answer, std::size_t T) {
  if (answer.empty()) throw ContractError("integrated gradients: empty answer span");
  if (answer.begin == 0 || answer.end > T) {
    throw ContractError("integrated gradients: answer span [" + std::to_string(answer.begin) +
                        ", " + std::to_string(answer.end) + ") invalid for T=" +
                        std::to_string(T));
  }
}

struct Target {
  std::vector<TokenId> ids;
  std::vector<double> weights;
};

// Row p predicts token p+1; only answer tokens are weighted.
Target answer_target(std::span<const TokenId> tokens, Span answer) {
  Target t{std::vector<TokenId>(tokens.size(), 0), std::vector<double>(tokens.size(), 0.0)};
  for (std::size_t p = answer.begin; p < answer.end; ++p) {
    t.ids[p - 1] = tokens[p];
    t.weights[p - 1] = 1.0;
  }
  return t;
}

Tensor target_value(const ModelBundle& model, const Target& target, std::size_t layer,
                    const Tensor& h) {
  const Tensor logits = logits_from_layer(model, layer, h, h.rows());
  return scale(weighted_nll(logits, target.ids, target.weights), -1.0);
}

Tensor baseline_for(const ModelBundle& model, std::size_t layer, std::size_t T,
                    const MeanResidual* mean, IGBaseline kind) {
  const std::size_t d = model.config.d_model;
  if (kind == IGBaseline::Zeros) return Tensor::zeros({T, d});
  if (!mean) throw ContractError("integrated gradients: mean-residual baseline needs a mean");
  if (mean->n_layers() != model.config.n_layers || mean->width() != d) {
    throw DimensionError("integrated gradients: mean residual does not match model");
  }
  std::vector<double> v(T * d);
  for (std::size_t t = 0; t < T; ++t)
    std::copy(mean->layers[layer].begin(), mean->layers[layer].end(), v.begin() + t * d);
  return Tensor({T, d}, std::move(v));
}

}  // namespace

double answer_log_prob(const ModelBundle& model, std::span<const TokenId> tokens, Span answer,
                       std::size_t layer, const Tensor& h) {
  check_answer(answer, tokens.size());
  return target_value(model, answer_target(tokens, answer), layer, h.detach()).item();
}

double IGLayer::completeness_residual() const {
  double s = 0.0;
  for (double a : attributions) s += a;
  return s - gap();
}

IGLayer ig_layer(const ModelBundle& model, std::span<const TokenId> tokens, Span answer,
                 std::size_t layer, const MeanResidual* mean, const IGConfig& cfg) {
  if (cfg.steps == 0) throw ContractError("integrated gradients: steps must be at least 1");
  if (layer > model.config.n_layers) {
    throw ContractError("integrated gradients: layer " + std::to_string(layer) +
                        " out of range");
  }
  const std::size_t T = tokens.size(), d = model.config.d_model;
  check_answer(answer, T);
  const auto tape = forward_with_tape(model, tokens);
  const Tensor& actual = tape.residuals[layer];
  const Tensor base = baseline_for(model, layer, T, mean, cfg.baseline);
  const Target target = answer_target(tokens, answer);

  std::vector<double> delta(T * d);
  for (std::size_t i = 0; i < T * d; ++i) delta[i] = actual[i] - base[i];

  std::vector<double> grad_sum(T * d, 0.0);
  const double m = static_cast<double>(cfg.steps);
  for (std::size_t k = 1; k <= cfg.steps; ++k) {
    const double alpha = cfg.rule == IGRule::Right ? static_cast<double>(k) / m
                                                   : (static_cast<double>(k) - 0.5) / m;
    std::vector<double> point(T * d);
    for (std::size_t i = 0; i < T * d; ++i) point[i] = base[i] + alpha * delta[i];
    const Tensor h({T, d}, std::move(point), true);
    const Tensor f = target_value(model, target, layer, h);
    const auto g = backward(f, {.retain_intermediate = false}).of(h);
    for (std::size_t i = 0; i < T * d; ++i) grad_sum[i] += g[i];
  }

  IGLayer out;
  out.attributions.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += delta[t * d + j] * (grad_sum[t * d + j] / m);
    out.attributions[t] = s;
  }
  out.f_actual = target_value(model, target, layer, actual.detach()).item();
  out.f_baseline = target_value(model, target, layer, base).item();
  return out;
}

double AttributionGrid::worst_relative_residual() const {
  double worst = 0.0;
  for (std::size_t l = 0; l < gaps.size(); ++l) {
    if (gaps[l] == 0.0) continue;
    worst = std::max(worst, std::abs(completeness_residuals[l]) / std::abs(gaps[l]));
  }
  return worst;
}

HeatmapGrid AttributionGrid::to_heatmap(const Tokenizer& tokenizer,
                                        std::span<const TokenId> tokens) const {
  HeatmapGrid g;
  g.name = "ig";
  g.row_axis = "layer";
  g.col_axis = "token";
  g.rows = layer_ticks(n_rows);
  for (auto id : tokens) g.cols.push_back(tokenizer.token_text(id));
  g.values.assign(values.begin(), values.end());
  g.meta.reduction = "signed";
  g.meta.flags["answer_begin"] = std::to_string(answer_span.begin);
  g.meta.flags["answer_end"] = std::to_string(answer_span.end);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", worst_relative_residual());
  g.meta.flags["completeness_worst_relative"] = buf;
  return g;
}

AttributionGrid ig_grid(const ModelBundle& model, const PromptExample& prompt,
                        const MeanResidual* mean, const IGConfig& cfg) {
  const std::size_t L = model.config.n_layers, T = prompt.tokens.size();
  auto rows = parallel_map<IGLayer>(L + 1, [&](std::size_t l) {
    return ig_layer(model, prompt.tokens, prompt.answer_span, l, mean, cfg);
  });
  AttributionGrid grid;
  grid.n_rows = L + 1;
  grid.n_cols = T;
  grid.answer_span = prompt.answer_span;
  for (const auto& r : rows) {
    grid.values.insert(grid.values.end(), r.attributions.begin(), r.attributions.end());
    grid.completeness_residuals.push_back(r.completeness_residual());
    grid.gaps.push_back(r.gap());
  }
  return grid;
}

}  // namespace residscope
