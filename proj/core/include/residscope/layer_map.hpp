// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Affine maps from every residual layer of one model to every residual
// layer of another, fitted by closed-form ridge regression.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "residscope/metrics.hpp"
#include "residscope/model.hpp"

namespace residscope {

struct ActivationPairSet {
  std::vector<Tensor> x;  // L₁+1 entries, N×d₁ (source model)
  std::vector<Tensor> y;  // L₂+1 entries, N×d₂ (target model)
  std::vector<std::size_t> sequence, position;  // provenance of each row

  std::size_t size() const { return sequence.size(); }
};

// Throws TokenizerMismatchError when the two models tokenize differently.
ActivationPairSet collect_pairs(const ModelBundle& source, const ModelBundle& target,
                                std::span<const std::vector<TokenId>> corpus);

struct AffineMap {
  Tensor w;               // d₁×d₂
  std::vector<double> b;  // d₂

  Tensor apply(const Tensor& x) const;
};

// Streaming sufficient statistics for one (X, Y) regression. Rows are
// shifted by the first sample before accumulation to keep the centered
// moments well conditioned.
class RidgeAccumulator {
 public:
  RidgeAccumulator(std::size_t d_in, std::size_t d_out);

  void add(std::span<const double> x, std::span<const double> y);
  // Rows of x/y (n×d_in, n×d_out) in order.
  void add_rows(const Tensor& x, const Tensor& y);

  std::size_t count() const { return n_; }
  // trace(XcᵀXc) / d_in: the per-feature centered scatter.
  double feature_scale() const;
  // argmin Σ‖y − (xW + b)‖² + λ‖W‖²_F. Throws RegularizationRequiredError
  // when λ = 0 and the centered scatter is singular.
  AffineMap solve(double lambda) const;
  // Training objective for a given map, from the moments.
  double objective(const AffineMap& map, double lambda) const;

 private:
  friend class MapGridBuilder;
  std::size_t d_in_, d_out_;
  std::size_t n_ = 0;
  std::vector<double> shift_x_, shift_y_;
  std::vector<double> sx_, sy_;    // Σ(x−x₀), Σ(y−y₀)
  std::vector<double> sxx_, sxy_;  // Σ(x−x₀)(x−x₀)ᵀ, Σ(x−x₀)(y−y₀)ᵀ
  double syy_ = 0.0;               // Σ‖y−y₀‖²
};

AffineMap fit_map(const Tensor& x, const Tensor& y, double lambda);

struct MapEval {
  double rel_error = 0.0;  // mean of ‖y − f(x)‖/‖y‖
  std::size_t count = 0;
  std::size_t excluded = 0;  // targets with ‖y‖ < kZeroNorm
};

MapEval eval_map(const AffineMap& map, const Tensor& x, const Tensor& y);

struct MapGridOptions {
  // λ = relative_lambda · trace(XcᵀXc)/d₁, per source layer.
  double relative_lambda = 1e-3;
  std::uint64_t seed = 0;
  std::size_t eval_mod = 10;  // one row in eval_mod goes to the eval split
};

// Eval-split membership of a token; a pure function of the sequence's
// content, the position and the seed.
bool in_eval_split(std::span<const TokenId> sequence, std::size_t position,
                   const MapGridOptions& options);

struct MapGrid {
  HeatmapGrid rel_error;  // rows: source layer m, cols: target layer l
  double relative_lambda = 0.0;
  std::size_t n_train = 0, n_eval = 0, excluded = 0;
};

MapGrid map_grid(const ModelBundle& source, const ModelBundle& target,
                 std::span<const std::vector<TokenId>> corpus, const MapGridOptions& options = {});

// Spearman correlation between target layer l and argmin_m rel_error[m, l]
// (lowest m on ties). Throws UndefinedScoreError when either ranking is
// constant.
double diagonality(const HeatmapGrid& grid);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace residscope
