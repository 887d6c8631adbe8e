// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "reference.hpp"
#include "residscope/attribution.hpp"
#include "residscope/errors.hpp"

using namespace residscope;

namespace {

MeanResidual mean_for(const ModelBundle& m) {
  std::vector<std::vector<TokenId>> corpus;
  for (std::uint64_t i = 0; i < 6; ++i) corpus.push_back(fixtures::kv_prompt(500 + i).tokens);
  return compute_mean_residual(m, corpus);
}

}  // namespace

TEST(AnswerLogProb, MatchesOracleAtEveryLayer) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 1);
  const auto p = fixtures::kv_prompt(2);
  const auto tape = forward_with_tape(m, p.tokens);
  for (std::size_t l = 0; l <= 2; ++l) {
    const double f = answer_log_prob(m, p.tokens, p.answer_span, l, tape.residuals[l]);
    const double ref = oracle::answer_log_prob(m, p.tokens, p.answer_span.begin, p.answer_span.end,
                                               l, oracle::to_mat(tape.residuals[l]));
    EXPECT_NEAR(f, ref, 1e-11);
  }
}

TEST(IG, BaselineEqualToActivationsGivesZero) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 3);
  const std::vector<TokenId> tokens(6, 9);
  const auto tape = forward_with_tape(m, tokens);
  MeanResidual mean = mean_for(m);
  const auto row = tape.residuals[0].row(0);
  mean.layers[0].assign(row.begin(), row.end());
  const auto r = ig_layer(m, tokens, Span{3, 5}, 0, &mean, {.steps = 16});
  for (double a : r.attributions) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(r.gap(), 0.0);
}

TEST(IG, ConstantTargetGivesZeroGrid) {
  auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 4);
  m.w_out = Tensor::zeros(m.w_out.shape());
  const auto mean = mean_for(m);
  const auto grid = ig_grid(m, fixtures::kv_prompt(5), &mean, {.steps = 8});
  for (double v : grid.values) EXPECT_EQ(v, 0.0);
  for (double g : grid.gaps) EXPECT_EQ(g, 0.0);
}

TEST(IG, CompletenessWithinOnePercentAt256Steps) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 16), 1);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(2);
  const auto grid = ig_grid(m, p, &mean, {.steps = 256});
  for (std::size_t l = 0; l <= 2; ++l) {
    // A vanishing gap would make the relative bound meaningless.
    ASSERT_GT(std::abs(grid.gaps[l]), 0.5) << "layer " << l;
    EXPECT_LE(std::abs(grid.completeness_residuals[l]), 0.01 * std::abs(grid.gaps[l])) << "layer " << l;
  }
}

TEST(IG, ResidualShrinksAsStepsDouble) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 16), 8);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(9);
  for (std::size_t l = 0; l <= 2; ++l) {
    const double r32 = std::abs(ig_layer(m, p.tokens, p.answer_span, l, &mean, {.steps = 32}).completeness_residual());
    const double r64 = std::abs(ig_layer(m, p.tokens, p.answer_span, l, &mean, {.steps = 64}).completeness_residual());
    const double r128 = std::abs(ig_layer(m, p.tokens, p.answer_span, l, &mean, {.steps = 128}).completeness_residual());
    EXPECT_GE(r32 / r64, 1.5) << "layer " << l;
    EXPECT_LE(r32 / r64, 3.0) << "layer " << l;
    EXPECT_GE(r64 / r128, 1.5) << "layer " << l;
    EXPECT_LE(r64 / r128, 3.0) << "layer " << l;
  }
}

TEST(IG, PositionsAfterTheAnswerGetExactlyZero) {
  const auto m = fixtures::random_model(fixtures::tiny_config(3, 8), 10);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(11);
  const auto grid = ig_grid(m, p, &mean, {.steps = 8});
  for (std::size_t l = 0; l < grid.n_rows; ++l)
    for (std::size_t t = p.answer_span.end - 1; t < grid.n_cols; ++t) EXPECT_EQ(grid.at(l, t), 0.0);
}

// Gradients from central differences of the straight-line forward.
TEST(IG, GridMatchesLoopOracle) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 12);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(13, 1);
  const std::size_t steps = 6;
  for (auto rule : {IGRule::Right, IGRule::Midpoint}) {
    const auto grid = ig_grid(m, p, &mean, {.steps = steps, .rule = rule});
    const auto ref = oracle::forward(m, p.tokens);
    const std::size_t T = p.tokens.size(), d = 8;
    for (std::size_t l = 0; l <= 2; ++l) {
      const auto& actual = ref.residuals[l];
      std::vector<double> attr(T, 0.0);
      for (std::size_t k = 1; k <= steps; ++k) {
        const double alpha = rule == IGRule::Right ? double(k) / steps : (k - 0.5) / steps;
        std::vector<double> point(T * d);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t j = 0; j < d; ++j)
            point[t * d + j] = mean.layers[l][j] + alpha * (actual[t][j] - mean.layers[l][j]);
        const auto f = [&](const std::vector<double>& x) {
          oracle::Mat h(T, std::vector<double>(d));
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) h[t][j] = x[t * d + j];
          return oracle::answer_log_prob(m, p.tokens, p.answer_span.begin, p.answer_span.end, l, h);
        };
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t j = 0; j < d; ++j) {
            const double g = oracle::central_difference(f, point, t * d + j, 1e-5);
            attr[t] += (actual[t][j] - mean.layers[l][j]) * g / steps;
          }
      }
      for (std::size_t t = 0; t < T; ++t)
        EXPECT_NEAR(grid.at(l, t), attr[t], 1e-7) << "layer " << l << " pos " << t;
    }
  }
}

TEST(IG, ZeroBaselineNeedsNoMean) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 14);
  const auto p = fixtures::kv_prompt(15);
  const auto r = ig_layer(m, p.tokens, p.answer_span, 1, nullptr, {.steps = 4, .baseline = IGBaseline::Zeros});
  const auto tape = forward_with_tape(m, p.tokens);
  EXPECT_NEAR(r.f_baseline,
              answer_log_prob(m, p.tokens, p.answer_span, 1, Tensor::zeros(tape.residuals[1].shape())),
              1e-12);
  EXPECT_THROW(ig_layer(m, p.tokens, p.answer_span, 1, nullptr), ContractError);
}

TEST(IG, RejectsBadArguments) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 16);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(17);
  EXPECT_THROW(ig_layer(m, p.tokens, p.answer_span, 0, &mean, {.steps = 0}), ContractError);
  EXPECT_THROW(ig_layer(m, p.tokens, Span{4, 4}, 0, &mean), ContractError);
  EXPECT_THROW(ig_layer(m, p.tokens, p.answer_span, 3, &mean), ContractError);
}

TEST(IG, DeterministicAndExportsHeatmap) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 18);
  const auto mean = mean_for(m);
  const auto p = fixtures::kv_prompt(19);
  const auto a = ig_grid(m, p, &mean, {.steps = 8});
  const auto b = ig_grid(m, p, &mean, {.steps = 8});
  EXPECT_EQ(a.values, b.values);
  const auto h = a.to_heatmap(m.tokenizer, p.tokens);
  EXPECT_EQ(h.name, "ig");
  EXPECT_EQ(h.n_rows(), 3u);
  EXPECT_EQ(h.n_cols(), p.tokens.size());
  EXPECT_NO_THROW(h.validate());
  EXPECT_EQ(h.at(1, 2).value(), a.at(1, 2));
}
