// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "fixtures.hpp"
#include "reference.hpp"
#include "residscope/autograd.hpp"
#include "residscope/errors.hpp"

using namespace residscope;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-5;
constexpr double kFloor = 1e-6;

// Checks d f(x)/dx from autograd against central differences at every
// coordinate of x.
void expect_gradient_matches(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                             const char* what) {
  const Tensor x = x0.as_leaf(true);
  const Tensor g = backward(f(x)).of(x);
  const auto scalar = [&](const std::vector<double>& v) {
    return f(Tensor(x0.shape(), v)).item();
  };
  const std::vector<double> base(x0.data().begin(), x0.data().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double fd = oracle::central_difference(scalar, base, i, kStep);
    ASSERT_LT(oracle::rel_error(g[i], fd, kFloor), kTol)
        << what << " coordinate " << i << ": autograd " << g[i] << " vs fd " << fd;
  }
}

// A fixed random projection turns any tensor into a scalar loss.
Tensor project(const Tensor& y, std::uint64_t seed) {
  const Tensor w = fixtures::random_tensor(y.shape(), seed);
  return sum(mul(y, w));
}

}  // namespace

TEST(Backward, SquareAtThreeIsSix) {
  const Tensor x = Tensor::scalar(3.0, true);
  EXPECT_EQ(backward(mul(x, x)).of(x).item(), 6.0);
}

TEST(Backward, ConstantLossHasZeroGradient) {
  const Tensor x = Tensor::scalar(3.0, true);
  const Tensor c = Tensor::scalar(7.0);
  EXPECT_EQ(backward(c).of(x).item(), 0.0);
}

TEST(Backward, TensorOffThePathGetsZeros) {
  const Tensor x = fixtures::random_tensor({2, 2}, 1, 1.0, true);
  const Tensor y = fixtures::random_tensor({2, 2}, 2, 1.0, true);
  const Tensor unused = scale(y, 2.0);
  const auto g = backward(sum(mul(x, x)));
  const Tensor gy = g.of(y), gu = g.of(unused);
  for (double v : gy.data()) EXPECT_EQ(v, 0.0);
  for (double v : gu.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarLossIsAContractError) {
  const Tensor x = fixtures::random_tensor({2, 2}, 1, 1.0, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  const Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = mul(x, x);
  EXPECT_EQ(backward(add(y, mul(y, x))).of(x).item(), 2.0 * 2.0 + 3.0 * 4.0);
}

TEST(Backward, RepeatedSweepsAreBitIdentical) {
  const Tensor a = fixtures::random_tensor({3, 4}, 5, 1.0, true);
  const Tensor b = fixtures::random_tensor({4, 2}, 6, 1.0, true);
  const auto loss = [&] { return sum(softmax_rows(matmul(a, b))); };
  const auto g1 = backward(project(matmul(a, b), 1)).of(a);
  const auto g2 = backward(project(matmul(a, b), 1)).of(a);
  EXPECT_TRUE(identical(g1, g2));
  (void)loss;
}

TEST(Backward, DroppingIntermediatesKeepsLeafGradients) {
  const Tensor a = fixtures::random_tensor({3, 4}, 5, 1.0, true);
  const Tensor mid = silu(a);
  const Tensor loss = project(mid, 3);
  const auto all = backward(loss);
  const auto leaves = backward(loss, {.retain_intermediate = false});
  EXPECT_TRUE(identical(all.of(a), leaves.of(a)));
  EXPECT_TRUE(all.contains(mid));
  EXPECT_FALSE(leaves.contains(mid));
}

TEST(Backward, MatmulGradientOfSumIsOnesTimesBTransposed) {
  const Tensor a = fixtures::random_tensor({3, 4}, 1, 1.0, true);
  const Tensor b = fixtures::random_tensor({4, 2}, 2);
  const Tensor g = backward(sum(matmul(a, b))).of(a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g.at(i, k), b.at(k, 0) + b.at(k, 1), 1e-15);
  expect_gradient_matches([&](const Tensor& x) { return sum(matmul(x, b)); }, a, "matmul A");
  expect_gradient_matches([&](const Tensor& x) { return sum(matmul(a, x)); }, b, "matmul B");
}

TEST(FiniteDifferences, ElementwiseOps) {
  const Tensor x = fixtures::random_tensor({3, 5}, 10);
  const Tensor y = fixtures::random_tensor({3, 5}, 11);
  expect_gradient_matches([&](const Tensor& t) { return project(add(t, y), 1); }, x, "add");
  expect_gradient_matches([&](const Tensor& t) { return project(sub(y, t), 2); }, x, "sub");
  expect_gradient_matches([&](const Tensor& t) { return project(mul(t, y), 3); }, x, "mul");
  expect_gradient_matches([&](const Tensor& t) { return project(scale(t, -1.7), 4); }, x, "scale");
  expect_gradient_matches([&](const Tensor& t) { return project(silu(t), 5); }, x, "silu");
  expect_gradient_matches([&](const Tensor& t) { return sum(mul(t, t)); }, x, "sum");
}

TEST(FiniteDifferences, SoftmaxAndNorm) {
  const Tensor x = fixtures::random_tensor({3, 6}, 20);
  const Tensor gain = fixtures::random_tensor({6}, 21);
  expect_gradient_matches([&](const Tensor& t) { return project(softmax_rows(t), 6); }, x,
                          "softmax");
  expect_gradient_matches([&](const Tensor& t) { return project(rmsnorm(t, gain), 7); }, x,
                          "rmsnorm x");
  expect_gradient_matches([&](const Tensor& g) { return project(rmsnorm(x, g), 8); }, gain,
                          "rmsnorm gain");
}

TEST(FiniteDifferences, EmbeddingRopeAttention) {
  const Tensor table = fixtures::random_tensor({6, 4}, 30);
  const std::vector<std::uint32_t> ids = {1, 4, 1, 0};
  expect_gradient_matches([&](const Tensor& t) { return project(embedding(t, ids), 9); }, table,
                          "embedding");
  const Tensor x = fixtures::random_tensor({6, 8}, 31);
  expect_gradient_matches([&](const Tensor& t) { return project(rope(t, 2, 10000.0, 3), 10); }, x,
                          "rope");
  const Tensor q = fixtures::random_tensor({6, 8}, 32);
  const Tensor k = fixtures::random_tensor({6, 8}, 33);
  const Tensor v = fixtures::random_tensor({6, 8}, 34);
  expect_gradient_matches(
      [&](const Tensor& t) { return project(causal_attention(t, k, v, 2, 3), 11); }, q, "attn q");
  expect_gradient_matches(
      [&](const Tensor& t) { return project(causal_attention(q, t, v, 2, 3), 12); }, k, "attn k");
  expect_gradient_matches(
      [&](const Tensor& t) { return project(causal_attention(q, k, t, 2, 3), 13); }, v, "attn v");
}

TEST(FiniteDifferences, WeightedNll) {
  const Tensor logits = fixtures::random_tensor({4, 5}, 40, 2.0);
  const std::vector<std::uint32_t> targets = {0, 3, 4, 1};
  const std::vector<double> weights = {0.5, 0.0, 0.25, 0.25};
  expect_gradient_matches([&](const Tensor& t) { return weighted_nll(t, targets, weights); },
                          logits, "weighted_nll");
  const Tensor x = logits.as_leaf(true);
  const Tensor g = backward(weighted_nll(x, targets, weights)).of(x);
  for (double v : g.row(1)) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDifferences, ReshapeRoutesGradient) {
  const Tensor x = fixtures::random_tensor({2, 6}, 50);
  expect_gradient_matches([&](const Tensor& t) { return project(t.reshape({3, 4}), 14); }, x,
                          "reshape");
}
