// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors with a reverse-mode gradient graph.
//
// A Tensor is an immutable handle. Operations on tensors that require
// gradients record a node holding the backward rule; `backward()` in
// autograd.hpp walks those nodes in reverse creation order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace residscope {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<const double> row(std::size_t r) const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  // Same values, cut from any graph.
  Tensor detach() const;
  // A fresh leaf over the same values.
  Tensor as_leaf(bool requires_grad = true) const;
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<const detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<const detail::Node> node);

 private:
  std::shared_ptr<const detail::Node> node_;
};

// Bitwise equality of shape and values.
bool identical(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Differentiable operations. None of them mutates its inputs.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor silu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// Gathers rows of `table` (V×d) for each id.
Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids);

// Rotary position embedding on interleaved pairs within each head. Row r is
// at position r % seq_len.
Tensor rope(const Tensor& x, std::size_t n_heads, double theta, std::size_t seq_len);

// Multi-head causal self-attention on already projected q, k, v (R×d). The
// rows form R / seq_len independent sequences of length seq_len.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t n_heads, std::size_t seq_len);

// Σ_r weights[r] · (−log softmax(logits[r])[targets[r]]). Rows with zero
// weight are not read and receive exactly zero gradient.
Tensor weighted_nll(const Tensor& logits, std::span<const std::uint32_t> targets,
                    std::span<const double> weights);

}  // namespace residscope
