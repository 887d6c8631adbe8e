// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "residscope/tensor.hpp"

namespace residscope::detail {

// Accumulates (+=) the contribution of `grad_out` into each parent gradient
// buffer. Buffers of parents that do not require gradients are empty spans.
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      std::span<const std::span<double>> parent_grads)>;

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<const Node>> parents;
  BackwardFn backward;
};

std::uint64_t next_node_id();

// Builds the result of an operation. When no parent requires gradients the
// node is a plain constant and `fn` is dropped.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                   BackwardFn fn);

}  // namespace residscope::detail
