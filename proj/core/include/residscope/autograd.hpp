// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <unordered_map>
#include <vector>

#include "residscope/tensor.hpp"

namespace residscope {

struct BackwardOptions {
  // Keep gradients of intermediate (non-leaf) tensors in the result. Training
  // turns this off to release activation gradients as soon as they are used.
  bool retain_intermediate = true;
};

class Gradients {
 public:
  // Gradient of the loss w.r.t. `t`; zeros when `t` is not on a path to it.
  Tensor of(const Tensor& t) const;
  bool contains(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& loss, BackwardOptions options);
  struct Entry {
    std::shared_ptr<const detail::Node> node;
    std::vector<double> grad;
  };
  std::unordered_map<const detail::Node*, Entry> grads_;
};

// Reverse-mode sweep from a scalar loss. Every node is visited exactly once,
// newest first; accumulation order is fixed by node creation order.
Gradients backward(const Tensor& loss, BackwardOptions options = {});

}  // namespace residscope
