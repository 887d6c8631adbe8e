// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/autograd.hpp"

#include <algorithm>
#include <unordered_set>

#include "node.hpp"
#include "residscope/errors.hpp"

namespace residscope {

Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.node().get());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second.grad);
}

bool Gradients::contains(const Tensor& t) const { return grads_.count(t.node().get()) != 0; }

Gradients backward(const Tensor& loss, BackwardOptions options) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  Gradients out;
  if (!loss.requires_grad()) return out;

  // Collect every node on a path to the loss.
  std::vector<const detail::Node*> order;
  std::unordered_map<const detail::Node*, std::shared_ptr<const detail::Node>> owner;
  std::vector<std::shared_ptr<const detail::Node>> stack{loss.node()};
  std::unordered_set<const detail::Node*> seen{loss.node().get()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    order.push_back(n.get());
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    owner.emplace(n.get(), std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  std::unordered_map<const detail::Node*, std::vector<double>> grad;
  grad[loss.node().get()] = {1.0};

  for (const detail::Node* n : order) {
    auto git = grad.find(n);
    if (git == grad.end()) continue;
    if (n->backward) {
      std::vector<std::span<double>> spans(n->parents.size());
      for (std::size_t i = 0; i < n->parents.size(); ++i) {
        const auto* p = n->parents[i].get();
        if (!p->requires_grad) continue;
        auto& buf = grad[p];
        if (buf.empty()) buf.assign(p->value.size(), 0.0);
        spans[i] = buf;
      }
      // The map may rehash above; look the output gradient up again.
      const auto& g = grad.find(n)->second;
      n->backward(*n, g, spans);
    }
    auto it = grad.find(n);
    const bool is_leaf = !n->backward;
    if (is_leaf || options.retain_intermediate) {
      out.grads_.emplace(n, Gradients::Entry{owner.at(n), std::move(it->second)});
    }
    grad.erase(it);
  }
  return out;
}

}  // namespace residscope
