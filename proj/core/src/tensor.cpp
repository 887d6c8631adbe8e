// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "node.hpp"
#include "residscope/errors.hpp"

namespace residscope {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                   BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(fn);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

namespace {

std::shared_ptr<const detail::Node> leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

const Shape& empty_shape() {
  static const Shape s;
  return s;
}

}  // namespace

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<const detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return node_ ? node_->shape : empty_shape(); }

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() == 2) return s[0];
  if (s.size() <= 1) return 1;
  throw DimensionError("rows() on tensor of shape " + shape_string(s));
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  if (s.empty()) return 1;
  throw DimensionError("cols() on tensor of shape " + shape_string(s));
}

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->value;
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  if (r >= rows()) throw ContractError("row " + std::to_string(r) + " out of range");
  return data().subspan(r * c, c);
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw ContractError("index out of range");
  return data()[r * cols() + c];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Tensor::detach() const {
  if (!node_ || !node_->requires_grad) return *this;
  return Tensor(node_->shape, node_->value, false);
}

Tensor Tensor::as_leaf(bool requires_grad) const {
  return Tensor(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(this->shape()) + " to " +
                         shape_string(shape));
  }
  auto n = numel();
  return detail::make_result(
      std::move(shape), std::vector<double>(data().begin(), data().end()), {*this},
      [n](const detail::Node&, std::span<const double> g, std::span<const std::span<double>> pg) {
        for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[i];
      });
}

bool identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto da = a.data();
  const auto db = b.data();
  return da.empty() || std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace residscope
