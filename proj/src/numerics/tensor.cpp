// Copyright 2026 The Ovis Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ovis/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "ovis/error.hpp"

namespace ovis {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  require<DimensionError>(data.size() == r * c, "matrix ", r, "x", c, " given ",
                          data.size(), " values");
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  require<DimensionError>(shape_numel(shape) == data.size(), "shape ",
                          shape_to_string(shape), " needs ", shape_numel(shape),
                          " values, got ", data.size());
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
  return Tensor({m.rows, m.cols}, m.data, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Matrix Tensor::to_matrix() const {
  require<DimensionError>(rank() == 2, "to_matrix needs rank 2, got ",
                          shape_to_string(shape()));
  return Matrix(dim(0), dim(1), node_->data);
}

const Shape& Tensor::shape() const {
  require(defined(), "use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  require<DimensionError>(axis < s.size(), "axis ", axis, " out of range for ",
                          shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  require(defined(), "use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  require(defined(), "use of undefined tensor");
  require(is_leaf(), "mutable_data is only available on leaf tensors");
  return node_->data;
}

double Tensor::item() const {
  require<DimensionError>(numel() == 1, "item() on tensor of shape ",
                          shape_to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require<DimensionError>(rank() == 2, "at(r, c) needs rank 2");
  return node_->data[r * node_->shape[1] + c];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

bool Tensor::is_leaf() const { return defined() && !node_->backward; }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require(has_grad(), "tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  require(defined(), "use of undefined tensor");
  node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(shape(), node_->data, false);
}

void Tensor::backward() const {
  require(defined(), "backward on undefined tensor");
  require(numel() == 1, "backward needs a scalar root, got ", shape_to_string(shape()));
  require(requires_grad(), "backward root does not require grad");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass; leaves accumulate across passes.
  for (auto* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace ovis
