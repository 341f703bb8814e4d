#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "shrinktea/errors.hpp"

namespace shrinktea {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) oss << (i ? "x" : "") << shape[i];
  oss << ']';
  return oss.str();
}

namespace detail {

// One vertex of the computation graph. Leaves have no parents and no backward rule.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool grad_populated = false;  // reached by a backward pass since the last zero_grad
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require grad.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major float64 tensor with reverse-mode autodiff. Copies share storage;
// use clone() or detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_size(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                           " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Mutable access is reserved for leaves (parameter updates, loading); values inside
  // a live graph must not be edited between forward and backward.
  std::span<double> mutable_data() { return node_->data; }
  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (flag) {
      node_->ensure_grad();
    } else {
      node_->grad.clear();
      node_->grad.shrink_to_fit();
    }
  }
  bool has_grad() const { return node_->requires_grad && !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  // True when a backward pass reached this tensor since the last zero_grad().
  bool grad_populated() const { return node_->grad_populated; }
  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    node_->grad_populated = false;
  }

  bool is_leaf() const { return node_->parents.empty(); }

  // New leaf with the same values and no history.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }
  Tensor clone() const { return Tensor(shape(), node_->data, requires_grad()); }

  bool all_finite() const {
    return std::all_of(node_->data.begin(), node_->data.end(), [](double v) { return std::isfinite(v); });
  }

  // Graph plumbing for op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                        std::function<void(detail::Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data), false);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->ensure_grad();
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError(what + " contains non-finite values");
}

// Reverse-mode accumulation from a scalar loss. Every node reachable from the loss that
// requires grad is visited once, in reverse topological order.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    node->grad_populated = true;
    if (node->backward_fn) {
      for (auto& p : node->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      node->backward_fn(*node);
    }
  }
}

}  // namespace shrinktea
