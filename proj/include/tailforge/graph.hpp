#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tailforge/matrix.hpp"

namespace tailforge {

template <typename T>
class Node;

template <typename T = double>
using Var = std::shared_ptr<Node<T>>;

// A value in the reverse-mode graph. Children own their parents, so a graph
// lives exactly as long as its root (and any leaves the caller keeps).
template <typename T>
class Node {
 public:
  using BackwardFn = std::function<void(Node&)>;

  Node(Matrix<T> value, bool requires_grad)
      : value_(std::move(value)), requires_grad_(requires_grad) {}

  const Matrix<T>& value() const noexcept { return value_; }
  // Only for leaves: optimisers update parameters in place.
  Matrix<T>& mutable_value() noexcept { return value_; }

  bool requires_grad() const noexcept { return requires_grad_; }
  bool has_grad() const noexcept { return !grad_.empty(); }

  // Materialised on first access, zero-filled.
  Matrix<T>& grad() {
    if (grad_.empty() && !value_.empty()) grad_ = Matrix<T>(value_.rows(), value_.cols());
    return grad_;
  }
  const Matrix<T>& grad_or_empty() const noexcept { return grad_; }
  void zero_grad() noexcept { grad_ = Matrix<T>(); }

  const std::vector<Var<T>>& parents() const noexcept { return parents_; }
  const Var<T>& parent(std::size_t i) const noexcept { return parents_[i]; }

  void attach(std::vector<Var<T>> parents, BackwardFn fn) {
    parents_ = std::move(parents);
    backward_ = std::move(fn);
  }

  void run_backward() {
    if (backward_ && has_grad()) backward_(*this);
  }

 private:
  Matrix<T> value_;
  Matrix<T> grad_;
  bool requires_grad_;
  std::vector<Var<T>> parents_;
  BackwardFn backward_;
};

template <typename T>
Var<T> constant(Matrix<T> value) {
  return std::make_shared<Node<T>>(std::move(value), false);
}

template <typename T>
Var<T> parameter(Matrix<T> value) {
  return std::make_shared<Node<T>>(std::move(value), true);
}

// Builds an interior node. When no parent requires a gradient the node is a
// constant and keeps no references upstream.
template <typename T>
Var<T> make_op(Matrix<T> value, std::vector<Var<T>> parents, typename Node<T>::BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad();
  auto node = std::make_shared<Node<T>>(std::move(value), needs);
  if (needs) node->attach(std::move(parents), std::move(fn));
  return node;
}

template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(v->value());
}

// Nodes reachable from root, parents before children.
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<const Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents().size()) {
      Node<T>* parent = node->parents()[next++].get();
      if (parent->requires_grad() && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Accumulates d(root)/d(node) into every reachable node that requires a
// gradient. root must be 1x1 unless a seed gradient of matching shape is given.
template <typename T>
void backward(const Var<T>& root, const Matrix<T>* seed = nullptr) {
  if (!root->requires_grad()) return;
  if (seed != nullptr) {
    if (!seed->same_shape(root->value())) {
      throw DimensionError("backward seed shape " + seed->shape() + " does not match root " +
                           root->value().shape());
    }
    root->grad() = *seed;
  } else {
    if (root->value().rows() != 1 || root->value().cols() != 1) {
      throw DimensionError("backward without seed needs a 1x1 root, got " +
                           root->value().shape());
    }
    root->grad()(0, 0) = T{1};
  }
  const auto order = topological_order(root);
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->run_backward();
}

// Adds g into the gradient of parent i when that parent participates.
template <typename T>
void accumulate(Node<T>& self, std::size_t i, const Matrix<T>& g) {
  auto& p = self.parents()[i];
  if (!p->requires_grad()) return;
  auto dst = p->grad().data();
  auto src = g.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace tailforge
