#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "saf/error.hpp"

namespace saf::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Dense row-major array with an optional gradient slot. Copies share the
// underlying node, so a parameter tensor held by a model and by an optimizer
// refers to the same storage.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : node_(std::make_shared<Node<T>>()) {}
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel_of(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return BasicTensor(std::move(n));
  }

  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel_of(shape)) {
      throw ValidationError("tensor values do not match shape " + shape_string(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return BasicTensor(std::move(n));
  }

  static BasicTensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && numel() > 0; }
  std::span<T> grad() { return node_->ensure_grad(); }
  std::span<const T> grad() const { return node_->ensure_grad(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  T item() const {
    if (numel() != 1) throw ValidationError("item() on a tensor with " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  // Same values, no history.
  BasicTensor detach() const { return from(shape(), node_->value, false); }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Builds an op result. The backward closure is kept only when some parent
// needs a gradient.
template <class T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value,
                           std::vector<std::shared_ptr<Node<T>>> parents,
                           std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(n));
}

// Reverse-mode sweep from a scalar loss. Interior gradients are reset at the
// start of every call; leaf gradients accumulate across calls.
template <class T>
void backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ValidationError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Node<T>* root = &loss.node();
  if (!root->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward) n->backward(*n);
  }
}

}  // namespace saf::nn
