// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "acenet/error.hpp"

namespace acenet {

/// Extents of a dense tensor, rank 1 to 4. Feature maps are NCHW.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) { assign(dims.begin(), dims.end()); }
  explicit Shape(const std::vector<std::size_t>& dims) { assign(dims.begin(), dims.end()); }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t& operator[](std::size_t i) { return dims_[i]; }

  std::size_t numel() const {
    std::size_t n = rank_ == 0 ? 0 : 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  std::vector<std::size_t> to_vector() const { return {dims_.begin(), dims_.begin() + rank_}; }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  template <typename It>
  void assign(It first, It last) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    if (n < 1 || n > kMaxRank) throw DimensionError("tensor rank must be 1..4, got " + std::to_string(n));
    rank_ = n;
    std::copy(first, last, dims_.begin());
  }

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Thread-local switch that disables graph recording (inference, optimizer updates).
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor handle with reverse-mode gradient tracking.
///
/// Copies share storage. Results of differentiable operations remember their
/// inputs so that `backward` can replay adjoints in reverse topological order.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) : node_(std::make_shared<detail::Node<T>>()) {
    if (shape.numel() != data.size())
      throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " + shape.str());
    node_->shape = shape;
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(shape, T(0), requires_grad); }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    return Tensor(shape, std::vector<T>(shape.numel(), value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return Tensor(Shape{1}, {value}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.rank(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place access for leaves only (parameter updates, data loading).
  std::span<T> mutable_data() {
    if (!node_->is_leaf()) throw ContractError("mutable_data() on a non-leaf tensor");
    return node_->data;
  }

  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = node_->shape;
    return node_->data[((n * s[1] + c) * s[2] + h) * s[3] + w];
  }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Same data, no history.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  template <typename U>
  Tensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>(shape(), std::move(out), requires_grad);
  }

  const NodePtr& node() const { return node_; }

  /// Builds a result tensor. When `backward_fn` is set and any input tracks
  /// gradients (and recording is on), the result is attached to the graph.
  static Tensor make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor> inputs,
                            std::function<void(detail::Node<T>&)> backward_fn) {
    Tensor out(shape, std::move(data), false);
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

  static Tensor make_result(Shape shape, std::vector<T> data, const std::vector<Tensor>& inputs,
                            std::function<void(detail::Node<T>&)> backward_fn) {
    Tensor out(shape, std::move(data), false);
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  NodePtr node_;
};

/// Reverse topological record of the operations reachable from a loss.
template <typename T>
class GradTape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  explicit GradTape(const Tensor<T>& root) {
    // Iterative post-order DFS; only gradient-carrying nodes are recorded.
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    if (!root.requires_grad()) return;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node<T>* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
    std::reverse(order_.begin(), order_.end());
  }

  /// Nodes from the root back to the leaves.
  const std::vector<detail::Node<T>*>& entries() const { return order_; }

  void replay() const {
    for (auto* node : order_) {
      if (node->is_leaf() || node->grad.empty()) continue;
      node->backward_fn(*node);
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Populates `grad` of every reachable leaf with d(loss)/d(leaf). Leaf grads
/// are reset first, so each call reports the gradient of this loss alone.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that is not connected to any parameter");
  GradTape<T> tape(loss);
  for (auto* node : tape.entries()) node->grad.assign(node->data.size(), T(0));
  loss.node()->grad[0] = T(1);
  tape.replay();
}

}  // namespace acenet
