#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tar/tensor.hpp"

namespace tar {

// Handle to a value recorded on a Tape. Plain index, cheap to copy; only
// meaningful together with the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Operations append nodes in execution order,
// which is already a topological order of the data-flow graph, so the
// backward pass is a single reverse sweep. Gradient buffers are allocated
// lazily: a node whose buffer was never touched received no gradient and
// its backward closure is skipped, which prunes subgraphs that do not
// reach the loss.
//
// Ops register a closure that reads the output gradient and accumulates
// into the input gradients. Closures are only created when at least one
// input requires a gradient; a forward pass over non-requiring leaves
// stores values only, which doubles as the no-grad inference mode.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::int32_t)>;

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  // Appends an op result. `back` may be empty when no input needs a
  // gradient; it receives the tape and the id of this node.
  Var emit(Tensor<T> value, bool requires_grad, BackwardFn back) {
    return push(std::move(value), requires_grad, std::move(back));
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  Tensor<T>& mutable_value(Var v) { return node(v).value; }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient accumulated for `v` by the last backward() call. Allocates a
  // zero buffer if nothing flowed here, so a detached input reads as a
  // well-defined zero gradient.
  const Tensor<T>& grad(Var v) {
    return grad_buffer(v);
  }

  // Accumulation buffer for backward closures; zero-initialized to the
  // value's shape on first touch.
  Tensor<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(Var v) const { return !node(v).grad.empty(); }

  // Runs the reverse sweep from a scalar loss. A tape holds the state of
  // exactly one backward pass; call reset() (or use a fresh tape) before
  // differentiating again.
  void backward(Var loss) {
    if (backward_done_) {
      throw ContractError("backward already ran on this tape; reset() before reusing it");
    }
    const Node& root = node(loss);
    if (root.value.numel() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_string(root.value.shape()));
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    grad_buffer(loss).fill(T{1});
    for (std::int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.back && !n.grad.empty()) n.back(*this, id);
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn back;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw ContractError("invalid tape handle " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw ContractError("invalid tape handle " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace tar
