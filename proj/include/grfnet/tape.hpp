#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "grfnet/tensor.hpp"

namespace grfnet {

// Handle into a Tape. Plain index; creation order is the topological order.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Recorded computation graph for one forward pass (reverse-mode autodiff).
//
// Ops append nodes via push(); backward() walks the node list in reverse
// creation order and lets each node scatter its output gradient into its
// inputs. Gradients accumulate additively and the walk order is fixed, so
// repeated runs over identical inputs are bit-identical. A Tape is confined
// to a single thread.
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, std::int32_t)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first use
    bool has_grad = false;
    bool needs_grad = false;
    BackFn back;  // empty for leaves
  };

  Var leaf(Tensor<T> value, bool needs_grad = true) {
    return emplace(std::move(value), needs_grad, BackFn{});
  }

  Var push(Tensor<T> value, const std::vector<Var>& inputs, BackFn back) {
    bool ng = false;
    for (Var v : inputs) ng = ng || node(v).needs_grad;
    return emplace(std::move(value), ng, ng ? std::move(back) : BackFn{});
  }

  const Tensor<T>& val(Var v) const { return node(v).value; }

  // Gradient buffer of v, zero-initialized on first access.
  Tensor<T>& grad(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(n.value.shape);
      n.has_grad = true;
    }
    return n.grad;
  }
  bool has_grad(Var v) const { return node(v).has_grad; }
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  // Reverse sweep from a scalar loss node.
  void backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss node is not scalar");
    grad(loss).data[0] = T(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.has_grad || !n.back) continue;
      n.back(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  Node& node(Var v) {
    if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
      throw std::invalid_argument("Tape: detached or invalid node handle");
    return nodes_[static_cast<size_t>(v.id)];
  }
  const Node& node(Var v) const {
    return const_cast<Tape*>(this)->node(v);
  }

 private:
  Var emplace(Tensor<T> value, bool needs_grad, BackFn back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

}  // namespace grfnet
