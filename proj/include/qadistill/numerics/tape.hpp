#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "qadistill/numerics/tensor.hpp"

namespace qadistill {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape that produced it is alive.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Records differentiable operations in execution order. Inputs are always
// recorded before the node that consumes them, so a single reverse sweep
// visits every node exactly once.
//
// Confined to one thread. Parameter nodes refer to caller-owned storage that
// must outlive the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Value without gradient tracking.
  Var constant(Tensor value);
  // Caller-owned value without gradient tracking; must outlive the tape.
  Var reference(const Tensor& value);
  // Owned value whose gradient is accumulated on the tape.
  Var leaf(Tensor value);
  // Caller-owned value; backward adds into `grad_sink`, which must have the
  // same shape as `value`.
  Var parameter(const Tensor& value, Tensor& grad_sink);

  Var record(Tensor value, std::vector<int> inputs, Backward backward);

  const Tensor& value(int id) const;
  // Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(int id);
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Seeds d(root)/d(root) = seed (root must hold one value) and propagates
  // adjoints to every node recorded before it.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  // Number of backward closures executed by the last backward() call.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* external_grad = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    Backward backward;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::deque<Node> nodes_;  // stable references across push_back
  std::size_t last_visits_ = 0;
};

}  // namespace qadistill
