#include "qadistill/numerics/tape.hpp"

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return std::as_const(*tape).grad(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::reference(const Tensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const Tensor& value, Tensor& grad_sink) {
  if (!grad_sink.same_shape(value)) {
    throw ShapeError(fmt::format("gradient sink {} does not match parameter {}", shape_string(grad_sink.shape()),
                                 shape_string(value.shape())));
  }
  Node n;
  n.external = &value;
  n.external_grad = &grad_sink;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (int in : inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size()) {
      throw std::logic_error("tape input recorded out of order");
    }
    n.requires_grad = n.requires_grad || node(in).requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(int id) const {
  const Node& n = node(id);
  return n.external != nullptr ? *n.external : n.value;
}

Tensor& Tape::grad(int id) {
  Node& n = node(id);
  if (n.external_grad != nullptr) return *n.external_grad;
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(int id) const {
  const Node& n = node(id);
  if (n.external_grad != nullptr) return *n.external_grad;
  if (!n.has_grad) throw std::logic_error(fmt::format("node {} has no gradient", id));
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.tape != this) throw std::logic_error("backward on a foreign variable");
  if (value(root.id).size() != 1) {
    throw ShapeError(fmt::format("backward needs a scalar root, got {}", shape_string(value(root.id).shape())));
  }
  last_visits_ = 0;
  if (!node(root.id).requires_grad) return;
  grad(root.id)[0] += seed;
  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || !n.backward || !n.has_grad) continue;
    n.backward(*this, id);
    ++last_visits_;
  }
}

}  // namespace qadistill
