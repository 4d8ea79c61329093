// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/autodiff/tape.hpp"

#include <sstream>

#include "cfmimo/errors.hpp"

namespace cfmimo::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, Buffer values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) {
    throw InvalidInput("tensor data length does not match shape " + shape_string(shape));
  }
}

Tensor::Tensor(Shape s, const std::vector<double>& values) : Tensor(std::move(s), Buffer(values.begin(), values.end())) {}

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {
  value.requires_grad = true;
}

void Parameter::zero_grad() { grad.assign(value.size(), 0.0); }

Tape::Tape(bool record_gradients) : record_(record_gradients) {}

Var Tape::constant(Tensor value) {
  value.requires_grad = false;
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor value) {
  value.requires_grad = record_;
  const bool needs = record_;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& parameter) {
  Tensor copy = parameter.value;
  copy.requires_grad = record_;
  nodes_.push_back(Node{std::move(copy), {}, record_, nullptr, record_ ? &parameter : nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).value; }

bool Tape::requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

const Buffer& Tape::grad(Var v) const { return nodes_.at(v.id).grad; }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (Var in : inputs) needs = needs || nodes_.at(in.id).needs_grad;
  }
  value.requires_grad = needs;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : nullptr, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Buffer& Tape::grad_buffer(Var v) {
  auto& node = nodes_.at(v.id);
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  auto& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw InvalidInput("backward needs a scalar loss, got shape " + shape_string(root.value.shape));
  }
  if (backward_done_) throw InvalidInput("backward already ran on this tape");
  backward_done_ = true;
  if (!root.needs_grad) return;
  grad_buffer(loss)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, id);
    if (node.parameter != nullptr) {
      auto& target = node.parameter->grad;
      if (target.size() != node.grad.size()) target.assign(node.grad.size(), 0.0);
      for (std::size_t j = 0; j < target.size(); ++j) target[j] += node.grad[j];
    }
  }
}

}  // namespace cfmimo::ad
