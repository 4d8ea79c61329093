// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "cfmimo/autodiff/tensor.hpp"

namespace cfmimo::ad {

// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

// Records primitive applications in creation order, which is a topological
// order of the computation. backward() walks the record once, in reverse.
class Tape {
 public:
  // With record_gradients == false every value is treated as a constant;
  // used for inference.
  explicit Tape(bool record_gradients = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is kept on the tape (read it back with grad()).
  Var input(Tensor value);
  // Leaf bound to a parameter; backward() adds into parameter.grad.
  Var param(Parameter& parameter);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape; }
  bool requires_grad(Var v) const;
  // Gradient of the last backward() loss w.r.t. v; empty if none reached it.
  const Buffer& grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a scalar.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  // --- primitive authoring interface ---
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  // Appends a node. It needs a gradient iff any input does; otherwise fn is
  // dropped.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  // Mutable gradient buffer of v, allocated zero-filled on first use.
  Buffer& grad_buffer(Var v);
  const Buffer& grad_of(std::uint32_t id) const { return nodes_[id].grad; }
  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Tensor value;
    Buffer grad;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter* parameter = nullptr;
  };

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

}  // namespace cfmimo::ad
