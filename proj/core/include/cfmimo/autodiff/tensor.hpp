// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cfmimo::ad {

using Shape = std::vector<std::size_t>;

// Kernel-aligned storage. Vectorized reductions peel a different number of
// leading elements depending on the start address, so unaligned buffers would
// make results vary from run to run in the last bits.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Complex data is carried either as a
// trailing axis of size 2 (re, im) or, for precoder/channel rows, as a
// [re block | im block] feature layout.
struct Tensor {
  Shape shape;
  Buffer data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, Buffer values);
  Tensor(Shape s, const std::vector<double>& values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

// Trainable tensor that outlives any tape. backward() accumulates into grad.
struct Parameter {
  std::string name;
  Tensor value;
  Buffer grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);

  void zero_grad();
};

}  // namespace cfmimo::ad
