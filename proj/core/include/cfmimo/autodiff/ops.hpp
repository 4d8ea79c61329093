// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfmimo/autodiff/tape.hpp"

// Differentiable primitives. Each records its forward value on the tape and a
// closure that adds the exact vector-Jacobian product into its inputs'
// gradient buffers. Shape violations throw InvalidInput.
namespace cfmimo::ad {

// x [R, in] * w [in, out] + b [out] -> [R, out]
Var affine(Tape& tape, Var x, Var w, Var b);

Var leaky_relu(Tape& tape, Var x, double slope);
Var relu(Tape& tape, Var x);

// x [G*group, F]: row (g, k) becomes the elementwise max over rows (g, k') with
// k' != k. Gradient goes to the arg-max, ties to the lowest k'. A group of one
// node has no neighbors and yields zeros.
Var neighbor_max(Tape& tape, Var x, std::size_t group);

// [R, F1] ++ [R, F2] -> [R, F1 + F2]
Var concat_features(Tape& tape, Var a, Var b);

// x [B, Cin, H, W], filters [Cout, Cin, kh, kw], bias [Cout]; valid padding,
// stride 1 -> [B, Cout, H - kh + 1, W - kw + 1]
Var conv2d_valid(Tape& tape, Var x, Var filters, Var bias);

// Max pooling with a 2x2 window and stride 2 (floor). Along an axis of extent
// 1 the window shrinks to 1. Ties route to the first element in row-major
// window order.
Var max_pool2x2(Tape& tape, Var x);

Var reshape(Tape& tape, Var x, Shape shape);
// [B, ...] -> [B, prod(...)]
Var flatten(Tape& tape, Var x);

// Mean over the batch of -ln softmax(logits)[label]; labels are 0-based.
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

// x [G*group, F]: each block of `group` rows is divided by its Frobenius norm
// and multiplied by `scale`. A zero block throws NumericalError.
Var frobenius_normalize(Tape& tape, Var x, std::size_t group, double scale);

// Elementwise complex product of [..., 2] pairs.
Var complex_multiply(Tape& tape, Var a, Var b);

// h, w [G*group, 2M] with rows laid out as [re(1..M) | im(1..M)].
// Output [G, group, group, 2] holds h_{g,k}^H w_{g,k'}.
Var complex_inner(Tape& tape, Var h, Var w, std::size_t group);

// [..., 2] -> [...], re^2 + im^2
Var modulus_squared(Tape& tape, Var z);

// log2(1 + x); any x < 0 throws InvalidInput.
Var log2_1p(Tape& tape, Var x);

Var sum(Tape& tape, Var x);
Var mean(Tape& tape, Var x);
// [..., n] -> [...]
Var sum_last(Tape& tape, Var x);
// [..., n, n] -> [..., n]
Var diagonal(Tape& tape, Var x);
// [...] -> [..., n]
Var broadcast_last(Tape& tape, Var x, std::size_t n);

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var div(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var add_scalar(Tape& tape, Var x, double c);

// Row-wise softmax of a [B, J] tensor (no tape).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace cfmimo::ad
