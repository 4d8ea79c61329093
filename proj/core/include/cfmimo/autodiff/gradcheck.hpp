// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfmimo/autodiff/tape.hpp"

namespace cfmimo::ad {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Largest, over the inputs, of ||analytic - numeric||_inf / max(||analytic||_inf,
// ||numeric||_inf) where numeric is the central difference with step
// step * max(1, |x|). f must return a scalar.
double max_relative_gradient_error(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-5);

struct GradCheckResult {
  std::string name;
  double relative_error = 0.0;
};

// One check per primitive on random inputs; tensor-valued outputs are reduced
// through a fixed random projection.
std::vector<GradCheckResult> check_primitives(std::uint64_t seed);

}  // namespace cfmimo::ad
