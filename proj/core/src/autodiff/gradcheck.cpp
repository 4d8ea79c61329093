// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cfmimo/autodiff/ops.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/random.hpp"

namespace cfmimo::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var out = f(tape, vars);
  if (tape.value(out).size() != 1) throw InvalidInput("gradient check needs a scalar function");
  return tape.value(out)[0];
}

Tensor random_tensor(Shape shape, RandomStream& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Reduces a tensor-valued primitive to a scalar through fixed random weights.
ScalarFn projected(std::function<Var(Tape&, const std::vector<Var>&)> op, Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](Tape& tape, const std::vector<Var>& in) {
    const Var out = op(tape, in);
    return sum(tape, mul(tape, out, tape.constant(weights)));
  };
}

}  // namespace

double max_relative_gradient_error(const ScalarFn& f, const std::vector<Tensor>& inputs, double step) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  const Var out = f(tape, vars);
  tape.backward(out);

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& analytic = tape.grad(vars[i]);
    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x = inputs[i][j];
      const double h = step * std::max(1.0, std::abs(x));
      probe[i][j] = x + h;
      const double up = evaluate(f, probe);
      probe[i][j] = x - h;
      const double down = evaluate(f, probe);
      probe[i][j] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[j];
      diff = std::max(diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    if (scale > 0.0) worst = std::max(worst, diff / scale);
  }
  return worst;
}

std::vector<GradCheckResult> check_primitives(std::uint64_t seed) {
  RandomStream rng(seed);
  auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi); };
  std::vector<GradCheckResult> out;
  auto run = [&](std::string name, Shape out_shape, std::function<Var(Tape&, const std::vector<Var>&)> op,
                 std::vector<Tensor> inputs) {
    const ScalarFn f = projected(std::move(op), r(std::move(out_shape)));
    out.push_back({std::move(name), max_relative_gradient_error(f, inputs)});
  };

  run("affine", {5, 3}, [](Tape& t, const std::vector<Var>& v) { return affine(t, v[0], v[1], v[2]); },
      {r({5, 4}), r({4, 3}), r({3})});
  run("leaky_relu", {4, 6}, [](Tape& t, const std::vector<Var>& v) { return leaky_relu(t, v[0], 0.1); },
      {r({4, 6})});
  run("relu", {4, 6}, [](Tape& t, const std::vector<Var>& v) { return relu(t, v[0]); }, {r({4, 6})});
  run("neighbor_max", {6, 5}, [](Tape& t, const std::vector<Var>& v) { return neighbor_max(t, v[0], 3); },
      {r({6, 5})});
  run("concat_features", {3, 7},
      [](Tape& t, const std::vector<Var>& v) { return concat_features(t, v[0], v[1]); }, {r({3, 4}), r({3, 3})});
  run("conv2d_valid", {2, 3, 4, 2},
      [](Tape& t, const std::vector<Var>& v) { return conv2d_valid(t, v[0], v[1], v[2]); },
      {r({2, 2, 6, 3}), r({3, 2, 3, 2}), r({3})});
  run("max_pool2x2", {2, 3, 3, 1}, [](Tape& t, const std::vector<Var>& v) { return max_pool2x2(t, v[0]); },
      {r({2, 3, 7, 1})});
  run("max_pool2x2_square", {1, 2, 2, 2}, [](Tape& t, const std::vector<Var>& v) { return max_pool2x2(t, v[0]); },
      {r({1, 2, 4, 5})});
  run("reshape", {6, 2}, [](Tape& t, const std::vector<Var>& v) { return reshape(t, v[0], {6, 2}); },
      {r({3, 4})});
  run("flatten", {2, 12}, [](Tape& t, const std::vector<Var>& v) { return flatten(t, v[0]); }, {r({2, 3, 4})});
  {
    const std::vector<int> labels = {2, 0, 4, 1};
    const ScalarFn f = [labels](Tape& t, const std::vector<Var>& v) {
      return softmax_cross_entropy(t, v[0], labels);
    };
    out.push_back({"softmax_cross_entropy", max_relative_gradient_error(f, {r({4, 5}, -2.0, 2.0)})});
  }
  run("frobenius_normalize", {6, 4},
      [](Tape& t, const std::vector<Var>& v) { return frobenius_normalize(t, v[0], 3, 2.5); }, {r({6, 4})});
  run("complex_multiply", {3, 2},
      [](Tape& t, const std::vector<Var>& v) { return complex_multiply(t, v[0], v[1]); }, {r({3, 2}), r({3, 2})});
  run("complex_inner", {2, 3, 3, 2},
      [](Tape& t, const std::vector<Var>& v) { return complex_inner(t, v[0], v[1], 3); }, {r({6, 4}), r({6, 4})});
  run("modulus_squared", {4}, [](Tape& t, const std::vector<Var>& v) { return modulus_squared(t, v[0]); },
      {r({4, 2})});
  run("log2_1p", {5}, [](Tape& t, const std::vector<Var>& v) { return log2_1p(t, v[0]); }, {r({5}, 0.1, 3.0)});
  {
    const ScalarFn f = [](Tape& t, const std::vector<Var>& v) { return sum(t, v[0]); };
    out.push_back({"sum", max_relative_gradient_error(f, {r({3, 4})})});
    const ScalarFn g = [](Tape& t, const std::vector<Var>& v) { return mean(t, v[0]); };
    out.push_back({"mean", max_relative_gradient_error(g, {r({3, 4})})});
  }
  run("sum_last", {2, 3}, [](Tape& t, const std::vector<Var>& v) { return sum_last(t, v[0]); }, {r({2, 3, 4})});
  run("diagonal", {2, 3}, [](Tape& t, const std::vector<Var>& v) { return diagonal(t, v[0]); }, {r({2, 3, 3})});
  run("broadcast_last", {2, 3, 4},
      [](Tape& t, const std::vector<Var>& v) { return broadcast_last(t, v[0], 4); }, {r({2, 3})});
  run("add", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); }, {r({3, 3}), r({3, 3})});
  run("sub", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return sub(t, v[0], v[1]); }, {r({3, 3}), r({3, 3})});
  run("mul", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return mul(t, v[0], v[1]); }, {r({3, 3}), r({3, 3})});
  run("div", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return div(t, v[0], v[1]); },
      {r({3, 3}), r({3, 3}, 0.5, 2.0)});
  run("scale", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return scale(t, v[0], -1.7); }, {r({3, 3})});
  run("add_scalar", {3, 3}, [](Tape& t, const std::vector<Var>& v) { return add_scalar(t, v[0], 0.3); },
      {r({3, 3})});
  return out;
}

}  // namespace cfmimo::ad
