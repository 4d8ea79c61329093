// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "cfmimo/autodiff/adam.hpp"
#include "cfmimo/autodiff/gradcheck.hpp"
#include "cfmimo/autodiff/ops.hpp"
#include "cfmimo/autodiff/tape.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/random.hpp"

using namespace cfmimo;
using namespace cfmimo::ad;

namespace {

Tensor random_tensor(Shape shape, RandomStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), InvalidInput);
}

TEST(Ops, LeakyReluValueAndSlope) {
  Tape tape;
  const Var x = tape.input(Tensor({2}, std::vector<double>{-2.0, 3.0}));
  const Var y = leaky_relu(tape, x, 0.1);
  EXPECT_DOUBLE_EQ(tape.value(y)[0], -0.2);
  EXPECT_DOUBLE_EQ(tape.value(y)[1], 3.0);
  tape.backward(sum(tape, y));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 0.1);
  EXPECT_DOUBLE_EQ(tape.grad(x)[1], 1.0);
}

TEST(Ops, CrossEntropyAtZeroLogits) {
  for (int j : {2, 6, 56}) {
    Tape tape;
    const Var logits = tape.input(Tensor({3, static_cast<std::size_t>(j)}, 0.0));
    const std::vector<int> labels{0, j - 1, j / 2};
    const Var loss = softmax_cross_entropy(tape, logits, labels);
    EXPECT_NEAR(tape.value(loss)[0], std::log(j), 1e-14);
    tape.backward(loss);
    const auto& g = tape.grad(logits);
    for (int b = 0; b < 3; ++b) {
      for (int c = 0; c < j; ++c) {
        const double expected = (1.0 / j - (c == labels[b] ? 1.0 : 0.0)) / 3.0;
        EXPECT_NEAR(g[b * j + c], expected, 1e-15);
      }
    }
  }
}

TEST(Ops, SumAndSquaredNormGradients) {
  RandomStream rng(3);
  Tape tape;
  const Tensor v = random_tensor({4, 3}, rng);
  const Var x = tape.input(v);
  const Var s = add(tape, sum(tape, x), sum(tape, mul(tape, x, x)));
  tape.backward(s);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(tape.grad(x)[i], 1.0 + 2.0 * v[i], 1e-15);
}

TEST(Ops, AffineMatchesMatrixProduct) {
  RandomStream rng(4);
  const Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
  Tape tape(false);
  const auto& y = tape.value(affine(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) {
      double acc = b[c];
      for (int k = 0; k < 4; ++k) acc += x[r * 4 + k] * w[k * 2 + c];
      EXPECT_NEAR(y[r * 2 + c], acc, 1e-15);
    }
  }
  Tape bad;
  EXPECT_THROW(affine(bad, bad.constant(x), bad.constant(random_tensor({3, 2}, rng)), bad.constant(b)),
               InvalidInput);
}

TEST(Ops, NeighborMaxExcludesSelf) {
  Tape tape;
  // two groups of three nodes, one feature
  const Var x = tape.input(Tensor({6, 1}, std::vector<double>{1.0, 5.0, 3.0, -1.0, -4.0, -2.0}));
  const Var y = neighbor_max(tape, x, 3);
  const std::vector<double> expected{5.0, 3.0, 5.0, -2.0, -1.0, -1.0};
  for (int r = 0; r < 6; ++r) EXPECT_EQ(tape.value(y)[r], expected[r]);
  tape.backward(sum(tape, y));
  const std::vector<double> counts{0.0, 2.0, 1.0, 2.0, 0.0, 1.0};
  for (int r = 0; r < 6; ++r) EXPECT_EQ(tape.grad(x)[r], counts[r]);

  Tape single;
  const Var lone = neighbor_max(single, single.constant(Tensor({2, 3}, 7.0)), 1);
  for (double v : single.value(lone).data) EXPECT_EQ(v, 0.0);
}

TEST(Ops, ConvolutionMatchesDirectSum) {
  RandomStream rng(5);
  const Tensor x = random_tensor({2, 2, 5, 4}, rng), f = random_tensor({3, 2, 3, 2}, rng),
               b = random_tensor({3}, rng);
  Tape tape(false);
  const auto& y = tape.value(conv2d_valid(tape, tape.constant(x), tape.constant(f), tape.constant(b)));
  ASSERT_EQ(y.shape, (Shape{2, 3, 3, 3}));
  for (int n = 0; n < 2; ++n) {
    for (int o = 0; o < 3; ++o) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          double acc = b[o];
          for (int i = 0; i < 2; ++i) {
            for (int u = 0; u < 3; ++u) {
              for (int v = 0; v < 2; ++v) acc += x[((n * 2 + i) * 5 + r + u) * 4 + c + v] * f[((o * 2 + i) * 3 + u) * 2 + v];
            }
          }
          EXPECT_NEAR(y[((n * 3 + o) * 3 + r) * 3 + c], acc, 1e-14);
        }
      }
    }
  }
}

TEST(Ops, MaxPoolClampsUnitAxis) {
  Tape tape;
  const Var x = tape.input(Tensor({1, 1, 5, 1}, std::vector<double>{1.0, 4.0, 4.0, 2.0, 9.0}));
  const Var y = max_pool2x2(tape, x);
  ASSERT_EQ(tape.shape(y), (Shape{1, 1, 2, 1}));
  EXPECT_EQ(tape.value(y)[0], 4.0);
  EXPECT_EQ(tape.value(y)[1], 4.0);
  tape.backward(sum(tape, y));
  EXPECT_EQ(tape.grad(x), (ad::Buffer{0.0, 1.0, 1.0, 0.0, 0.0}));
}

TEST(Ops, ComplexInnerMatchesStdComplex) {
  RandomStream rng(6);
  const std::size_t group = 3, m = 2;
  const Tensor h = random_tensor({2 * group, 2 * m}, rng), w = random_tensor({2 * group, 2 * m}, rng);
  Tape tape(false);
  const auto& z = tape.value(complex_inner(tape, tape.constant(h), tape.constant(w), group));
  ASSERT_EQ(z.shape, (Shape{2, group, group, 2}));
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t k = 0; k < group; ++k) {
      for (std::size_t kp = 0; kp < group; ++kp) {
        std::complex<double> acc = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
          const std::size_t hr = (g * group + k) * 2 * m, wr = (g * group + kp) * 2 * m;
          acc += std::conj(std::complex<double>(h[hr + a], h[hr + m + a])) *
                 std::complex<double>(w[wr + a], w[wr + m + a]);
        }
        const std::size_t at = ((g * group + k) * group + kp) * 2;
        EXPECT_NEAR(z[at], acc.real(), 1e-15);
        EXPECT_NEAR(z[at + 1], acc.imag(), 1e-15);
      }
    }
  }
}

TEST(Ops, FrobeniusNormalizeAndDomainErrors) {
  Tape tape;
  const Var x = tape.constant(Tensor({2, 2}, std::vector<double>{3.0, 0.0, 0.0, 4.0}));
  const auto& y = tape.value(frobenius_normalize(tape, x, 2, 10.0));
  EXPECT_NEAR(y[0], 6.0, 1e-15);
  EXPECT_NEAR(y[3], 8.0, 1e-15);
  EXPECT_THROW(frobenius_normalize(tape, tape.constant(Tensor({2, 2}, 0.0)), 2, 1.0), NumericalError);
  EXPECT_THROW(log2_1p(tape, tape.constant(Tensor({1}, -0.5))), InvalidInput);
  EXPECT_NEAR(tape.value(log2_1p(tape, tape.constant(Tensor({1}, 3.0))))[0], 2.0, 1e-15);
}

TEST(Tape, BackwardNeedsScalarAndRunsOnce) {
  Tape tape;
  const Var x = tape.input(Tensor({3}, 1.0));
  EXPECT_THROW(tape.backward(scale(tape, x, 2.0)), InvalidInput);
  const Var s = sum(tape, x);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), InvalidInput);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  const Var c = tape.constant(Tensor({2}, 1.0));
  const Var x = tape.input(Tensor({2}, 2.0));
  tape.backward(sum(tape, mul(tape, c, x)));
  EXPECT_FALSE(tape.requires_grad(c));
  EXPECT_TRUE(tape.grad(c).empty());
  EXPECT_EQ(tape.grad(x), (ad::Buffer{1.0, 1.0}));
}

TEST(Tape, ParameterGradientsAccumulate) {
  Parameter p("p", Tensor({2}, std::vector<double>{1.0, -1.0}));
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    tape.backward(sum(tape, scale(tape, tape.param(p), 3.0)));
  }
  EXPECT_EQ(p.grad, (ad::Buffer{6.0, 6.0}));
  p.zero_grad();
  EXPECT_EQ(p.grad, (ad::Buffer{0.0, 0.0}));
}

TEST(GradCheck, AllPrimitivesAgreeWithFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto results = check_primitives(seed);
    EXPECT_GE(results.size(), 20u);
    for (const auto& r : results) EXPECT_LT(r.relative_error, 1e-6) << r.name << " seed " << seed;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  // d/dx of x^2 recorded with a deliberately wrong backward (x instead of 2x)
  const ScalarFn wrong = [](Tape& t, const std::vector<Var>& v) {
    const Tensor& x = t.value(v[0]);
    Tensor y({1}, x[0] * x[0]);
    return t.record(std::move(y), {v[0]}, [in = v[0]](Tape& tape, std::uint32_t self) {
      tape.grad_buffer(in)[0] += tape.grad_of(self)[0] * tape.value(in)[0];
    });
  };
  EXPECT_GT(max_relative_gradient_error(wrong, {Tensor({1}, 0.7)}), 0.4);
}

TEST(Adam, ScheduleSteps) {
  LearningRateSchedule s;
  EXPECT_DOUBLE_EQ(s.at(0), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(99), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(100), 1e-3 * 0.995);
  EXPECT_NEAR(s.at(250), 1e-3 * 0.995 * 0.995, 1e-18);
}

TEST(Adam, LearningRateAfterHundredSteps) {
  Parameter p("p", Tensor({1}, 0.0));
  Adam opt({&p});
  for (int t = 0; t < 100; ++t) {
    opt.zero_grad();
    p.grad[0] = 1.0;
    opt.step();
  }
  EXPECT_DOUBLE_EQ(opt.learning_rate(), 0.001 * 0.995);
  EXPECT_EQ(opt.state().steps, 100);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  const auto before = p.value.data;
  Adam opt({&p});
  for (int t = 0; t < 10; ++t) {
    opt.zero_grad();
    opt.step();
  }
  EXPECT_EQ(p.value.data, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("p", Tensor({2}, std::vector<double>{0.0, 0.0}));
  Adam opt({&p});
  p.grad = {4.0, -0.01};
  opt.step();
  EXPECT_NEAR(p.value[0], -1e-3, 1e-9);
  EXPECT_NEAR(p.value[1], 1e-3, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  Parameter p("p", Tensor({2}, std::vector<double>{0.0, 0.0}));
  AdamOptions options;
  options.schedule = {0.05, 1.0, 100};
  Adam opt({&p}, options);
  for (int t = 0; t < 2000; ++t) {
    opt.zero_grad();
    Tape tape;
    const Var x = tape.param(p);
    const Var target = tape.constant(Tensor({2}, std::vector<double>{3.0, -1.5}));
    const Var d = sub(tape, x, target);
    tape.backward(sum(tape, mul(tape, d, d)));
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 3.0, 1e-3);
  EXPECT_NEAR(p.value[1], -1.5, 1e-3);
}
