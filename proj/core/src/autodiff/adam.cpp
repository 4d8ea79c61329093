// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/autodiff/adam.hpp"

#include <cmath>

#include "cfmimo/errors.hpp"

namespace cfmimo::ad {

double LearningRateSchedule::at(std::int64_t completed_steps) const {
  return initial * std::pow(decay, static_cast<double>(completed_steps / decay_every));
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    state_.first_moment.emplace_back(p->value.size(), 0.0);
    state_.second_moment.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  const double lr = learning_rate();
  ++state_.steps;
  const double t = static_cast<double>(state_.steps);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& param = *params_[p];
    if (param.grad.size() != param.value.size()) throw InvalidInput("adam: gradient shape mismatch");
    auto& m = state_.first_moment[p];
    auto& v = state_.second_moment[p];
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace cfmimo::ad
