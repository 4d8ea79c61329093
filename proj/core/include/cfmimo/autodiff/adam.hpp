// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cfmimo/autodiff/tensor.hpp"

namespace cfmimo::ad {

// Step-decay schedule: lr = initial * decay^floor(steps / decay_every).
struct LearningRateSchedule {
  double initial = 1e-3;
  double decay = 0.995;
  std::int64_t decay_every = 100;

  double at(std::int64_t completed_steps) const;
};

struct AdamOptions {
  LearningRateSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t steps = 0;
};

// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, AdamOptions options = {});

  // Applies one update from the parameters' accumulated gradients.
  void step();
  void zero_grad();

  double learning_rate() const { return options_.schedule.at(state_.steps); }
  const AdamState& state() const { return state_; }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace cfmimo::ad
