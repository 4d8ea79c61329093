// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cfmimo/channel.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/subsets.hpp"

namespace cfmimo {

// Per-AP M x K precoding matrices W_i (column k is w_{i,k}) together with the
// subsets they were designed for.
struct PrecodingStack {
  ApMatrices w;
  std::vector<AntennaSubset> subsets;
};

struct SeReport {
  Eigen::VectorXd sinr;
  Eigen::VectorXd se;  // bit/s/Hz
  double sum_se = 0.0;
};

struct PowerReport {
  std::vector<double> per_ap;  // sum_k ||w_{i,k}||^2, mW
  bool within_budget = true;
};

inline constexpr double kPowerRelTol = 1e-9;

// Effective SINR with estimation error treated as noise. The error term is
// evaluated as sum_i c_{i,k} ||W_i||_F^2 without forming the block-diagonal
// covariance.
Eigen::VectorXd sinr(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                     const PrecodingStack& stack, const SystemConfig& config);

SeReport spectral_efficiency(const Eigen::VectorXd& sinr, const SystemConfig& config);

SeReport evaluate_stack(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                        const PrecodingStack& stack, const SystemConfig& config);

PowerReport check_power(const PrecodingStack& stack, const SystemConfig& config);

// True when every AP transmits exactly P_max (relative tolerance).
bool power_at_budget(const PowerReport& report, const SystemConfig& config, double rel_tol = kPowerRelTol);

}  // namespace cfmimo
