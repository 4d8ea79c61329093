// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/metrics.hpp"

#include <cmath>

#include "cfmimo/errors.hpp"

namespace cfmimo {

Eigen::VectorXd sinr(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                     const PrecodingStack& stack, const SystemConfig& config) {
  const std::size_t aps = h_hat_restricted.size();
  if (stack.w.size() != aps || static_cast<std::size_t>(err_var.rows()) != aps) {
    throw InvalidInput("sinr: AP count mismatch");
  }
  const Eigen::Index users = err_var.cols();
  // gains(k, k') = sum_i h_{i,k}^H w_{i,k'}
  Eigen::MatrixXcd gains = Eigen::MatrixXcd::Zero(users, users);
  Eigen::VectorXd error_power = Eigen::VectorXd::Zero(users);
  for (std::size_t i = 0; i < aps; ++i) {
    const auto& h = h_hat_restricted[i];
    const auto& w = stack.w[i];
    if (h.rows() != w.rows() || h.cols() != users || w.cols() != users) {
      throw InvalidInput("sinr: channel/precoder shape mismatch");
    }
    gains.noalias() += h.adjoint() * w;
    const double ap_power = w.squaredNorm();
    error_power += ap_power * err_var.row(static_cast<Eigen::Index>(i)).transpose();
  }
  const double noise = config.noise_mw();
  Eigen::VectorXd out(users);
  for (Eigen::Index k = 0; k < users; ++k) {
    const double desired = std::norm(gains(k, k));
    double interference = 0.0;
    for (Eigen::Index kp = 0; kp < users; ++kp) {
      if (kp != k) interference += std::norm(gains(k, kp));
    }
    out(k) = desired / (interference + error_power(k) + noise);
  }
  return out;
}

SeReport spectral_efficiency(const Eigen::VectorXd& sinr, const SystemConfig& config) {
  SeReport report;
  report.sinr = sinr;
  report.se.resize(sinr.size());
  const double prelog = config.prelog();
  for (Eigen::Index k = 0; k < sinr.size(); ++k) {
    if (!(sinr(k) >= 0.0)) throw InvalidInput("negative or NaN SINR");
    report.se(k) = prelog * std::log2(1.0 + sinr(k));
  }
  report.sum_se = report.se.sum();
  return report;
}

SeReport evaluate_stack(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                        const PrecodingStack& stack, const SystemConfig& config) {
  return spectral_efficiency(sinr(h_hat_restricted, err_var, stack, config), config);
}

PowerReport check_power(const PrecodingStack& stack, const SystemConfig& config) {
  PowerReport report;
  const double budget = config.p_max_mw();
  for (const auto& w : stack.w) {
    const double p = w.squaredNorm();
    report.per_ap.push_back(p);
    if (p > budget * (1.0 + kPowerRelTol)) report.within_budget = false;
  }
  return report;
}

bool power_at_budget(const PowerReport& report, const SystemConfig& config, double rel_tol) {
  const double budget = config.p_max_mw();
  for (double p : report.per_ap) {
    if (std::abs(p - budget) > rel_tol * budget) return false;
  }
  return true;
}

}  // namespace cfmimo
