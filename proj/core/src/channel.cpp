// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/channel.hpp"

#include <cmath>
#include <string>

#include "cfmimo/errors.hpp"

namespace cfmimo {

ApMatrices draw_channels(const LargeScaleGains& beta, const SystemConfig& config, RandomStream& rng) {
  ApMatrices h(config.I, Eigen::MatrixXcd(config.N, config.K));
  for (int i = 0; i < config.I; ++i) {
    for (int k = 0; k < config.K; ++k) {
      for (int n = 0; n < config.N; ++n) h[i](n, k) = rng.complex_normal(beta(i, k));
    }
  }
  return h;
}

PilotObservation despread_pilots(const ApMatrices& h, const SystemConfig& config, RandomStream& rng) {
  if (config.tau_p < config.K) {
    throw UnsupportedConfiguration("despread_pilots: tau_p < K (pilot contamination) is not modeled");
  }
  const double gain = std::sqrt(config.p_ul_mw()) * config.tau_p;
  const double noise_var = config.noise_mw() * config.tau_p;
  PilotObservation obs;
  obs.y_p.reserve(h.size());
  for (const auto& hi : h) {
    Eigen::MatrixXcd y(hi.rows(), hi.cols());
    for (Eigen::Index k = 0; k < hi.cols(); ++k) {
      for (Eigen::Index n = 0; n < hi.rows(); ++n) {
        y(n, k) = gain * hi(n, k) + rng.complex_normal(noise_var);
      }
    }
    obs.y_p.push_back(std::move(y));
  }
  return obs;
}

double lmmse_error_variance(double beta, double p_ul_mw, int tau_p, double noise_mw) {
  const double snr_term = p_ul_mw * tau_p * beta;
  return beta - snr_term * beta / (snr_term + noise_mw);
}

Estimate lmmse_estimate(const PilotObservation& obs, const LargeScaleGains& beta, const SystemConfig& config) {
  const double p_ul = config.p_ul_mw();
  const double noise = config.noise_mw();
  const double sqrt_p = std::sqrt(p_ul);
  Estimate est;
  est.err_var.resize(beta.rows(), beta.cols());
  est.h_hat.reserve(obs.y_p.size());
  for (std::size_t i = 0; i < obs.y_p.size(); ++i) {
    const auto& y = obs.y_p[i];
    Eigen::MatrixXcd hh(y.rows(), y.cols());
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      const double b = beta(static_cast<Eigen::Index>(i), k);
      const double scale = sqrt_p * b / (p_ul * config.tau_p * b + noise);
      hh.col(k) = scale * y.col(k);
      est.err_var(static_cast<Eigen::Index>(i), k) = lmmse_error_variance(b, p_ul, config.tau_p, noise);
    }
    est.h_hat.push_back(std::move(hh));
  }
  return est;
}

Eigen::MatrixXcd restrict_rows(const Eigen::MatrixXcd& full, const AntennaSubset& subset) {
  const auto n = static_cast<int>(full.rows());
  if (subset.n != n || subset.m != static_cast<int>(subset.members.size()) || subset.m < 1) {
    throw InvalidInput("subset does not match the array size");
  }
  Eigen::MatrixXcd out(subset.m, full.cols());
  int prev = 0;
  for (int r = 0; r < subset.m; ++r) {
    const int a = subset.members[r];
    if (a <= prev || a > n) throw InvalidInput("malformed antenna subset");
    out.row(r) = full.row(a - 1);
    prev = a;
  }
  return out;
}

ApMatrices restrict_to_subset(const ApMatrices& full, const std::vector<AntennaSubset>& subsets) {
  if (full.size() != subsets.size()) {
    throw InvalidInput("need one subset per AP (" + std::to_string(full.size()) + ")");
  }
  ApMatrices out;
  out.reserve(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) out.push_back(restrict_rows(full[i], subsets[i]));
  return out;
}

Realization draw_realization(const SystemConfig& config, RandomStream& rng) {
  Realization r;
  r.geometry = place_network(config, rng);
  r.beta = large_scale_gains(r.geometry, config);
  r.channels.h = draw_channels(r.beta, config, rng);
  const auto obs = despread_pilots(r.channels.h, config, rng);
  auto est = lmmse_estimate(obs, r.beta, config);
  r.channels.h_hat = std::move(est.h_hat);
  r.channels.err_var = std::move(est.err_var);
  return r;
}

}  // namespace cfmimo
