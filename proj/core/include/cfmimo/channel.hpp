// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cfmimo/random.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/subsets.hpp"

namespace cfmimo {

// One antennas x users complex matrix per AP: element (n, k) of entry i is
// h_{i,k} at antenna n. The antenna dimension is N for full-array data and M
// after restriction.
using ApMatrices = std::vector<Eigen::MatrixXcd>;

struct ChannelSet {
  ApMatrices h;             // true channels
  ApMatrices h_hat;         // LMMSE estimates
  Eigen::MatrixXd err_var;  // I x K; per-antenna error variance c_{i,k}
};

// y_{i,k}^p after correlating with user k's pilot, stored like ApMatrices.
struct PilotObservation {
  ApMatrices y_p;
};

struct Estimate {
  ApMatrices h_hat;
  Eigen::MatrixXd err_var;
};

// Everything drawn for a single coherence block.
struct Realization {
  Geometry geometry;
  LargeScaleGains beta;
  ChannelSet channels;
};

ApMatrices draw_channels(const LargeScaleGains& beta, const SystemConfig& config, RandomStream& rng);

PilotObservation despread_pilots(const ApMatrices& h, const SystemConfig& config, RandomStream& rng);

Estimate lmmse_estimate(const PilotObservation& obs, const LargeScaleGains& beta, const SystemConfig& config);

// c = beta - P_ul tau_p beta^2 / (P_ul tau_p beta + noise).
double lmmse_error_variance(double beta, double p_ul_mw, int tau_p, double noise_mw);

// Rows of each AP matrix picked in subset order.
ApMatrices restrict_to_subset(const ApMatrices& full, const std::vector<AntennaSubset>& subsets);
Eigen::MatrixXcd restrict_rows(const Eigen::MatrixXcd& full, const AntennaSubset& subset);

Realization draw_realization(const SystemConfig& config, RandomStream& rng);

}  // namespace cfmimo
