// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/channel.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

enum class PrecoderKind { MRT, DistributedMMSE, CentralizedMMSE, GNN };

std::string_view to_string(PrecoderKind kind);
PrecoderKind parse_precoder_kind(std::string_view name);

// P_{i,k} = P_max ||h_{i,k}|| / sum_j ||h_{i,j}||. An AP whose estimates are
// all zero splits P_max uniformly.
Eigen::MatrixXd heuristic_power(const ApMatrices& h_hat_restricted, const SystemConfig& config);

// w_{i,k} = sqrt(P_{i,k}) h_{i,k} / ||h_{i,k}||; zero estimate gives a zero column.
PrecodingStack mrt(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& powers);

enum class MmseScope { Local, Global };

// Unit-norm MMSE directions per (AP, user):
//   (sum_k' h_k' h_k'^H + sum_k' C_k' + (K noise / P_max) I)^-1 h_k
// Local scope builds one M x M system per AP; Global scope solves the stacked
// IM x IM system and splits the solution per AP. Each AP's piece is then
// normalized on its own, so heuristic powers land exactly on the per-AP budget.
ApMatrices mmse_directions(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                           const SystemConfig& config, MmseScope scope);

// Solves a Hermitian positive definite system; throws NumericalError when the
// residual exceeds 1e-8 relative to each right-hand side.
Eigen::MatrixXcd solve_checked(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& rhs);

PrecodingStack assemble_baseline(PrecoderKind kind, const ApMatrices& h_hat_restricted,
                                 const Eigen::MatrixXd& err_var, const std::vector<AntennaSubset>& subsets,
                                 const SystemConfig& config);

}  // namespace cfmimo
