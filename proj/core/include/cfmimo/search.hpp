// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/baselines.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/random.hpp"
#include "cfmimo/subsets.hpp"

namespace cfmimo {

// Maps restricted estimates and a subset choice to a precoding stack. Oracles
// must be deterministic; trained models are frozen while a search runs.
class PrecoderOracle {
 public:
  virtual ~PrecoderOracle() = default;

  // A local oracle computes W_i from AP i's own restricted estimate only, so
  // a search may refresh a single AP through precode_ap().
  virtual bool is_local() const = 0;

  virtual PrecodingStack precode(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                                 const std::vector<AntennaSubset>& subsets, const SystemConfig& config) const = 0;

  virtual Eigen::MatrixXcd precode_ap(int ap, const Eigen::MatrixXcd& h_hat_restricted,
                                      const Eigen::MatrixXd& err_var, const SystemConfig& config) const;
};

class BaselineOracle final : public PrecoderOracle {
 public:
  explicit BaselineOracle(PrecoderKind kind);

  bool is_local() const override;
  PrecodingStack precode(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                         const std::vector<AntennaSubset>& subsets, const SystemConfig& config) const override;
  Eigen::MatrixXcd precode_ap(int ap, const Eigen::MatrixXcd& h_hat_restricted, const Eigen::MatrixXd& err_var,
                              const SystemConfig& config) const override;

 private:
  PrecoderKind kind_;
};

struct SelectionResult {
  std::vector<AntennaSubset> subsets;
  double sum_se = 0.0;
  std::int64_t evaluations = 0;  // candidate evaluations, initialization excluded
  std::vector<double> r_max_trace;  // best value after initialization and each candidate
};

inline constexpr std::int64_t kDefaultExhaustiveCap = 100000;

std::vector<AntennaSubset> random_selection(const SystemConfig& config, RandomStream& rng);

std::vector<AntennaSubset> first_subsets(const SystemConfig& config);

// Segment-wise search: every AP starts at label 1, then AP 1..I in turn scans
// all C(N,M) labels with the other APs held at their retained subsets. A
// candidate is retained only on strict improvement of the global best, and at
// the end of its segment the AP is put back on its retained subset.
SelectionResult iterative_search(const ApMatrices& h_hat_full, const Eigen::MatrixXd& err_var,
                                 const PrecoderOracle& oracle, const SystemConfig& config);

// Global argmax over all C(N,M)^I joint labels; ties keep the earliest joint
// label in lexicographic order.
SelectionResult exhaustive_search(const ApMatrices& h_hat_full, const Eigen::MatrixXd& err_var,
                                  const PrecoderOracle& oracle, const SystemConfig& config,
                                  std::int64_t cap = kDefaultExhaustiveCap);

}  // namespace cfmimo
