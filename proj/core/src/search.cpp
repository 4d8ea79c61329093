// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/search.hpp"

#include <string>

#include "cfmimo/errors.hpp"

namespace cfmimo {

Eigen::MatrixXcd PrecoderOracle::precode_ap(int, const Eigen::MatrixXcd&, const Eigen::MatrixXd&,
                                            const SystemConfig&) const {
  throw InvalidInput("precode_ap is only defined for local oracles");
}

BaselineOracle::BaselineOracle(PrecoderKind kind) : kind_(kind) {
  if (kind == PrecoderKind::GNN) throw InvalidInput("BaselineOracle cannot wrap the GNN precoder");
}

bool BaselineOracle::is_local() const { return kind_ != PrecoderKind::CentralizedMMSE; }

PrecodingStack BaselineOracle::precode(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                                       const std::vector<AntennaSubset>& subsets,
                                       const SystemConfig& config) const {
  return assemble_baseline(kind_, h_hat_restricted, err_var, subsets, config);
}

Eigen::MatrixXcd BaselineOracle::precode_ap(int ap, const Eigen::MatrixXcd& h_hat_restricted,
                                            const Eigen::MatrixXd& err_var, const SystemConfig& config) const {
  if (!is_local()) return PrecoderOracle::precode_ap(ap, h_hat_restricted, err_var, config);
  const Eigen::MatrixXd local_err = err_var.row(ap);
  const ApMatrices single{h_hat_restricted};
  auto stack = assemble_baseline(kind_, single, local_err, {}, config);
  return std::move(stack.w[0]);
}

std::vector<AntennaSubset> random_selection(const SystemConfig& config, RandomStream& rng) {
  const std::int64_t classes = count_subsets(config.N, config.M);
  std::vector<AntennaSubset> out;
  out.reserve(config.I);
  for (int i = 0; i < config.I; ++i) {
    out.push_back(make_subset(rng.uniform_int(1, classes), config.N, config.M));
  }
  return out;
}

std::vector<AntennaSubset> first_subsets(const SystemConfig& config) {
  return std::vector<AntennaSubset>(config.I, make_subset(1, config.N, config.M));
}

SelectionResult iterative_search(const ApMatrices& h_hat_full, const Eigen::MatrixXd& err_var,
                                 const PrecoderOracle& oracle, const SystemConfig& config) {
  const std::int64_t classes = count_subsets(config.N, config.M);
  const bool local = oracle.is_local();

  std::vector<AntennaSubset> subsets = first_subsets(config);
  ApMatrices restricted = restrict_to_subset(h_hat_full, subsets);
  PrecodingStack stack = oracle.precode(restricted, err_var, subsets, config);

  SelectionResult result;
  double r_max = evaluate_stack(restricted, err_var, stack, config).sum_se;
  result.r_max_trace.push_back(r_max);

  for (int i = 0; i < config.I; ++i) {
    AntennaSubset retained = subsets[i];
    Eigen::MatrixXcd retained_restricted = restricted[i];
    PrecodingStack retained_stack = stack;

    for (std::int64_t j = 1; j <= classes; ++j) {
      subsets[i] = make_subset(j, config.N, config.M);
      restricted[i] = restrict_rows(h_hat_full[i], subsets[i]);
      if (local) {
        stack.w[i] = oracle.precode_ap(i, restricted[i], err_var, config);
        stack.subsets = subsets;
      } else {
        stack = oracle.precode(restricted, err_var, subsets, config);
      }
      const double value = evaluate_stack(restricted, err_var, stack, config).sum_se;
      ++result.evaluations;
      if (value > r_max) {
        r_max = value;
        retained = subsets[i];
        retained_restricted = restricted[i];
        retained_stack = stack;
      }
      result.r_max_trace.push_back(r_max);
    }

    subsets[i] = retained;
    restricted[i] = std::move(retained_restricted);
    stack = std::move(retained_stack);
  }

  result.subsets = std::move(subsets);
  result.sum_se = r_max;
  return result;
}

SelectionResult exhaustive_search(const ApMatrices& h_hat_full, const Eigen::MatrixXd& err_var,
                                  const PrecoderOracle& oracle, const SystemConfig& config, std::int64_t cap) {
  const std::int64_t classes = count_subsets(config.N, config.M);
  std::int64_t total = 0;
  try {
    total = count_global_subsets(config.N, config.M, config.I);
  } catch (const OverflowError&) {
    throw InvalidInput("exhaustive search space exceeds the cap");
  }
  if (total > cap) {
    throw InvalidInput("exhaustive search needs " + std::to_string(total) + " evaluations, cap is " +
                       std::to_string(cap));
  }

  std::vector<std::int64_t> labels(config.I, 1);
  SelectionResult result;
  bool have_best = false;
  for (std::int64_t step = 0; step < total; ++step) {
    std::vector<AntennaSubset> subsets;
    subsets.reserve(config.I);
    for (int i = 0; i < config.I; ++i) subsets.push_back(make_subset(labels[i], config.N, config.M));
    const ApMatrices restricted = restrict_to_subset(h_hat_full, subsets);
    const PrecodingStack stack = oracle.precode(restricted, err_var, subsets, config);
    const double value = evaluate_stack(restricted, err_var, stack, config).sum_se;
    ++result.evaluations;
    if (!have_best || value > result.sum_se) {
      have_best = true;
      result.sum_se = value;
      result.subsets = std::move(subsets);
    }
    result.r_max_trace.push_back(result.sum_se);

    // advance the mixed-radix counter, last AP fastest
    for (int i = config.I - 1; i >= 0; --i) {
      if (++labels[i] <= classes) break;
      labels[i] = 1;
    }
  }
  return result;
}

}  // namespace cfmimo
