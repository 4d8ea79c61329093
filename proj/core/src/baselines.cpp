// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/baselines.hpp"

#include <cmath>

#include "cfmimo/errors.hpp"

namespace cfmimo {

namespace {

constexpr double kSolveResidualTol = 1e-8;

// Scales each column of `dirs` to unit norm; zero columns stay zero.
void normalize_columns(Eigen::MatrixXcd& dirs) {
  for (Eigen::Index k = 0; k < dirs.cols(); ++k) {
    const double norm = dirs.col(k).norm();
    if (norm > 0.0) dirs.col(k) /= norm;
  }
}

}  // namespace

std::string_view to_string(PrecoderKind kind) {
  switch (kind) {
    case PrecoderKind::MRT:
      return "MRT";
    case PrecoderKind::DistributedMMSE:
      return "DistributedMMSE";
    case PrecoderKind::CentralizedMMSE:
      return "CentralizedMMSE";
    case PrecoderKind::GNN:
      return "GNN";
  }
  return "unknown";
}

PrecoderKind parse_precoder_kind(std::string_view name) {
  for (auto kind : {PrecoderKind::MRT, PrecoderKind::DistributedMMSE, PrecoderKind::CentralizedMMSE,
                    PrecoderKind::GNN}) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidInput("unknown precoder '" + std::string(name) + "'");
}

Eigen::MatrixXd heuristic_power(const ApMatrices& h_hat_restricted, const SystemConfig& config) {
  const double p_max = config.p_max_mw();
  const auto aps = static_cast<Eigen::Index>(h_hat_restricted.size());
  const Eigen::Index users = aps > 0 ? h_hat_restricted[0].cols() : 0;
  Eigen::MatrixXd powers(aps, users);
  for (Eigen::Index i = 0; i < aps; ++i) {
    const Eigen::VectorXd norms = h_hat_restricted[i].colwise().norm().transpose();
    const double total = norms.sum();
    if (total > 0.0) {
      powers.row(i) = (p_max * norms / total).transpose();
    } else {
      powers.row(i).setConstant(p_max / static_cast<double>(users));
    }
  }
  return powers;
}

PrecodingStack mrt(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& powers) {
  PrecodingStack stack;
  stack.w.reserve(h_hat_restricted.size());
  for (std::size_t i = 0; i < h_hat_restricted.size(); ++i) {
    Eigen::MatrixXcd w = h_hat_restricted[i];
    normalize_columns(w);
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
      w.col(k) *= std::sqrt(powers(static_cast<Eigen::Index>(i), k));
    }
    stack.w.push_back(std::move(w));
  }
  return stack;
}

Eigen::MatrixXcd solve_checked(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& rhs) {
  const Eigen::LDLT<Eigen::MatrixXcd> ldlt(a);
  Eigen::MatrixXcd x = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success) throw NumericalError("MMSE solve failed");
  for (Eigen::Index k = 0; k < rhs.cols(); ++k) {
    const double residual = (a * x.col(k) - rhs.col(k)).norm();
    if (!(residual <= kSolveResidualTol * rhs.col(k).norm())) {
      throw NumericalError("MMSE solve residual too large");
    }
  }
  return x;
}

ApMatrices mmse_directions(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                           const SystemConfig& config, MmseScope scope) {
  const auto aps = h_hat_restricted.size();
  ApMatrices dirs;
  dirs.reserve(aps);
  if (aps == 0) return dirs;
  const Eigen::Index users = h_hat_restricted[0].cols();
  const double loading = static_cast<double>(users) * config.noise_mw() / config.p_max_mw();

  if (scope == MmseScope::Local) {
    for (std::size_t i = 0; i < aps; ++i) {
      const auto& h = h_hat_restricted[i];
      const double err_sum = err_var.row(static_cast<Eigen::Index>(i)).sum();
      Eigen::MatrixXcd a = h * h.adjoint();
      a.diagonal().array() += err_sum + loading;
      Eigen::MatrixXcd d = solve_checked(a, h);
      normalize_columns(d);
      dirs.push_back(std::move(d));
    }
    return dirs;
  }

  Eigen::Index total_rows = 0;
  for (const auto& h : h_hat_restricted) total_rows += h.rows();
  Eigen::MatrixXcd stacked(total_rows, users);
  Eigen::VectorXd diag(total_rows);
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < aps; ++i) {
    const auto& h = h_hat_restricted[i];
    stacked.middleRows(offset, h.rows()) = h;
    diag.segment(offset, h.rows()).setConstant(err_var.row(static_cast<Eigen::Index>(i)).sum() + loading);
    offset += h.rows();
  }
  Eigen::MatrixXcd a = stacked * stacked.adjoint();
  a.diagonal() += diag.cast<std::complex<double>>();
  const Eigen::MatrixXcd x = solve_checked(a, stacked);
  offset = 0;
  for (std::size_t i = 0; i < aps; ++i) {
    const Eigen::Index m = h_hat_restricted[i].rows();
    Eigen::MatrixXcd d = x.middleRows(offset, m);
    normalize_columns(d);
    dirs.push_back(std::move(d));
    offset += m;
  }
  return dirs;
}

PrecodingStack assemble_baseline(PrecoderKind kind, const ApMatrices& h_hat_restricted,
                                 const Eigen::MatrixXd& err_var, const std::vector<AntennaSubset>& subsets,
                                 const SystemConfig& config) {
  const Eigen::MatrixXd powers = heuristic_power(h_hat_restricted, config);
  PrecodingStack stack;
  switch (kind) {
    case PrecoderKind::MRT:
      stack = mrt(h_hat_restricted, powers);
      break;
    case PrecoderKind::DistributedMMSE:
    case PrecoderKind::CentralizedMMSE: {
      const auto scope = kind == PrecoderKind::DistributedMMSE ? MmseScope::Local : MmseScope::Global;
      stack.w = mmse_directions(h_hat_restricted, err_var, config, scope);
      for (std::size_t i = 0; i < stack.w.size(); ++i) {
        for (Eigen::Index k = 0; k < stack.w[i].cols(); ++k) {
          stack.w[i].col(k) *= std::sqrt(powers(static_cast<Eigen::Index>(i), k));
        }
      }
      break;
    }
    case PrecoderKind::GNN:
      throw InvalidInput("assemble_baseline: GNN precoding is owned by the GNN module");
  }
  stack.subsets = subsets;
  return stack;
}

}  // namespace cfmimo
