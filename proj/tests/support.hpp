// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/channel.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/random.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/search.hpp"

namespace cfmimo::testkit {

inline SystemConfig desk_config() {
  SystemConfig c;
  c.I = 3;
  c.N = 4;
  c.M = 2;
  c.K = 3;
  return c;
}

// Random small dimensions within the given bounds; N >= M is kept.
inline SystemConfig random_tiny_config(RandomStream& rng, int max_i, int max_n, int max_m, int max_k) {
  SystemConfig c;
  c.I = static_cast<int>(rng.uniform_int(1, max_i));
  c.N = static_cast<int>(rng.uniform_int(1, max_n));
  c.M = static_cast<int>(rng.uniform_int(1, std::min(max_m, c.N)));
  c.K = static_cast<int>(rng.uniform_int(1, max_k));
  return c;
}

inline Eigen::MatrixXcd random_complex(Eigen::Index rows, Eigen::Index cols, RandomStream& rng, double variance = 1.0) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.complex_normal(variance);
  }
  return m;
}

struct TinyInstance {
  SystemConfig config;
  ApMatrices h_hat;  // restricted, M x K per AP
  Eigen::MatrixXd err_var;
  PrecodingStack stack;
};

// Arbitrary (not necessarily power-feasible) precoders and estimates of
// order-one magnitude with a comparable noise floor.
inline TinyInstance random_tiny_instance(RandomStream& rng) {
  TinyInstance t;
  t.config = random_tiny_config(rng, 2, 3, 2, 2);
  t.config.noise_dbm = 10.0 * std::log10(rng.uniform(0.05, 2.0));
  t.err_var = Eigen::MatrixXd(t.config.I, t.config.K);
  for (int i = 0; i < t.config.I; ++i) {
    t.h_hat.push_back(random_complex(t.config.M, t.config.K, rng));
    t.stack.w.push_back(random_complex(t.config.M, t.config.K, rng));
    t.stack.subsets.push_back(make_subset(1, t.config.N, t.config.M));
    for (int k = 0; k < t.config.K; ++k) t.err_var(i, k) = rng.uniform(0.0, 0.5);
  }
  return t;
}

// Scalar-loop evaluation of the effective SINR: explicit sums over APs,
// antennas and users with no matrix algebra.
inline std::vector<double> naive_sinr(const ApMatrices& h_hat, const Eigen::MatrixXd& err_var,
                                      const ApMatrices& w, double noise) {
  const int aps = static_cast<int>(h_hat.size());
  const int users = static_cast<int>(h_hat[0].cols());
  std::vector<double> out;
  for (int k = 0; k < users; ++k) {
    double desired = 0.0, interference = 0.0, error = 0.0;
    for (int kp = 0; kp < users; ++kp) {
      std::complex<double> g = 0.0;
      for (int i = 0; i < aps; ++i) {
        for (int a = 0; a < h_hat[i].rows(); ++a) g += std::conj(h_hat[i](a, k)) * w[i](a, kp);
      }
      if (kp == k) {
        desired = std::norm(g);
      } else {
        interference += std::norm(g);
      }
      for (int i = 0; i < aps; ++i) {
        for (int a = 0; a < w[i].rows(); ++a) error += err_var(i, k) * std::norm(w[i](a, kp));
      }
    }
    out.push_back(desired / (interference + error + noise));
  }
  return out;
}

inline double relative_difference(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace cfmimo::testkit
