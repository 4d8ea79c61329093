// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/random.hpp"

namespace cfmimo {

// Scalar parameters of one network. Powers are kept in dBm here and exposed in
// linear milliwatts through the *_mw() accessors; everything downstream of the
// config works in linear scale.
struct SystemConfig {
  int I = 3;  // access points
  int N = 8;  // antennas per AP
  int M = 5;  // active antennas per AP
  int K = 4;  // users
  int tau_c = 200;
  int tau_p = 10;
  int tau_u = 0;
  double W = 20e6;  // Hz
  double noise_dbm = -94.0;
  double p_max_dbm = 20.0;
  double p_ul_dbm = 20.0;  // assumed, see README
  double l0_db = -32.6;
  double alpha = 3.67;
  double d0_m = 1.0;
  double ap_radius_m = 200.0;
  double user_box_m = 150.0;  // half-width of the user square
  std::uint64_t seed = 1;

  int tau_d() const { return tau_c - tau_p - tau_u; }
  double prelog() const { return static_cast<double>(tau_d()) / tau_c; }
  double noise_mw() const { return std::pow(10.0, noise_dbm / 10.0); }
  double p_max_mw() const { return std::pow(10.0, p_max_dbm / 10.0); }
  double p_ul_mw() const { return std::pow(10.0, p_ul_dbm / 10.0); }

  // Throws ConfigError / UnsupportedConfiguration on a violated invariant.
  void validate() const;

  bool operator==(const SystemConfig&) const = default;
};

// Flat "key = value" text, '#' starts a comment. Unknown keys are errors.
SystemConfig parse_config(const std::string& text);
SystemConfig load_config(const std::string& path);
void apply_overrides(SystemConfig& config, const std::map<std::string, std::string>& overrides);
void set_config_value(SystemConfig& config, const std::string& key, const std::string& value);
std::string config_to_text(const SystemConfig& config);
const std::vector<std::string>& config_keys();

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Geometry {
  std::vector<Point> ap_xy;
  std::vector<Point> user_xy;
};

// I x K matrix of linear-scale gains beta_{i,k}.
using LargeScaleGains = Eigen::MatrixXd;

// APs on a ring (deterministic), users i.i.d. uniform on the square.
Geometry place_network(const SystemConfig& config, RandomStream& rng);

double path_loss_db(double d_m, const SystemConfig& config);

LargeScaleGains large_scale_gains(const Geometry& geometry, const SystemConfig& config);

}  // namespace cfmimo
