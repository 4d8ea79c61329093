// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/scenario.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "cfmimo/errors.hpp"

namespace cfmimo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  std::from_chars_result r{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is available in libstdc++ 11
    r = std::from_chars(first, last, out, std::chars_format::general);
  } else {
    r = std::from_chars(first, last, out);
  }
  if (r.ec != std::errc{} || r.ptr != last) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return out;
}

struct Field {
  std::function<void(SystemConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const SystemConfig&)> get;
};

template <typename T>
Field make_field(T SystemConfig::*member) {
  return Field{[member](SystemConfig& c, const std::string& key, const std::string& v) {
                 c.*member = parse_number<T>(key, v);
               },
               [member](const SystemConfig& c) {
                 std::ostringstream os;
                 os.precision(17);
                 os << c.*member;
                 return os.str();
               }};
}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = {
      {"I", make_field(&SystemConfig::I)},
      {"N", make_field(&SystemConfig::N)},
      {"M", make_field(&SystemConfig::M)},
      {"K", make_field(&SystemConfig::K)},
      {"tau_c", make_field(&SystemConfig::tau_c)},
      {"tau_p", make_field(&SystemConfig::tau_p)},
      {"tau_u", make_field(&SystemConfig::tau_u)},
      {"W", make_field(&SystemConfig::W)},
      {"noise_dbm", make_field(&SystemConfig::noise_dbm)},
      {"p_max_dbm", make_field(&SystemConfig::p_max_dbm)},
      {"p_ul_dbm", make_field(&SystemConfig::p_ul_dbm)},
      {"l0_db", make_field(&SystemConfig::l0_db)},
      {"alpha", make_field(&SystemConfig::alpha)},
      {"d0_m", make_field(&SystemConfig::d0_m)},
      {"ap_radius_m", make_field(&SystemConfig::ap_radius_m)},
      {"user_box_m", make_field(&SystemConfig::user_box_m)},
      {"seed", make_field(&SystemConfig::seed)},
  };
  return table;
}

}  // namespace

void SystemConfig::validate() const {
  if (I < 1 || N < 1 || M < 1 || K < 1 || tau_c < 1 || tau_p < 1 || tau_u < 0) {
    throw ConfigError("all counts must be >= 1 (tau_u >= 0)");
  }
  if (M > N) throw ConfigError("M must not exceed N");
  if (tau_d() < 1) throw ConfigError("tau_c - tau_p - tau_u must be >= 1");
  if (tau_p < K) {
    throw UnsupportedConfiguration("tau_p < K: non-orthogonal pilots are not modeled");
  }
  for (double v : {W, noise_dbm, p_max_dbm, p_ul_dbm, l0_db, alpha, d0_m, ap_radius_m, user_box_m}) {
    if (!std::isfinite(v)) throw ConfigError("non-finite config value");
  }
  if (d0_m <= 0.0 || ap_radius_m <= 0.0 || user_box_m <= 0.0) {
    throw ConfigError("distances must be positive");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : field_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(SystemConfig& config, const std::string& key, const std::string& value) {
  const auto& table = field_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, key, trim(value));
}

SystemConfig parse_config(const std::string& text) {
  SystemConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return config;
}

SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_overrides(SystemConfig& config, const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
}

std::string config_to_text(const SystemConfig& config) {
  std::string out;
  for (const auto& [name, field] : field_table()) {
    out += name + " = " + field.get(config) + "\n";
  }
  return out;
}

Geometry place_network(const SystemConfig& config, RandomStream& rng) {
  Geometry g;
  g.ap_xy.reserve(config.I);
  for (int i = 0; i < config.I; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / config.I;
    g.ap_xy.push_back({config.ap_radius_m * std::cos(angle), config.ap_radius_m * std::sin(angle)});
  }
  g.user_xy.reserve(config.K);
  const double half = config.user_box_m;
  for (int k = 0; k < config.K; ++k) {
    const double x = rng.uniform(-half, half);
    const double y = rng.uniform(-half, half);
    g.user_xy.push_back({x, y});
  }
  return g;
}

double path_loss_db(double d_m, const SystemConfig& config) {
  if (!(d_m > 0.0)) throw InvalidInput("path loss needs a positive distance");
  return config.l0_db - 10.0 * config.alpha * std::log10(d_m / config.d0_m);
}

LargeScaleGains large_scale_gains(const Geometry& geometry, const SystemConfig& config) {
  const auto aps = static_cast<Eigen::Index>(geometry.ap_xy.size());
  const auto users = static_cast<Eigen::Index>(geometry.user_xy.size());
  LargeScaleGains beta(aps, users);
  for (Eigen::Index i = 0; i < aps; ++i) {
    for (Eigen::Index k = 0; k < users; ++k) {
      const double dx = geometry.ap_xy[i].x - geometry.user_xy[k].x;
      const double dy = geometry.ap_xy[i].y - geometry.user_xy[k].y;
      const double d = std::hypot(dx, dy);
      if (d == 0.0) throw InvalidInput("AP coincides with a user");
      beta(i, k) = std::pow(10.0, path_loss_db(d, config) / 10.0);
    }
  }
  return beta;
}

}  // namespace cfmimo
