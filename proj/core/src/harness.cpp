// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cfmimo/channel.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/search.hpp"

namespace cfmimo {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string format_value(double v) {
  std::ostringstream os;
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    os << std::setprecision(10) << v;
  }
  return os.str();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

struct Sample {
  double sum_se = 0.0;
  double select_ms = 0.0;
  double precode_ms = 0.0;
  bool power_ok = true;
};

}  // namespace

const std::vector<SchemeSpec>& standard_schemes() {
  static const std::vector<SchemeSpec> schemes = {
      {PrecoderKind::MRT, Selector::Random, "MRT"},
      {PrecoderKind::DistributedMMSE, Selector::Random, "DistributedMMSE"},
      {PrecoderKind::CentralizedMMSE, Selector::Random, "CentralizedMMSE"},
      {PrecoderKind::GNN, Selector::Random, "GNN"},
      {PrecoderKind::GNN, Selector::CNN, "GNN+CNN"},
      {PrecoderKind::CentralizedMMSE, Selector::IterativeSearch, "CentralizedMMSE+IS"},
      {PrecoderKind::GNN, Selector::IterativeSearch, "GNN+IS"},
  };
  return schemes;
}

SchemeSpec parse_scheme(const std::string& label) {
  const auto plus = label.find('+');
  SchemeSpec s;
  s.precoder = parse_precoder_kind(label.substr(0, plus));
  if (plus == std::string::npos) {
    s.selector = Selector::Random;
  } else {
    const std::string sel = label.substr(plus + 1);
    if (sel == "IS") {
      s.selector = Selector::IterativeSearch;
    } else if (sel == "CNN") {
      s.selector = Selector::CNN;
    } else if (sel == "Random") {
      s.selector = Selector::Random;
    } else {
      throw InvalidInput("unknown selector '" + sel + "' in scheme '" + label + "'");
    }
  }
  s.label = std::string(to_string(s.precoder));
  if (s.selector == Selector::IterativeSearch) s.label += "+IS";
  if (s.selector == Selector::CNN) s.label += "+CNN";
  return s;
}

std::vector<SchemeSpec> parse_schemes(const std::string& comma_list) {
  std::vector<SchemeSpec> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_scheme(item));
  }
  if (out.empty()) throw InvalidInput("no schemes given");
  return out;
}

bool needs_gnn(const SchemeSpec& scheme) { return scheme.precoder == PrecoderKind::GNN; }
bool needs_cnn(const SchemeSpec& scheme) { return scheme.selector == Selector::CNN; }

std::int64_t exchange_count(const SchemeSpec& scheme, const SystemConfig& config) {
  const std::int64_t i = config.I, n = config.N, m = config.M, k = config.K;
  const bool local = scheme.precoder != PrecoderKind::CentralizedMMSE;
  if (scheme.selector == Selector::IterativeSearch) {
    if (local) throw InvalidInput("no exchange accounting for " + scheme.label);
    return i * n * k + i * m * k;
  }
  return local ? 0 : 2 * i * m * k;
}

std::vector<PointResult> run_point(const SystemConfig& config, const std::vector<SchemeSpec>& schemes,
                                   int realizations, std::uint64_t seed, const Models& models, unsigned threads) {
  config.validate();
  if (realizations < 1) throw ConfigError("realizations must be at least 1");
  std::vector<std::unique_ptr<PrecoderOracle>> oracles;
  for (const auto& s : schemes) {
    if (needs_gnn(s) && !models.gnn) throw ConfigError("scheme " + s.label + " needs trained GNN weights");
    if (needs_cnn(s) && !models.cnn) throw ConfigError("scheme " + s.label + " needs trained CNN weights");
    if (s.precoder == PrecoderKind::GNN) {
      oracles.push_back(std::make_unique<GnnOracle>(*models.gnn));
    } else {
      oracles.push_back(std::make_unique<BaselineOracle>(s.precoder));
    }
  }
  if (models.cnn && (models.cnn->aps() != config.I || models.cnn->antennas() != config.N ||
                     models.cnn->active() != config.M || models.cnn->users() != config.K)) {
    throw ConfigError("CNN dimensions do not match the config");
  }

  const auto r_count = static_cast<std::size_t>(realizations);
  std::vector<std::vector<Sample>> samples(schemes.size(), std::vector<Sample>(r_count));
  const RandomStream root(seed);
  parallel_for(r_count, threads ? threads : default_threads(), [&](std::size_t r) {
    const RandomStream block = root.child(r);
    RandomStream channel_rng = block.child(0);
    const Realization real = draw_realization(config, channel_rng);
    const auto& h_hat = real.channels.h_hat;
    const auto& err = real.channels.err_var;
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      const auto& oracle = *oracles[s];
      Sample& out = samples[s][r];
      auto t0 = Clock::now();
      std::vector<AntennaSubset> subsets;
      switch (schemes[s].selector) {
        case Selector::Random: {
          RandomStream sel_rng = block.child(1);
          subsets = random_selection(config, sel_rng);
          break;
        }
        case Selector::IterativeSearch:
          subsets = iterative_search(h_hat, err, oracle, config).subsets;
          break;
        case Selector::CNN:
          for (int i = 0; i < config.I; ++i) {
            subsets.push_back(models.cnn->predict(i, h_hat[static_cast<std::size_t>(i)]));
          }
          break;
      }
      out.select_ms = ms_since(t0);
      t0 = Clock::now();
      const auto restricted = restrict_to_subset(h_hat, subsets);
      const PrecodingStack stack = oracle.precode(restricted, err, subsets, config);
      out.precode_ms = ms_since(t0);
      out.sum_se = evaluate_stack(restricted, err, stack, config).sum_se;
      out.power_ok = power_at_budget(check_power(stack, config), config);
    }
  });

  std::vector<PointResult> results;
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    PointResult p;
    p.scheme = schemes[s];
    p.realizations = realizations;
    double sel = 0.0, pre = 0.0;
    for (const auto& x : samples[s]) {
      p.sum_se.push_back(x.sum_se);
      sel += x.select_ms;
      pre += x.precode_ms;
      p.power_ok = p.power_ok && x.power_ok;
    }
    const double n = static_cast<double>(r_count);
    double mean = 0.0;
    for (double v : p.sum_se) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : p.sum_se) var += (v - mean) * (v - mean);
    p.mean_sum_se = mean;
    p.std_sum_se = r_count > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    p.mean_select_ms = sel / n;
    p.mean_precode_ms = pre / n;
    p.mean_time_ms = p.mean_select_ms + p.mean_precode_ms;
    results.push_back(std::move(p));
  }
  return results;
}

SweepParam parse_sweep_param(const std::string& name) {
  for (auto p : {SweepParam::K, SweepParam::P_max, SweepParam::M, SweepParam::N, SweepParam::I}) {
    if (to_string(p) == name) return p;
  }
  throw InvalidInput("unknown sweep parameter '" + name + "' (expected K, P_max, M, N or I)");
}

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::K:
      return "K";
    case SweepParam::P_max:
      return "P_max";
    case SweepParam::M:
      return "M";
    case SweepParam::N:
      return "N";
    case SweepParam::I:
      return "I";
  }
  return "unknown";
}

void apply_sweep_value(SystemConfig& config, SweepParam p, double value) {
  auto as_int = [&] {
    if (value != std::floor(value) || value < 1 || value > 1e6) {
      throw ConfigError("sweep value " + format_value(value) + " is not a positive integer");
    }
    return static_cast<int>(value);
  };
  switch (p) {
    case SweepParam::K:
      config.K = as_int();
      break;
    case SweepParam::P_max:
      config.p_max_dbm = value;
      break;
    case SweepParam::M:
      config.M = as_int();
      break;
    case SweepParam::N:
      config.N = as_int();
      break;
    case SweepParam::I:
      config.I = as_int();
      break;
  }
  config.validate();
}

std::string gnn_weights_name(const SystemConfig& c) {
  return "gnn_I" + std::to_string(c.I) + "_N" + std::to_string(c.N) + "_M" + std::to_string(c.M) + "_K" +
         std::to_string(c.K) + ".cfw";
}

std::string cnn_weights_name(const SystemConfig& c) {
  return "cnn_I" + std::to_string(c.I) + "_N" + std::to_string(c.N) + "_M" + std::to_string(c.M) + "_K" +
         std::to_string(c.K) + ".cfw";
}

LoadedModels prepare_models(const SystemConfig& config, const std::vector<SchemeSpec>& schemes,
                            const std::string& weights_dir, bool train_missing, const ModelTraining& training,
                            std::uint64_t seed, std::ostream* progress) {
  bool want_gnn = false, want_cnn = false;
  for (const auto& s : schemes) {
    want_gnn = want_gnn || needs_gnn(s) || needs_cnn(s);
    want_cnn = want_cnn || needs_cnn(s);
  }
  LoadedModels out;
  if (!want_gnn) return out;

  namespace fs = std::filesystem;
  const fs::path gnn_path = fs::path(weights_dir) / gnn_weights_name(config);
  const fs::path cnn_path = fs::path(weights_dir) / cnn_weights_name(config);
  auto missing = [&](const fs::path& p) {
    return ConfigError("missing weights " + p.string() + " (train them or pass --train-missing)");
  };

  if (fs::exists(gnn_path)) {
    out.gnn = std::make_unique<GnnModel>(GnnModel::load(gnn_path.string(), config));
  } else if (train_missing) {
    if (progress) *progress << "training " << gnn_path.string() << '\n';
    out.gnn = std::make_unique<GnnModel>(config, training.gnn_arch, mix_seed(seed, 1));
    RandomStream rng(mix_seed(seed, 2));
    train_gnn(*out.gnn, training.gnn, config, rng);
    fs::create_directories(weights_dir);
    out.gnn->save(gnn_path.string());
  } else {
    throw missing(gnn_path);
  }

  if (!want_cnn) return out;
  if (fs::exists(cnn_path)) {
    out.cnn = std::make_unique<CnnModel>(CnnModel::load(cnn_path.string(), config));
  } else if (train_missing) {
    if (progress) *progress << "training " << cnn_path.string() << '\n';
    const AsDataset ds = generate_dataset(training.dataset_samples, *out.gnn, config, mix_seed(seed, 3));
    out.cnn = std::make_unique<CnnModel>(config, training.cnn_arch, mix_seed(seed, 4));
    train_cnn(*out.cnn, ds, training.cnn);
    fs::create_directories(weights_dir);
    out.cnn->save(cnn_path.string());
  } else {
    throw missing(cnn_path);
  }
  return out;
}

std::vector<SweepRow> make_rows(double value, const std::vector<PointResult>& points, const SystemConfig& config,
                                std::uint64_t seed) {
  std::vector<SweepRow> rows;
  const double ref = points.empty() ? 0.0 : points.front().mean_time_ms;
  for (const auto& p : points) {
    SweepRow row;
    row.value = value;
    row.point = p;
    row.time_ratio = ref > 0.0 ? p.mean_time_ms / ref : 0.0;
    try {
      row.exchange = std::to_string(exchange_count(p.scheme, config));
    } catch (const InvalidInput&) {
      row.exchange = "NA";
    }
    row.seed = seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string& csv_header() {
  static const std::string header =
      "value,scheme,mean_sum_se,std_sum_se,realizations,mean_time_ms,mean_select_ms,mean_precode_ms,time_ratio,"
      "exchange,seed";
  return header;
}

std::string csv_row(const SweepRow& row) {
  const auto& p = row.point;
  std::ostringstream os;
  os << format_value(row.value) << ',' << p.scheme.label << ',' << format_double(p.mean_sum_se) << ','
     << format_double(p.std_sum_se) << ',' << p.realizations << ',' << format_double(p.mean_time_ms) << ','
     << format_double(p.mean_select_ms) << ',' << format_double(p.mean_precode_ms) << ','
     << format_double(row.time_ratio) << ',' << row.exchange << ',' << row.seed;
  return os.str();
}

std::vector<SweepRow> run_sweep(const SystemConfig& base, const SweepSpec& spec, std::ostream& csv,
                                std::ostream* progress) {
  if (spec.values.empty()) throw ConfigError("sweep needs at least one value");
  if (spec.schemes.empty()) throw ConfigError("sweep needs at least one scheme");
  if (spec.realizations < 1) throw ConfigError("realizations must be at least 1");
  csv << csv_header() << '\n' << std::flush;
  std::vector<SweepRow> all;
  for (double value : spec.values) {
    SystemConfig config = base;
    apply_sweep_value(config, spec.param, value);
    const LoadedModels models = prepare_models(config, spec.schemes, spec.weights_dir, spec.train_missing,
                                               spec.training, spec.seed, progress);
    if (progress) *progress << to_string(spec.param) << " = " << format_value(value) << '\n';
    const auto points = run_point(config, spec.schemes, spec.realizations, spec.seed, models.view(), spec.threads);
    for (auto& row : make_rows(value, points, config, spec.seed)) {
      csv << csv_row(row) << '\n';
      all.push_back(std::move(row));
    }
    csv << std::flush;
  }
  return all;
}

std::string plot_script(const std::string& csv_path, const std::string& x_label) {
  std::ostringstream os;
  os << "import csv\n"
     << "import collections\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "series = collections.defaultdict(list)\n"
     << "with open(" << std::quoted(csv_path) << ") as f:\n"
     << "    for row in csv.DictReader(f):\n"
     << "        series[row['scheme']].append((float(row['value']), float(row['mean_sum_se'])))\n\n"
     << "for scheme, points in series.items():\n"
     << "    points.sort()\n"
     << "    plt.plot([p[0] for p in points], [p[1] for p in points], marker='o', label=scheme)\n"
     << "plt.xlabel(" << std::quoted(x_label) << ")\n"
     << "plt.ylabel('sum spectral efficiency (bit/s/Hz)')\n"
     << "plt.grid(True)\n"
     << "plt.legend()\n"
     << "plt.savefig(" << std::quoted(csv_path + ".png") << ", dpi=150)\n";
  return os.str();
}

}  // namespace cfmimo
