// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cfmimo/autodiff/gradcheck.hpp"
#include "cfmimo/cnn.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/gnn.hpp"
#include "cfmimo/harness.hpp"
#include "cfmimo/scenario.hpp"

namespace {

using namespace cfmimo;

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kFormat = 3,
  kNumerical = 4,
  kOverflow = 5,
  kCheckFailed = 6,
};

struct ConfigOptions {
  std::string file;
  std::vector<std::pair<std::string, CLI::Option*>> keys;
  std::map<std::string, std::string> values;
};

void add_config_options(CLI::App* sub, ConfigOptions& opts) {
  sub->add_option("--config", opts.file, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& key : config_keys()) opts.values[key];
  for (const auto& key : config_keys()) {
    auto* o = sub->add_option("--" + key, opts.values[key], "override config key " + key)->group("Config keys");
    opts.keys.emplace_back(key, o);
  }
}

SystemConfig build_config(const ConfigOptions& opts, SystemConfig base = {}) {
  SystemConfig c = opts.file.empty() ? base : load_config(opts.file);
  std::map<std::string, std::string> overrides;
  for (const auto& [key, option] : opts.keys) {
    if (option->count() > 0) overrides[key] = opts.values.at(key);
  }
  apply_overrides(c, overrides);
  c.validate();
  return c;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("no sweep values given");
  return out;
}

void write_plot(const std::string& csv_path, const std::string& x_label) {
  std::ofstream py(csv_path + ".py");
  py << plot_script(csv_path, x_label);
  if (!py) throw ConfigError("cannot write plot script next to " + csv_path);
}

struct TrainGnnArgs {
  ConfigOptions cfg;
  std::string out;
  std::string log;
  GnnArch arch;
  GnnTrainConfig train;
};

int run_train_gnn(TrainGnnArgs& a) {
  const SystemConfig config = build_config(a.cfg);
  const std::uint64_t seed = config.seed;
  GnnModel model(config, a.arch, mix_seed(seed, 1));
  RandomStream rng(mix_seed(seed, 2));
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    log << "epoch,mean_loss,mean_sum_se\n";
  }
  train_gnn(model, a.train, config, rng, [&](int epoch, double loss) {
    std::cerr << "epoch " << epoch + 1 << "/" << a.train.epochs << " mean loss " << std::setprecision(8) << loss
              << '\n';
    if (log.is_open()) log << epoch + 1 << ',' << std::setprecision(12) << loss << ',' << -loss << '\n';
  });
  model.save(a.out);
  std::cout << "wrote " << a.out << " (checksum " << std::hex << model.checksum() << std::dec << ")\n";
  return kOk;
}

struct GenDatasetArgs {
  ConfigOptions cfg;
  std::string gnn;
  std::string out;
  int samples = 3000;
  unsigned threads = 0;
};

int run_gen_dataset(GenDatasetArgs& a) {
  const SystemConfig config = build_config(a.cfg);
  const GnnModel gnn = GnnModel::load(a.gnn, config);
  const std::uint64_t seed = config.seed;
  const AsDataset ds = generate_dataset(a.samples, gnn, config, seed, a.threads);
  save_dataset(ds, a.out);
  const auto classes = static_cast<std::size_t>(count_subsets(config.N, config.M));
  for (int i = 0; i < config.I; ++i) {
    std::vector<int> hist(classes, 0);
    for (const auto& s : ds.per_ap[static_cast<std::size_t>(i)]) ++hist[static_cast<std::size_t>(s.label - 1)];
    const int top = *std::max_element(hist.begin(), hist.end());
    std::cerr << "AP " << i + 1 << ": most frequent label covers " << std::fixed << std::setprecision(1)
              << 100.0 * top / a.samples << "% of samples\n";
  }
  std::cout << "wrote " << a.out << " (" << a.samples << " samples per AP)\n";
  return kOk;
}

struct TrainCnnArgs {
  ConfigOptions cfg;
  std::string dataset;
  std::string out;
  std::string log;
  CnnArch arch;
  CnnTrainConfig train;
};

int run_train_cnn(TrainCnnArgs& a) {
  const AsDataset ds = load_dataset(a.dataset);
  const SystemConfig config = build_config(a.cfg, parse_config(ds.config_text));
  const std::uint64_t seed = config.seed;
  a.train.seed = mix_seed(seed, 5);
  CnnModel model(config, a.arch, mix_seed(seed, 4));
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    log << "ap,epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n";
  }
  const auto result = train_cnn(model, ds, a.train, [&](int ap, const CnnEpochReport& r) {
    std::cerr << "AP " << ap + 1 << " epoch " << r.epoch + 1 << ": loss " << std::setprecision(5) << r.train_loss
              << " acc " << r.train_accuracy << " | val loss " << r.validation_loss << " acc "
              << r.validation_accuracy << '\n';
    if (log.is_open()) {
      log << ap + 1 << ',' << r.epoch + 1 << ',' << r.train_loss << ',' << r.train_accuracy << ','
          << r.validation_loss << ',' << r.validation_accuracy << '\n';
    }
  });
  model.save(a.out);
  for (std::size_t ap = 0; ap < result.per_ap.size(); ++ap) {
    const auto& last = result.per_ap[ap].back();
    std::cout << "AP " << ap + 1 << " final validation accuracy " << last.validation_accuracy << '\n';
  }
  std::cout << "wrote " << a.out << '\n';
  return kOk;
}

struct EvalArgs {
  ConfigOptions cfg;
  std::string schemes;
  int realizations = 1000;
  std::string gnn;
  std::string cnn;
  std::string weights_dir = "weights";
  std::string csv;
  bool plot = false;
  unsigned threads = 0;
};

int run_eval(EvalArgs& a) {
  const SystemConfig config = build_config(a.cfg);
  const auto schemes = a.schemes.empty() ? standard_schemes() : parse_schemes(a.schemes);
  const std::uint64_t seed = config.seed;
  std::unique_ptr<GnnModel> gnn;
  std::unique_ptr<CnnModel> cnn;
  bool want_gnn = false, want_cnn = false;
  for (const auto& s : schemes) {
    want_gnn = want_gnn || needs_gnn(s);
    want_cnn = want_cnn || needs_cnn(s);
  }
  namespace fs = std::filesystem;
  if (want_gnn) {
    const std::string path = a.gnn.empty() ? (fs::path(a.weights_dir) / gnn_weights_name(config)).string() : a.gnn;
    if (!fs::exists(path)) throw ConfigError("missing GNN weights " + path);
    gnn = std::make_unique<GnnModel>(GnnModel::load(path, config));
  }
  if (want_cnn) {
    const std::string path = a.cnn.empty() ? (fs::path(a.weights_dir) / cnn_weights_name(config)).string() : a.cnn;
    if (!fs::exists(path)) throw ConfigError("missing CNN weights " + path);
    cnn = std::make_unique<CnnModel>(CnnModel::load(path, config));
  }
  const auto points = run_point(config, schemes, a.realizations, seed, {gnn.get(), cnn.get()}, a.threads);
  const auto rows = make_rows(0.0, points, config, seed);

  std::cerr << std::left << std::setw(22) << "scheme" << std::setw(14) << "sum SE" << std::setw(12) << "std"
            << std::setw(12) << "time ratio" << "exchange\n";
  for (const auto& r : rows) {
    std::cerr << std::setw(22) << r.point.scheme.label << std::setw(14) << std::setprecision(6)
              << r.point.mean_sum_se << std::setw(12) << r.point.std_sum_se << std::setw(12) << r.time_ratio
              << r.exchange << (r.point.power_ok ? "" : "  (power budget violated)") << '\n';
  }
  std::ofstream file;
  if (!a.csv.empty()) {
    file.open(a.csv);
    if (!file) throw ConfigError("cannot open " + a.csv);
  }
  std::ostream& out = a.csv.empty() ? std::cout : file;
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
  if (a.plot && !a.csv.empty()) write_plot(a.csv, "point");
  return kOk;
}

struct SweepArgs {
  ConfigOptions cfg;
  std::string param;
  std::string values;
  std::string schemes;
  std::string out;
  bool plot = false;
  SweepSpec spec;
};

int run_sweep_cmd(SweepArgs& a) {
  const SystemConfig config = build_config(a.cfg);
  a.spec.param = parse_sweep_param(a.param);
  a.spec.values = parse_values(a.values);
  a.spec.schemes = a.schemes.empty() ? standard_schemes() : parse_schemes(a.schemes);
  a.spec.seed = config.seed;
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw ConfigError("cannot open " + a.out);
  }
  std::ostream& csv = a.out.empty() ? std::cout : file;
  run_sweep(config, a.spec, csv, &std::cerr);
  if (a.plot && !a.out.empty()) write_plot(a.out, to_string(a.spec.param));
  return kOk;
}

struct GradCheckArgs {
  ConfigOptions cfg;
  GnnArch arch;
  int samples = 8;
  int weights = 5;
  double primitive_tol = 1e-4;
  double model_tol = 1e-3;
};

int run_grad_check(GradCheckArgs& a) {
  SystemConfig desk;
  desk.I = 3;
  desk.N = 4;
  desk.M = 2;
  desk.K = 3;
  const SystemConfig config = build_config(a.cfg, desk);
  bool ok = true;
  for (const auto& r : ad::check_primitives(config.seed)) {
    const bool pass = r.relative_error <= a.primitive_tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << std::left << std::setw(24) << r.name << std::scientific
              << std::setprecision(2) << r.relative_error << '\n';
  }
  GnnModel model(config, a.arch, mix_seed(config.seed, 1));
  RandomStream rng(mix_seed(config.seed, 2));
  const GnnBatch batch = sample_gnn_batch(config, model.input_scale(), a.samples, rng);
  for (const auto& s : gnn_gradient_spot_check(model, batch, config, a.weights, rng)) {
    const bool pass = s.relative_error <= a.model_tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << "gnn_loss " << s.parameter << '[' << s.index << "] "
              << std::scientific << std::setprecision(2) << s.relative_error << '\n';
  }
  return ok ? kOk : kCheckFailed;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const OverflowError& e) {
    std::cerr << "overflow: " << e.what() << '\n';
    return kOverflow;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
}

void add_schedule(CLI::App* sub, ad::LearningRateSchedule& s) {
  sub->add_option("--lr", s.initial, "initial Adam learning rate")->capture_default_str();
  sub->add_option("--lr-decay", s.decay, "multiplicative decay factor")->capture_default_str();
  sub->add_option("--lr-decay-every", s.decay_every, "optimizer steps between decays")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint antenna selection and precoding for cell-free MIMO"};
  app.require_subcommand(1);

  TrainGnnArgs tg;
  auto* train_gnn_cmd = app.add_subcommand("train-gnn", "train the per-AP precoding GNNs");
  add_config_options(train_gnn_cmd, tg.cfg);
  train_gnn_cmd->add_option("--out", tg.out, "weight file to write")->required();
  train_gnn_cmd->add_option("--log", tg.log, "CSV of per-epoch mean loss");
  train_gnn_cmd->add_option("--epochs", tg.train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train_gnn_cmd->add_option("--iterations", tg.train.iterations, "iterations per epoch")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_gnn_cmd->add_option("--samples", tg.train.samples, "coherence blocks per iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_gnn_cmd->add_option("--layers", tg.arch.layers)->capture_default_str()->check(CLI::PositiveNumber);
  train_gnn_cmd->add_option("--hidden", tg.arch.hidden)->capture_default_str()->check(CLI::PositiveNumber);
  train_gnn_cmd->add_option("--width", tg.arch.width)->capture_default_str()->check(CLI::PositiveNumber);
  add_schedule(train_gnn_cmd, tg.train.schedule);

  GenDatasetArgs gd;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "label antenna subsets by iterative search with the GNN");
  add_config_options(gen_cmd, gd.cfg);
  gen_cmd->add_option("--gnn", gd.gnn, "trained GNN weights")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gd.out, "dataset file to write")->required();
  gen_cmd->add_option("--samples", gd.samples)->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--threads", gd.threads, "worker threads (0 = all cores)");

  TrainCnnArgs tc;
  auto* train_cnn_cmd = app.add_subcommand("train-cnn", "train the per-AP antenna selection CNNs");
  add_config_options(train_cnn_cmd, tc.cfg);
  train_cnn_cmd->add_option("--dataset", tc.dataset)->required()->check(CLI::ExistingFile);
  train_cnn_cmd->add_option("--out", tc.out, "weight file to write")->required();
  train_cnn_cmd->add_option("--log", tc.log, "CSV of per-epoch loss and accuracy");
  train_cnn_cmd->add_option("--epochs", tc.train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train_cnn_cmd->add_option("--batch", tc.train.batch)->capture_default_str()->check(CLI::PositiveNumber);
  train_cnn_cmd->add_option("--val-fraction", tc.train.validation_fraction)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.99));
  train_cnn_cmd->add_option("--filters", tc.arch.filters)->capture_default_str()->check(CLI::PositiveNumber);
  train_cnn_cmd->add_option("--dense", tc.arch.dense)->capture_default_str()->check(CLI::PositiveNumber);
  add_schedule(train_cnn_cmd, tc.train.schedule);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate schemes at one operating point");
  add_config_options(eval_cmd, ev.cfg);
  eval_cmd->add_option("--schemes", ev.schemes, "comma list, e.g. MRT,GNN+CNN,CentralizedMMSE+IS");
  eval_cmd->add_option("--realizations", ev.realizations)->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--gnn", ev.gnn, "GNN weights (default: weights dir naming)");
  eval_cmd->add_option("--cnn", ev.cnn, "CNN weights (default: weights dir naming)");
  eval_cmd->add_option("--weights-dir", ev.weights_dir)->capture_default_str();
  eval_cmd->add_option("--csv", ev.csv, "write CSV here instead of stdout");
  eval_cmd->add_flag("--plot", ev.plot, "also write <csv>.py, a matplotlib script");
  eval_cmd->add_option("--threads", ev.threads, "worker threads (0 = all cores)");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep one parameter and emit CSV rows");
  add_config_options(sweep_cmd, sw.cfg);
  sweep_cmd->add_option("--param", sw.param, "K, P_max, M, N or I")->required();
  sweep_cmd->add_option("--values", sw.values, "comma list of values")->required();
  sweep_cmd->add_option("--schemes", sw.schemes, "comma list (default: all)");
  sweep_cmd->add_option("--realizations", sw.spec.realizations)->capture_default_str()->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--weights-dir", sw.spec.weights_dir)->capture_default_str();
  sweep_cmd->add_flag("--train-missing", sw.spec.train_missing, "train and save models that are not on disk");
  sweep_cmd->add_option("--gnn-epochs", sw.spec.training.gnn.epochs)->capture_default_str();
  sweep_cmd->add_option("--gnn-iterations", sw.spec.training.gnn.iterations)->capture_default_str();
  sweep_cmd->add_option("--gnn-samples", sw.spec.training.gnn.samples)->capture_default_str();
  sweep_cmd->add_option("--hidden", sw.spec.training.gnn_arch.hidden)->capture_default_str();
  sweep_cmd->add_option("--width", sw.spec.training.gnn_arch.width)->capture_default_str();
  sweep_cmd->add_option("--dataset-samples", sw.spec.training.dataset_samples)->capture_default_str();
  sweep_cmd->add_option("--cnn-epochs", sw.spec.training.cnn.epochs)->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "CSV path (default: stdout)");
  sweep_cmd->add_flag("--plot", sw.plot, "also write <out>.py, a matplotlib script");
  sweep_cmd->add_option("--threads", sw.spec.threads, "worker threads (0 = all cores)");

  GradCheckArgs gc;
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference checks of every primitive and the GNN loss");
  add_config_options(grad_cmd, gc.cfg);
  grad_cmd->add_option("--hidden", gc.arch.hidden)->capture_default_str();
  grad_cmd->add_option("--width", gc.arch.width)->capture_default_str();
  grad_cmd->add_option("--samples", gc.samples, "blocks in the loss batch")->capture_default_str();
  grad_cmd->add_option("--weights", gc.weights, "random GNN weights to probe")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  if (*train_gnn_cmd) return guarded([&] { return run_train_gnn(tg); });
  if (*gen_cmd) return guarded([&] { return run_gen_dataset(gd); });
  if (*train_cnn_cmd) return guarded([&] { return run_train_cnn(tc); });
  if (*eval_cmd) return guarded([&] { return run_eval(ev); });
  if (*sweep_cmd) return guarded([&] { return run_sweep_cmd(sw); });
  if (*grad_cmd) return guarded([&] { return run_grad_check(gc); });
  return kUnexpected;
}
