// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cfmimo/baselines.hpp"
#include "cfmimo/cnn.hpp"
#include "cfmimo/gnn.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

enum class Selector { Random, IterativeSearch, CNN };

struct SchemeSpec {
  PrecoderKind precoder = PrecoderKind::MRT;
  Selector selector = Selector::Random;
  std::string label;

  bool operator==(const SchemeSpec&) const = default;
};

// MRT, DistributedMMSE, CentralizedMMSE, GNN (random subsets), GNN+CNN,
// CentralizedMMSE+IS and the GNN+IS reference, in that order.
const std::vector<SchemeSpec>& standard_schemes();
SchemeSpec parse_scheme(const std::string& label);
std::vector<SchemeSpec> parse_schemes(const std::string& comma_list);

bool needs_gnn(const SchemeSpec& scheme);
bool needs_cnn(const SchemeSpec& scheme);

// Complex scalars moved over the fronthaul per coherence block. Throws
// InvalidInput for combinations without an accounting (e.g. GNN+IS, whose
// search needs every AP's precoder at one place).
std::int64_t exchange_count(const SchemeSpec& scheme, const SystemConfig& config);

struct Models {
  const GnnModel* gnn = nullptr;
  const CnnModel* cnn = nullptr;
};

struct PointResult {
  SchemeSpec scheme;
  int realizations = 0;
  double mean_sum_se = 0.0;
  double std_sum_se = 0.0;  // sample standard deviation across realizations
  double mean_select_ms = 0.0;
  double mean_precode_ms = 0.0;
  double mean_time_ms = 0.0;
  bool power_ok = true;  // every stack met the per-AP budget exactly
  std::vector<double> sum_se;  // per realization, in realization order
};

// Evaluates every scheme on the same realizations. Realization r draws its
// network from RandomStream(seed).child(r).child(0); random subsets come from
// .child(1), so all random-selection schemes see the same subsets.
std::vector<PointResult> run_point(const SystemConfig& config, const std::vector<SchemeSpec>& schemes,
                                   int realizations, std::uint64_t seed, const Models& models,
                                   unsigned threads = 0);

enum class SweepParam { K, P_max, M, N, I };

SweepParam parse_sweep_param(const std::string& name);
std::string to_string(SweepParam p);
void apply_sweep_value(SystemConfig& config, SweepParam p, double value);

struct ModelTraining {
  GnnArch gnn_arch;
  GnnTrainConfig gnn;
  CnnArch cnn_arch;
  CnnTrainConfig cnn;
  int dataset_samples = 3000;
};

struct SweepSpec {
  SweepParam param = SweepParam::K;
  std::vector<double> values;
  int realizations = 1000;
  std::vector<SchemeSpec> schemes;
  std::uint64_t seed = 1;
  std::string weights_dir = "weights";
  bool train_missing = false;
  ModelTraining training;
  unsigned threads = 0;
};

struct SweepRow {
  double value = 0.0;
  PointResult point;
  double time_ratio = 0.0;  // mean_time_ms relative to the first scheme of the point
  std::string exchange;     // integer or "NA"
  std::uint64_t seed = 0;
};

std::string gnn_weights_name(const SystemConfig& config);
std::string cnn_weights_name(const SystemConfig& config);

// Loads (or, with train_missing, trains and saves) the models the schemes need.
struct LoadedModels {
  std::unique_ptr<GnnModel> gnn;
  std::unique_ptr<CnnModel> cnn;
  Models view() const { return {gnn.get(), cnn.get()}; }
};
LoadedModels prepare_models(const SystemConfig& config, const std::vector<SchemeSpec>& schemes,
                            const std::string& weights_dir, bool train_missing, const ModelTraining& training,
                            std::uint64_t seed, std::ostream* progress = nullptr);

std::vector<SweepRow> make_rows(double value, const std::vector<PointResult>& points, const SystemConfig& config,
                                std::uint64_t seed);

const std::string& csv_header();
std::string csv_row(const SweepRow& row);

// Streams the header and each row to csv as soon as it is known, so a failing
// point leaves the completed rows behind.
std::vector<SweepRow> run_sweep(const SystemConfig& base, const SweepSpec& spec, std::ostream& csv,
                                std::ostream* progress = nullptr);

// Matplotlib script that plots mean_sum_se against value per scheme.
std::string plot_script(const std::string& csv_path, const std::string& x_label);

}  // namespace cfmimo
