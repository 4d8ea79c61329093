// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/autodiff/adam.hpp"
#include "cfmimo/autodiff/tape.hpp"
#include "cfmimo/container.hpp"
#include "cfmimo/gnn.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/subsets.hpp"

namespace cfmimo {

struct CnnArch {
  int filters = 50;
  int dense = 128;
};

// Spatial sizes through the pipeline for a 2N x K input.
struct CnnShapes {
  std::size_t rows = 0, cols = 0;          // input 2N x K
  std::size_t kernel1_cols = 0;            // 2, or 1 when K == 1
  std::size_t conv1_rows = 0, conv1_cols = 0;
  std::size_t conv2_rows = 0, conv2_cols = 0;
  std::size_t pool_rows = 0, pool_cols = 0;
  std::size_t flat = 0;
  std::size_t classes = 0;
};

// Throws UnsupportedConfiguration when N < 3 (the two 3-row filters need
// 2N >= 5).
CnnShapes cnn_shapes(int n, int m, int k, int filters);

// 2N x K row-major input: rows 0..N-1 hold Re(H_i), rows N..2N-1 Im(H_i).
std::vector<double> selection_features(const Eigen::MatrixXcd& h_hat_full);

// 1-based label of the largest entry; ties go to the lowest index.
std::int64_t argmax_label(std::span<const double> probabilities);

struct CnnNet {
  ad::Parameter conv1_w, conv1_b;  // [F, 1, 3, kw], [F]
  ad::Parameter conv2_w, conv2_b;  // [F, F, 3, 1], [F]
  ad::Parameter fc1_w, fc1_b;      // [flat, dense], [dense]
  ad::Parameter fc2_w, fc2_b;      // [dense, C], [C]

  std::vector<ad::Parameter*> parameters();
};

// One classifier per AP, all with the same architecture.
class CnnModel {
 public:
  CnnModel() = default;
  CnnModel(const SystemConfig& config, CnnArch arch, std::uint64_t seed);

  int aps() const { return aps_; }
  int antennas() const { return n_; }
  int active() const { return m_; }
  int users() const { return k_; }
  const CnnArch& arch() const { return arch_; }
  const CnnShapes& shapes() const { return shapes_; }
  double input_scale() const { return input_scale_; }

  CnnNet& net(int ap) { return nets_.at(static_cast<std::size_t>(ap)); }
  std::vector<ad::Parameter*> parameters(int ap) { return net(ap).parameters(); }

  // x [B, 1, 2N, K] of scaled features -> logits [B, C].
  ad::Var logits(ad::Tape& tape, int ap, ad::Var x);

  // Unscaled 2N x K features (selection_features layout) -> softmax
  // probabilities of length C.
  std::vector<double> probabilities(int ap, std::span<const double> features) const;
  std::vector<double> probabilities(int ap, const Eigen::MatrixXcd& h_hat_full) const;
  AntennaSubset predict(int ap, const Eigen::MatrixXcd& h_hat_full) const;

  // Packs unscaled feature vectors into a scaled [B, 1, 2N, K] tensor.
  ad::Tensor batch_input(const std::vector<const std::vector<double>*>& features) const;

  WeightFile to_file() const;
  static CnnModel from_file(const WeightFile& file);
  void save(const std::string& path) const;
  static CnnModel load(const std::string& path, const SystemConfig& config);

 private:
  void allocate();
  void init_weights(RandomStream& rng);

  int aps_ = 0, n_ = 0, m_ = 0, k_ = 0;
  CnnArch arch_;
  CnnShapes shapes_;
  double input_scale_ = 1.0;
  std::uint64_t seed_ = 0;
  std::vector<CnnNet> nets_;
};

struct AsSample {
  std::vector<double> x;  // 2N x K, unscaled
  std::int64_t label = 1;
};

struct AsDataset {
  int I = 0, N = 0, M = 0, K = 0;
  std::string config_text;
  std::uint64_t gnn_checksum = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<AsSample>> per_ap;  // [I][T]

  std::size_t samples() const { return per_ap.empty() ? 0 : per_ap.front().size(); }
};

// Block t uses RandomStream(seed).child(t), so the result does not depend on
// the thread count.
AsDataset generate_dataset(int samples, const GnnModel& gnn, const SystemConfig& config, std::uint64_t seed,
                           unsigned threads = 0);

//   "CFMD", u32 version, i64 I N M K T, str config, u64 gnn checksum,
//   u64 seed, then for every AP and sample: f64 x[2N*K], i64 label;
//   u64 FNV-1a of everything before.
std::string encode_dataset(const AsDataset& dataset);
AsDataset decode_dataset(std::string_view bytes);
void save_dataset(const AsDataset& dataset, const std::string& path);
AsDataset load_dataset(const std::string& path);

struct CnnTrainConfig {
  int epochs = 50;
  int batch = 64;
  double validation_fraction = 0.1;
  ad::LearningRateSchedule schedule{1e-3, 1.0, 100};
  std::uint64_t seed = 1;
};

struct CnnEpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;      // NaN without a validation split
  double validation_accuracy = 0.0;  // NaN without a validation split
};

struct CnnTrainLog {
  std::vector<std::vector<CnnEpochReport>> per_ap;
};

using CnnEpochCallback = std::function<void(int ap, const CnnEpochReport&)>;

// Trains each AP's classifier on its own samples with a seeded split.
CnnTrainLog train_cnn(CnnModel& model, const AsDataset& dataset, const CnnTrainConfig& train,
                      const CnnEpochCallback& on_epoch = {});

struct Accuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

Accuracy evaluate_cnn(const CnnModel& model, int ap, const std::vector<AsSample>& samples,
                      std::span<const std::size_t> indices);

}  // namespace cfmimo
