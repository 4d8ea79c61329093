// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmimo/autodiff/adam.hpp"
#include "cfmimo/autodiff/ops.hpp"
#include "cfmimo/autodiff/tape.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/container.hpp"
#include "cfmimo/random.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/search.hpp"

namespace cfmimo {

struct GnnArch {
  int layers = 2;
  int hidden = 800;  // first layer of every MLP
  int width = 400;   // second layer of every MLP, i.e. node feature width
  double leaky_slope = 0.1;
};

struct Linear {
  ad::Parameter weight;  // [in, out]
  ad::Parameter bias;    // [out]
};

// in -> hidden -> width, Leaky ReLU after both layers.
struct Mlp {
  Linear first;
  Linear second;
};

struct GnnLayerWeights {
  Mlp encode;     // applied to every node's previous feature vector
  Mlp aggregate;  // applied to [neighbor max | own encoding]
};

// Weights of the graph network owned by one AP.
struct GnnWeights {
  std::vector<GnnLayerWeights> layers;
  Linear readout;  // width -> 2M
};

// Scale applied to channel estimates before they enter a network: the inverse
// amplitude of the large-scale gain at the AP ring radius, which brings
// features to order one.
double feature_scale(const SystemConfig& config);

// K x 2M node features, row k = input_scale * [Re h_{i,k} | Im h_{i,k}].
ad::Tensor build_features(const Eigen::MatrixXcd& h_hat_restricted, double input_scale);

// Rows of `rows` [G*K, 2M] for group g as an M x K complex matrix.
Eigen::MatrixXcd rows_to_precoder(const ad::Tensor& rows, std::size_t group, std::size_t users);

ad::Var mlp_forward(ad::Tape& tape, Mlp& mlp, ad::Var x, double slope);

// One graph convolution over groups of `users` fully connected nodes.
ad::Var layer_forward(ad::Tape& tape, GnnLayerWeights& layer, ad::Var features, std::size_t users, double slope);

// Feed-forward to 2M reals per node, then per-group Frobenius normalization
// to total power p_max_mw.
ad::Var readout(ad::Tape& tape, Linear& readout, ad::Var final_features, std::size_t users, double p_max_mw);

// Per-AP batched network inputs for G sampled coherence blocks.
struct GnnBatch {
  std::size_t groups = 0;
  std::vector<ad::Tensor> features;  // per AP [G*K, 2M], scaled
  std::vector<ad::Tensor> channels;  // per AP [G*K, 2M], physical units
  std::vector<ad::Tensor> err_var;   // per AP [G, K]
};

// Draws `samples` independent blocks with uniformly random subsets per AP.
GnnBatch sample_gnn_batch(const SystemConfig& config, double input_scale, int samples, RandomStream& rng);

// Per-sample sum SE [G] of the batched precoders w_rows (per AP [G*K, 2M]).
ad::Var batched_sum_se(ad::Tape& tape, const std::vector<ad::Var>& w_rows, const std::vector<ad::Var>& channels,
                       const std::vector<ad::Var>& err_var, std::size_t users, const SystemConfig& config);

class GnnModel {
 public:
  GnnModel() = default;
  // Fresh weights: uniform in +-sqrt(6 / fan_in), zero biases.
  GnnModel(const SystemConfig& config, GnnArch arch, std::uint64_t seed);

  int aps() const { return aps_; }
  int antennas() const { return n_; }
  int active() const { return m_; }
  int users() const { return k_; }
  const GnnArch& arch() const { return arch_; }
  double input_scale() const { return input_scale_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<ad::Parameter*> parameters();
  GnnWeights& weights(int ap) { return per_ap_.at(ap); }

  // Batched forward of AP ap's network: features [G*K, 2M] -> precoders
  // [G*K, 2M] with every group at total power p_max_mw.
  ad::Var forward(ad::Tape& tape, int ap, ad::Var features, double p_max_mw);

  // -(1/G) sum_g sum_k R_k over the batch; gradients reach all I networks.
  ad::Var loss(ad::Tape& tape, const GnnBatch& batch, const SystemConfig& config);

  // W_i (M x K) from AP ap's own restricted estimate only.
  Eigen::MatrixXcd infer_precoding(int ap, const Eigen::MatrixXcd& h_hat_restricted, double p_max_mw) const;

  WeightFile to_file() const;
  static GnnModel from_file(const WeightFile& file);
  void save(const std::string& path) const;
  // Rejects files whose (I, N, M, K) differ from config with ConfigError.
  static GnnModel load(const std::string& path, const SystemConfig& config);
  std::uint64_t checksum() const;

 private:
  void init_weights(RandomStream& rng);

  int aps_ = 0, n_ = 0, m_ = 0, k_ = 0;
  GnnArch arch_;
  double input_scale_ = 1.0;
  std::uint64_t seed_ = 0;
  std::vector<GnnWeights> per_ap_;
};

struct GnnTrainConfig {
  int epochs = 100;
  int iterations = 100;  // per epoch
  int samples = 600;     // blocks per iteration
  ad::LearningRateSchedule schedule;
};

struct GnnTrainLog {
  std::vector<double> epoch_mean_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Unsupervised training on the negative sum SE. Throws NumericalError if the
// loss turns non-finite.
GnnTrainLog train_gnn(GnnModel& model, const GnnTrainConfig& train, const SystemConfig& config, RandomStream& rng,
                      const EpochCallback& on_epoch = {});

struct SpotCheck {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

// Compares the backpropagated loss gradient with a central difference at
// `count` weights drawn uniformly from all of the model's parameters.
std::vector<SpotCheck> gnn_gradient_spot_check(GnnModel& model, const GnnBatch& batch, const SystemConfig& config,
                                               int count, RandomStream& rng, double step = 1e-5);

class GnnOracle final : public PrecoderOracle {
 public:
  explicit GnnOracle(const GnnModel& model) : model_(model) {}

  bool is_local() const override { return true; }
  PrecodingStack precode(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                         const std::vector<AntennaSubset>& subsets, const SystemConfig& config) const override;
  Eigen::MatrixXcd precode_ap(int ap, const Eigen::MatrixXcd& h_hat_restricted, const Eigen::MatrixXd& err_var,
                              const SystemConfig& config) const override;

 private:
  const GnnModel& model_;
};

}  // namespace cfmimo
