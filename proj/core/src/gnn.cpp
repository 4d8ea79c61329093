// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/gnn.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cfmimo/errors.hpp"
#include "cfmimo/metrics.hpp"

namespace cfmimo {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

Linear make_linear(const std::string& name, std::size_t in, std::size_t out) {
  return Linear{ad::Parameter(name + ".weight", ad::Tensor({in, out})),
                ad::Parameter(name + ".bias", ad::Tensor({out}))};
}

Mlp make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
  return Mlp{make_linear(name + ".0", in, hidden), make_linear(name + ".1", hidden, out)};
}

void glorot_fill(Linear& lin, RandomStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(lin.weight.value.dim(0)));
  for (auto& v : lin.weight.value.data) v = rng.uniform(-bound, bound);
  std::fill(lin.bias.value.data.begin(), lin.bias.value.data.end(), 0.0);
}

template <typename F>
void for_each_linear(GnnWeights& w, F&& f) {
  for (auto& layer : w.layers) {
    f(layer.encode.first);
    f(layer.encode.second);
    f(layer.aggregate.first);
    f(layer.aggregate.second);
  }
  f(w.readout);
}

template <typename F>
void for_each_linear(const GnnWeights& w, F&& f) {
  for_each_linear(const_cast<GnnWeights&>(w), [&](Linear& lin) { f(static_cast<const Linear&>(lin)); });
}

RowMatrix dense(const RowMatrix& x, const Linear& lin) {
  ConstMap w(lin.weight.value.data.data(), lin.weight.value.dim(0), lin.weight.value.dim(1));
  Eigen::Map<const Eigen::RowVectorXd> b(lin.bias.value.data.data(), lin.bias.value.size());
  RowMatrix y = x * w;
  y.rowwise() += b;
  return y;
}

RowMatrix leaky(RowMatrix x, double slope) {
  return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

RowMatrix mlp_eval(const RowMatrix& x, const Mlp& mlp, double slope) {
  return leaky(dense(leaky(dense(x, mlp.first), slope), mlp.second), slope);
}

}  // namespace

double feature_scale(const SystemConfig& config) {
  return 1.0 / std::sqrt(std::pow(10.0, path_loss_db(config.ap_radius_m, config) / 10.0));
}

ad::Tensor build_features(const Eigen::MatrixXcd& h_hat_restricted, double input_scale) {
  const auto m = static_cast<std::size_t>(h_hat_restricted.rows());
  const auto k = static_cast<std::size_t>(h_hat_restricted.cols());
  ad::Tensor x({k, 2 * m});
  for (std::size_t u = 0; u < k; ++u) {
    for (std::size_t a = 0; a < m; ++a) {
      const auto h = h_hat_restricted(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u));
      x[u * 2 * m + a] = input_scale * h.real();
      x[u * 2 * m + m + a] = input_scale * h.imag();
    }
  }
  return x;
}

Eigen::MatrixXcd rows_to_precoder(const ad::Tensor& rows, std::size_t group, std::size_t users) {
  if (rows.rank() != 2 || rows.dim(1) % 2 != 0 || rows.dim(0) < (group + 1) * users) {
    throw InvalidInput("precoder rows have shape " + ad::shape_string(rows.shape));
  }
  const std::size_t m = rows.dim(1) / 2;
  Eigen::MatrixXcd w(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(users));
  for (std::size_t u = 0; u < users; ++u) {
    const double* r = rows.data.data() + (group * users + u) * 2 * m;
    for (std::size_t a = 0; a < m; ++a) {
      w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u)) = {r[a], r[m + a]};
    }
  }
  return w;
}

ad::Var mlp_forward(ad::Tape& tape, Mlp& mlp, ad::Var x, double slope) {
  auto h = ad::leaky_relu(tape, ad::affine(tape, x, tape.param(mlp.first.weight), tape.param(mlp.first.bias)), slope);
  return ad::leaky_relu(tape, ad::affine(tape, h, tape.param(mlp.second.weight), tape.param(mlp.second.bias)),
                        slope);
}

ad::Var layer_forward(ad::Tape& tape, GnnLayerWeights& layer, ad::Var features, std::size_t users, double slope) {
  auto f = mlp_forward(tape, layer.encode, features, slope);
  auto g = ad::neighbor_max(tape, f, users);
  return mlp_forward(tape, layer.aggregate, ad::concat_features(tape, g, f), slope);
}

ad::Var readout(ad::Tape& tape, Linear& lin, ad::Var final_features, std::size_t users, double p_max_mw) {
  auto raw = ad::affine(tape, final_features, tape.param(lin.weight), tape.param(lin.bias));
  return ad::frobenius_normalize(tape, raw, users, std::sqrt(p_max_mw));
}

GnnBatch sample_gnn_batch(const SystemConfig& config, double input_scale, int samples, RandomStream& rng) {
  if (samples <= 0) throw InvalidInput("batch needs at least one sample");
  const auto g = static_cast<std::size_t>(samples);
  const auto k = static_cast<std::size_t>(config.K);
  const auto m = static_cast<std::size_t>(config.M);
  GnnBatch batch;
  batch.groups = g;
  for (int i = 0; i < config.I; ++i) {
    batch.features.emplace_back(ad::Shape{g * k, 2 * m});
    batch.channels.emplace_back(ad::Shape{g * k, 2 * m});
    batch.err_var.emplace_back(ad::Shape{g, k});
  }
  for (std::size_t s = 0; s < g; ++s) {
    Realization real = draw_realization(config, rng);
    auto subsets = random_selection(config, rng);
    auto restricted = restrict_to_subset(real.channels.h_hat, subsets);
    for (int i = 0; i < config.I; ++i) {
      const auto& h = restricted[static_cast<std::size_t>(i)];
      auto& feat = batch.features[static_cast<std::size_t>(i)].data;
      auto& chan = batch.channels[static_cast<std::size_t>(i)].data;
      for (std::size_t u = 0; u < k; ++u) {
        const std::size_t row = (s * k + u) * 2 * m;
        for (std::size_t a = 0; a < m; ++a) {
          const auto z = h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u));
          chan[row + a] = z.real();
          chan[row + m + a] = z.imag();
          feat[row + a] = input_scale * z.real();
          feat[row + m + a] = input_scale * z.imag();
        }
        batch.err_var[static_cast<std::size_t>(i)][s * k + u] = real.channels.err_var(i, static_cast<Eigen::Index>(u));
      }
    }
  }
  return batch;
}

ad::Var batched_sum_se(ad::Tape& tape, const std::vector<ad::Var>& w_rows, const std::vector<ad::Var>& channels,
                       const std::vector<ad::Var>& err_var, std::size_t users, const SystemConfig& config) {
  if (w_rows.empty() || w_rows.size() != channels.size() || w_rows.size() != err_var.size()) {
    throw InvalidInput("batched_sum_se needs one precoder, channel and error tensor per AP");
  }
  const std::size_t groups = tape.shape(w_rows[0]).at(0) / users;
  const std::size_t row_width = tape.shape(w_rows[0]).at(1);

  ad::Var gains{}, err_term{};
  for (std::size_t i = 0; i < w_rows.size(); ++i) {
    auto g = ad::complex_inner(tape, channels[i], w_rows[i], users);
    gains = i == 0 ? g : ad::add(tape, gains, g);

    auto sq = ad::reshape(tape, ad::mul(tape, w_rows[i], w_rows[i]), {groups, users * row_width});
    auto power = ad::broadcast_last(tape, ad::sum_last(tape, sq), users);
    auto e = ad::mul(tape, err_var[i], power);
    err_term = i == 0 ? e : ad::add(tape, err_term, e);
  }
  auto p = ad::modulus_squared(tape, gains);  // [G, K, K]
  auto desired = ad::diagonal(tape, p);
  auto interference = ad::sub(tape, ad::sum_last(tape, p), desired);
  auto denom = ad::add_scalar(tape, ad::add(tape, interference, err_term), config.noise_mw());
  auto se = ad::scale(tape, ad::log2_1p(tape, ad::div(tape, desired, denom)), config.prelog());
  return ad::sum_last(tape, se);
}

GnnModel::GnnModel(const SystemConfig& config, GnnArch arch, std::uint64_t seed)
    : aps_(config.I), n_(config.N), m_(config.M), k_(config.K), arch_(arch), input_scale_(feature_scale(config)),
      seed_(seed) {
  if (arch.layers < 1 || arch.hidden < 1 || arch.width < 1) throw ConfigError("GNN needs positive layers and widths");
  RandomStream rng(seed);
  init_weights(rng);
}

void GnnModel::init_weights(RandomStream& rng) {
  const auto in0 = static_cast<std::size_t>(2 * m_);
  const auto hidden = static_cast<std::size_t>(arch_.hidden);
  const auto width = static_cast<std::size_t>(arch_.width);
  per_ap_.clear();
  for (int i = 0; i < aps_; ++i) {
    GnnWeights w;
    const std::string prefix = "ap" + std::to_string(i);
    for (int l = 0; l < arch_.layers; ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      w.layers.push_back(GnnLayerWeights{make_mlp(lp + ".encode", l == 0 ? in0 : width, hidden, width),
                                         make_mlp(lp + ".aggregate", 2 * width, hidden, width)});
    }
    w.readout = make_linear(prefix + ".readout", width, in0);
    for_each_linear(w, [&](Linear& lin) { glorot_fill(lin, rng); });
    per_ap_.push_back(std::move(w));
  }
}

std::vector<ad::Parameter*> GnnModel::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& w : per_ap_) {
    for_each_linear(w, [&](Linear& lin) {
      out.push_back(&lin.weight);
      out.push_back(&lin.bias);
    });
  }
  return out;
}

ad::Var GnnModel::forward(ad::Tape& tape, int ap, ad::Var features, double p_max_mw) {
  auto& w = per_ap_.at(static_cast<std::size_t>(ap));
  const auto users = static_cast<std::size_t>(k_);
  auto x = features;
  for (auto& layer : w.layers) x = layer_forward(tape, layer, x, users, arch_.leaky_slope);
  return cfmimo::readout(tape, w.readout, x, users, p_max_mw);
}

ad::Var GnnModel::loss(ad::Tape& tape, const GnnBatch& batch, const SystemConfig& config) {
  if (batch.features.size() != static_cast<std::size_t>(aps_)) throw InvalidInput("batch AP count mismatch");
  std::vector<ad::Var> w, h, c;
  for (int i = 0; i < aps_; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    w.push_back(forward(tape, i, tape.constant(batch.features[idx]), config.p_max_mw()));
    h.push_back(tape.constant(batch.channels[idx]));
    c.push_back(tape.constant(batch.err_var[idx]));
  }
  auto per_sample = batched_sum_se(tape, w, h, c, static_cast<std::size_t>(k_), config);
  return ad::scale(tape, ad::sum(tape, per_sample), -1.0 / static_cast<double>(batch.groups));
}

Eigen::MatrixXcd GnnModel::infer_precoding(int ap, const Eigen::MatrixXcd& h_hat_restricted, double p_max_mw) const {
  if (ap < 0 || ap >= aps_) throw InvalidInput("AP index out of range");
  if (h_hat_restricted.rows() != m_ || h_hat_restricted.cols() != k_) {
    throw InvalidInput("GNN input must be M x K");
  }
  const auto& w = per_ap_[static_cast<std::size_t>(ap)];
  const ad::Tensor feat = build_features(h_hat_restricted, input_scale_);
  RowMatrix x = ConstMap(feat.data.data(), k_, 2 * m_);
  const double slope = arch_.leaky_slope;
  for (const auto& layer : w.layers) {
    RowMatrix f = mlp_eval(x, layer.encode, slope);
    RowMatrix g = RowMatrix::Zero(f.rows(), f.cols());
    for (Eigen::Index u = 0; u < f.rows(); ++u) {
      bool first = true;
      for (Eigen::Index v = 0; v < f.rows(); ++v) {
        if (v == u) continue;
        if (first) {
          g.row(u) = f.row(v);
        } else {
          g.row(u) = g.row(u).cwiseMax(f.row(v));
        }
        first = false;
      }
    }
    RowMatrix cat(f.rows(), 2 * f.cols());
    cat << g, f;
    x = mlp_eval(cat, layer.aggregate, slope);
  }
  RowMatrix out = dense(x, w.readout);
  const double norm = out.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("GNN readout has zero or non-finite norm");
  out *= std::sqrt(p_max_mw) / norm;

  Eigen::MatrixXcd result(m_, k_);
  for (int u = 0; u < k_; ++u) {
    for (int a = 0; a < m_; ++a) result(a, u) = {out(u, a), out(u, m_ + a)};
  }
  return result;
}

WeightFile GnnModel::to_file() const {
  WeightFile file;
  file.header.kind = ModelKind::GNN;
  file.header.I = aps_;
  file.header.N = n_;
  file.header.M = m_;
  file.header.K = k_;
  file.header.layers = static_cast<std::uint32_t>(arch_.layers);
  file.header.widths = {arch_.hidden, arch_.width};
  file.header.seed = seed_;
  file.header.input_scale = input_scale_;
  for (const auto& w : per_ap_) {
    for_each_linear(w, [&](const Linear& lin) {
      file.tensors.emplace_back(lin.weight.name, lin.weight.value);
      file.tensors.emplace_back(lin.bias.name, lin.bias.value);
    });
  }
  return file;
}

GnnModel GnnModel::from_file(const WeightFile& file) {
  const auto& hd = file.header;
  if (hd.kind != ModelKind::GNN) throw FormatError("weight file does not hold a GNN");
  if (hd.widths.size() != 2 || hd.layers < 1 || hd.I < 1 || hd.N < 1 || hd.M < 1 || hd.M > hd.N || hd.K < 1) {
    throw FormatError("GNN header is malformed");
  }
  GnnModel model;
  model.aps_ = static_cast<int>(hd.I);
  model.n_ = static_cast<int>(hd.N);
  model.m_ = static_cast<int>(hd.M);
  model.k_ = static_cast<int>(hd.K);
  model.arch_.layers = static_cast<int>(hd.layers);
  model.arch_.hidden = static_cast<int>(hd.widths[0]);
  model.arch_.width = static_cast<int>(hd.widths[1]);
  model.input_scale_ = hd.input_scale;
  model.seed_ = hd.seed;
  RandomStream unused(0);
  model.init_weights(unused);

  auto params = model.parameters();
  if (params.size() != file.tensors.size()) throw FormatError("GNN file has the wrong number of tensors");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& [name, tensor] = file.tensors[p];
    if (name != params[p]->name || tensor.shape != params[p]->value.shape) {
      throw FormatError("GNN tensor " + name + " " + ad::shape_string(tensor.shape) + " does not match expected " +
                        params[p]->name + " " + ad::shape_string(params[p]->value.shape));
    }
    params[p]->value.data = tensor.data;
  }
  return model;
}

void GnnModel::save(const std::string& path) const { write_file(path, encode_weights(to_file())); }

GnnModel GnnModel::load(const std::string& path, const SystemConfig& config) {
  GnnModel model = from_file(decode_weights(read_file(path)));
  if (model.aps_ != config.I || model.n_ != config.N || model.m_ != config.M || model.k_ != config.K) {
    std::ostringstream os;
    os << "GNN weights " << path << " were trained for (I,N,M,K)=(" << model.aps_ << ',' << model.n_ << ','
       << model.m_ << ',' << model.k_ << "), config has (" << config.I << ',' << config.N << ',' << config.M << ','
       << config.K << ')';
    throw ConfigError(os.str());
  }
  return model;
}

std::uint64_t GnnModel::checksum() const { return fnv1a64(encode_weights(to_file())); }

GnnTrainLog train_gnn(GnnModel& model, const GnnTrainConfig& train, const SystemConfig& config, RandomStream& rng,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (model.aps() != config.I || model.antennas() != config.N || model.active() != config.M ||
      model.users() != config.K) {
    throw ConfigError("GNN dimensions do not match the training config");
  }
  if (train.epochs < 1 || train.iterations < 1 || train.samples < 1) {
    throw ConfigError("epochs, iterations and samples must be positive");
  }
  ad::AdamOptions opts;
  opts.schedule = train.schedule;
  ad::Adam adam(model.parameters(), opts);

  GnnTrainLog log;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    double total = 0.0;
    for (int it = 0; it < train.iterations; ++it) {
      GnnBatch batch = sample_gnn_batch(config, model.input_scale(), train.samples, rng);
      ad::Tape tape;
      auto loss = model.loss(tape, batch, config);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "GNN loss became " << value << " at epoch " << epoch << ", iteration " << it
           << " (learning rate " << adam.learning_rate() << ')';
        throw NumericalError(os.str());
      }
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      total += value;
    }
    const double mean_loss = total / train.iterations;
    log.epoch_mean_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return log;
}

std::vector<SpotCheck> gnn_gradient_spot_check(GnnModel& model, const GnnBatch& batch, const SystemConfig& config,
                                               int count, RandomStream& rng, double step) {
  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(model.loss(tape, batch, config));
  }
  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();

  auto loss_value = [&] {
    ad::Tape tape(false);
    return tape.value(model.loss(tape, batch, config))[0];
  };
  std::vector<SpotCheck> out;
  for (int c = 0; c < count; ++c) {
    auto flat = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
    std::size_t p = 0;
    while (flat >= params[p]->value.size()) flat -= params[p++]->value.size();
    double& w = params[p]->value.data[flat];
    const double saved = w;
    const double h = step * std::max(1.0, std::abs(saved));
    w = saved + h;
    const double up = loss_value();
    w = saved - h;
    const double down = loss_value();
    w = saved;
    SpotCheck s;
    s.parameter = params[p]->name;
    s.index = flat;
    s.analytic = params[p]->grad[flat];
    s.numeric = (up - down) / (2.0 * h);
    const double denom = std::max(std::abs(s.analytic), std::abs(s.numeric));
    s.relative_error = denom > 0.0 ? std::abs(s.analytic - s.numeric) / denom : 0.0;
    out.push_back(s);
  }
  for (auto* q : params) q->zero_grad();
  return out;
}

PrecodingStack GnnOracle::precode(const ApMatrices& h_hat_restricted, const Eigen::MatrixXd& err_var,
                                  const std::vector<AntennaSubset>& subsets, const SystemConfig& config) const {
  if (h_hat_restricted.size() != static_cast<std::size_t>(model_.aps())) {
    throw ConfigError("GNN model was trained for a different number of APs");
  }
  PrecodingStack stack;
  stack.subsets = subsets;
  for (int i = 0; i < model_.aps(); ++i) {
    stack.w.push_back(precode_ap(i, h_hat_restricted[static_cast<std::size_t>(i)], err_var, config));
  }
  return stack;
}

Eigen::MatrixXcd GnnOracle::precode_ap(int ap, const Eigen::MatrixXcd& h_hat_restricted, const Eigen::MatrixXd&,
                                       const SystemConfig& config) const {
  if (config.M != model_.active() || config.K != model_.users() || config.N != model_.antennas()) {
    throw ConfigError("GNN model dimensions do not match the config");
  }
  return model_.infer_precoding(ap, h_hat_restricted, config.p_max_mw());
}

}  // namespace cfmimo
