// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cfmimo/autodiff/ops.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/search.hpp"

namespace cfmimo {

namespace {

constexpr char kDatasetMagic[4] = {'C', 'F', 'M', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;

void he_fill(ad::Parameter& w, ad::Parameter& b, std::size_t fan_in, RandomStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.value.data) v = rng.uniform(-bound, bound);
  std::fill(b.value.data.begin(), b.value.data.end(), 0.0);
}

std::size_t pooled(std::size_t extent) { return extent < 2 ? extent : extent / 2; }

}  // namespace

CnnShapes cnn_shapes(int n, int m, int k, int filters) {
  if (n < 3) throw UnsupportedConfiguration("the selection CNN needs N >= 3");
  if (k < 1 || filters < 1) throw ConfigError("the selection CNN needs K >= 1 and at least one filter");
  CnnShapes s;
  s.rows = static_cast<std::size_t>(2 * n);
  s.cols = static_cast<std::size_t>(k);
  s.kernel1_cols = k >= 2 ? 2 : 1;
  s.conv1_rows = s.rows - 2;
  s.conv1_cols = s.cols - s.kernel1_cols + 1;
  s.conv2_rows = s.conv1_rows - 2;
  s.conv2_cols = s.conv1_cols;
  s.pool_rows = pooled(s.conv2_rows);
  s.pool_cols = pooled(s.conv2_cols);
  s.flat = static_cast<std::size_t>(filters) * s.pool_rows * s.pool_cols;
  s.classes = static_cast<std::size_t>(count_subsets(n, m));
  return s;
}

std::vector<double> selection_features(const Eigen::MatrixXcd& h_hat_full) {
  const auto n = h_hat_full.rows();
  const auto k = h_hat_full.cols();
  std::vector<double> x(static_cast<std::size_t>(2 * n * k));
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index u = 0; u < k; ++u) {
      x[static_cast<std::size_t>(a * k + u)] = h_hat_full(a, u).real();
      x[static_cast<std::size_t>((n + a) * k + u)] = h_hat_full(a, u).imag();
    }
  }
  return x;
}

std::int64_t argmax_label(std::span<const double> probabilities) {
  if (probabilities.empty()) throw InvalidInput("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t j = 1; j < probabilities.size(); ++j) {
    if (probabilities[j] > probabilities[best]) best = j;
  }
  return static_cast<std::int64_t>(best) + 1;
}

std::vector<ad::Parameter*> CnnNet::parameters() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

CnnModel::CnnModel(const SystemConfig& config, CnnArch arch, std::uint64_t seed)
    : aps_(config.I), n_(config.N), m_(config.M), k_(config.K), arch_(arch), input_scale_(feature_scale(config)),
      seed_(seed) {
  if (arch.dense < 1) throw ConfigError("the selection CNN needs a positive dense width");
  allocate();
  RandomStream rng(seed);
  init_weights(rng);
}

void CnnModel::allocate() {
  shapes_ = cnn_shapes(n_, m_, k_, arch_.filters);
  const auto f = static_cast<std::size_t>(arch_.filters);
  const auto d = static_cast<std::size_t>(arch_.dense);
  nets_.clear();
  for (int i = 0; i < aps_; ++i) {
    const std::string p = "ap" + std::to_string(i) + ".";
    CnnNet net;
    net.conv1_w = ad::Parameter(p + "conv1.weight", ad::Tensor({f, 1, 3, shapes_.kernel1_cols}));
    net.conv1_b = ad::Parameter(p + "conv1.bias", ad::Tensor({f}));
    net.conv2_w = ad::Parameter(p + "conv2.weight", ad::Tensor({f, f, 3, 1}));
    net.conv2_b = ad::Parameter(p + "conv2.bias", ad::Tensor({f}));
    net.fc1_w = ad::Parameter(p + "fc1.weight", ad::Tensor({shapes_.flat, d}));
    net.fc1_b = ad::Parameter(p + "fc1.bias", ad::Tensor({d}));
    net.fc2_w = ad::Parameter(p + "fc2.weight", ad::Tensor({d, shapes_.classes}));
    net.fc2_b = ad::Parameter(p + "fc2.bias", ad::Tensor({shapes_.classes}));
    nets_.push_back(std::move(net));
  }
}

void CnnModel::init_weights(RandomStream& rng) {
  const auto f = static_cast<std::size_t>(arch_.filters);
  for (auto& net : nets_) {
    he_fill(net.conv1_w, net.conv1_b, 3 * shapes_.kernel1_cols, rng);
    he_fill(net.conv2_w, net.conv2_b, 3 * f, rng);
    he_fill(net.fc1_w, net.fc1_b, shapes_.flat, rng);
    he_fill(net.fc2_w, net.fc2_b, static_cast<std::size_t>(arch_.dense), rng);
  }
}

ad::Var CnnModel::logits(ad::Tape& tape, int ap, ad::Var x) {
  auto& net = nets_.at(static_cast<std::size_t>(ap));
  const auto& s = tape.shape(x);
  if (s.size() != 4 || s[1] != 1 || s[2] != shapes_.rows || s[3] != shapes_.cols) {
    throw InvalidInput("CNN input " + ad::shape_string(s) + " does not match the trained (N, K)");
  }
  auto h = ad::relu(tape, ad::conv2d_valid(tape, x, tape.param(net.conv1_w), tape.param(net.conv1_b)));
  h = ad::relu(tape, ad::conv2d_valid(tape, h, tape.param(net.conv2_w), tape.param(net.conv2_b)));
  h = ad::flatten(tape, ad::max_pool2x2(tape, h));
  h = ad::relu(tape, ad::affine(tape, h, tape.param(net.fc1_w), tape.param(net.fc1_b)));
  return ad::affine(tape, h, tape.param(net.fc2_w), tape.param(net.fc2_b));
}

ad::Tensor CnnModel::batch_input(const std::vector<const std::vector<double>*>& features) const {
  const std::size_t per = shapes_.rows * shapes_.cols;
  ad::Tensor x({features.size(), 1, shapes_.rows, shapes_.cols});
  for (std::size_t b = 0; b < features.size(); ++b) {
    if (features[b]->size() != per) throw InvalidInput("CNN feature length does not match 2N x K");
    for (std::size_t j = 0; j < per; ++j) x[b * per + j] = input_scale_ * (*features[b])[j];
  }
  return x;
}

std::vector<double> CnnModel::probabilities(int ap, std::span<const double> features) const {
  std::vector<double> copy(features.begin(), features.end());
  ad::Tape tape(false);
  auto out = const_cast<CnnModel*>(this)->logits(tape, ap, tape.constant(batch_input({&copy})));
  return ad::softmax_rows(tape.value(out));
}

std::vector<double> CnnModel::probabilities(int ap, const Eigen::MatrixXcd& h_hat_full) const {
  if (h_hat_full.rows() != n_ || h_hat_full.cols() != k_) {
    throw InvalidInput("CNN input must be the full N x K estimate");
  }
  return probabilities(ap, selection_features(h_hat_full));
}

AntennaSubset CnnModel::predict(int ap, const Eigen::MatrixXcd& h_hat_full) const {
  return make_subset(argmax_label(probabilities(ap, h_hat_full)), n_, m_);
}

WeightFile CnnModel::to_file() const {
  WeightFile file;
  file.header.kind = ModelKind::CNN;
  file.header.I = aps_;
  file.header.N = n_;
  file.header.M = m_;
  file.header.K = k_;
  file.header.layers = 0;
  file.header.widths = {arch_.filters, arch_.dense, static_cast<std::int64_t>(shapes_.kernel1_cols)};
  file.header.seed = seed_;
  file.header.input_scale = input_scale_;
  for (auto& net : nets_) {
    for (auto* p : const_cast<CnnNet&>(net).parameters()) file.tensors.emplace_back(p->name, p->value);
  }
  return file;
}

CnnModel CnnModel::from_file(const WeightFile& file) {
  const auto& hd = file.header;
  if (hd.kind != ModelKind::CNN) throw FormatError("weight file does not hold a CNN");
  if (hd.widths.size() != 3 || hd.I < 1 || hd.N < 3 || hd.M < 1 || hd.M > hd.N || hd.K < 1) {
    throw FormatError("CNN header is malformed");
  }
  CnnModel model;
  model.aps_ = static_cast<int>(hd.I);
  model.n_ = static_cast<int>(hd.N);
  model.m_ = static_cast<int>(hd.M);
  model.k_ = static_cast<int>(hd.K);
  model.arch_.filters = static_cast<int>(hd.widths[0]);
  model.arch_.dense = static_cast<int>(hd.widths[1]);
  model.input_scale_ = hd.input_scale;
  model.seed_ = hd.seed;
  model.allocate();
  if (static_cast<std::int64_t>(model.shapes_.kernel1_cols) != hd.widths[2]) {
    throw FormatError("CNN first-filter width does not match K");
  }
  std::size_t t = 0;
  for (auto& net : model.nets_) {
    for (auto* p : net.parameters()) {
      if (t >= file.tensors.size()) throw FormatError("CNN file has too few tensors");
      const auto& [name, tensor] = file.tensors[t++];
      if (name != p->name || tensor.shape != p->value.shape) {
        throw FormatError("CNN tensor " + name + " " + ad::shape_string(tensor.shape) + " does not match expected " +
                          p->name + " " + ad::shape_string(p->value.shape));
      }
      p->value.data = tensor.data;
    }
  }
  if (t != file.tensors.size()) throw FormatError("CNN file has extra tensors");
  return model;
}

void CnnModel::save(const std::string& path) const { write_file(path, encode_weights(to_file())); }

CnnModel CnnModel::load(const std::string& path, const SystemConfig& config) {
  CnnModel model = from_file(decode_weights(read_file(path)));
  if (model.aps_ != config.I || model.n_ != config.N || model.m_ != config.M || model.k_ != config.K) {
    std::ostringstream os;
    os << "CNN weights " << path << " were trained for (I,N,M,K)=(" << model.aps_ << ',' << model.n_ << ','
       << model.m_ << ',' << model.k_ << "), config has (" << config.I << ',' << config.N << ',' << config.M << ','
       << config.K << ')';
    throw ConfigError(os.str());
  }
  return model;
}

AsDataset generate_dataset(int samples, const GnnModel& gnn, const SystemConfig& config, std::uint64_t seed,
                           unsigned threads) {
  config.validate();
  if (samples < 1) throw ConfigError("dataset needs at least one sample");
  if (gnn.aps() != config.I || gnn.antennas() != config.N || gnn.active() != config.M || gnn.users() != config.K) {
    throw ConfigError("GNN dimensions do not match the dataset config");
  }
  AsDataset ds;
  ds.I = config.I;
  ds.N = config.N;
  ds.M = config.M;
  ds.K = config.K;
  ds.config_text = config_to_text(config);
  ds.gnn_checksum = gnn.checksum();
  ds.seed = seed;
  const auto t_count = static_cast<std::size_t>(samples);
  ds.per_ap.assign(static_cast<std::size_t>(config.I), std::vector<AsSample>(t_count));

  const GnnOracle oracle(gnn);
  const RandomStream root(seed);
  parallel_for(t_count, threads ? threads : default_threads(), [&](std::size_t t) {
    RandomStream rng = root.child(t);
    Realization real = draw_realization(config, rng);
    SelectionResult sel = iterative_search(real.channels.h_hat, real.channels.err_var, oracle, config);
    for (int i = 0; i < config.I; ++i) {
      auto& sample = ds.per_ap[static_cast<std::size_t>(i)][t];
      sample.x = selection_features(real.channels.h_hat[static_cast<std::size_t>(i)]);
      sample.label = sel.subsets[static_cast<std::size_t>(i)].label;
    }
  });
  return ds;
}

std::string encode_dataset(const AsDataset& ds) {
  ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 4));
  w.u32(kDatasetVersion);
  for (int v : {ds.I, ds.N, ds.M, ds.K}) w.i64(v);
  w.i64(static_cast<std::int64_t>(ds.samples()));
  w.str(ds.config_text);
  w.u64(ds.gnn_checksum);
  w.u64(ds.seed);
  const std::size_t per = static_cast<std::size_t>(2 * ds.N * ds.K);
  for (const auto& ap : ds.per_ap) {
    if (ap.size() != ds.samples()) throw InvalidInput("every AP must hold the same number of samples");
    for (const auto& s : ap) {
      if (s.x.size() != per) throw InvalidInput("dataset sample has the wrong feature length");
      for (double v : s.x) w.f64(v);
      w.i64(s.label);
    }
  }
  w.seal();
  return w.buffer();
}

AsDataset decode_dataset(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != std::string_view(kDatasetMagic, 4)) throw FormatError("not a dataset file (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  AsDataset ds;
  ds.I = static_cast<int>(r.i64());
  ds.N = static_cast<int>(r.i64());
  ds.M = static_cast<int>(r.i64());
  ds.K = static_cast<int>(r.i64());
  const std::int64_t t = r.i64();
  if (ds.I < 1 || ds.N < 1 || ds.M < 1 || ds.M > ds.N || ds.K < 1 || t < 0) {
    throw FormatError("dataset header is malformed");
  }
  ds.config_text = r.str();
  ds.gnn_checksum = r.u64();
  ds.seed = r.u64();
  const std::int64_t classes = count_subsets(ds.N, ds.M);
  const std::size_t per = static_cast<std::size_t>(2 * ds.N * ds.K);
  ds.per_ap.assign(static_cast<std::size_t>(ds.I), {});
  for (auto& ap : ds.per_ap) {
    ap.resize(static_cast<std::size_t>(t));
    for (auto& s : ap) {
      s.x.resize(per);
      for (auto& v : s.x) v = r.f64();
      s.label = r.i64();
      if (s.label < 1 || s.label > classes) throw FormatError("dataset label out of range");
    }
  }
  r.expect_end();
  return ds;
}

void save_dataset(const AsDataset& dataset, const std::string& path) { write_file(path, encode_dataset(dataset)); }

AsDataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

Accuracy evaluate_cnn(const CnnModel& model, int ap, const std::vector<AsSample>& samples,
                      std::span<const std::size_t> indices) {
  Accuracy acc;
  if (indices.empty()) {
    acc.loss = acc.accuracy = std::numeric_limits<double>::quiet_NaN();
    return acc;
  }
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    std::vector<const std::vector<double>*> feats;
    for (std::size_t j = start; j < end; ++j) feats.push_back(&samples.at(indices[j]).x);
    ad::Tape tape(false);
    auto out = const_cast<CnnModel&>(model).logits(tape, ap, tape.constant(model.batch_input(feats)));
    const auto probs = ad::softmax_rows(tape.value(out));
    const std::size_t c = model.shapes().classes;
    for (std::size_t j = start; j < end; ++j) {
      std::span<const double> p(probs.data() + (j - start) * c, c);
      const std::int64_t label = samples[indices[j]].label;
      if (argmax_label(p) == label) ++correct;
      loss -= std::log(std::max(p[static_cast<std::size_t>(label - 1)], std::numeric_limits<double>::min()));
    }
  }
  acc.loss = loss / static_cast<double>(indices.size());
  acc.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return acc;
}

CnnTrainLog train_cnn(CnnModel& model, const AsDataset& dataset, const CnnTrainConfig& train,
                      const CnnEpochCallback& on_epoch) {
  if (dataset.samples() == 0) throw ConfigError("cannot train on an empty dataset");
  if (dataset.I != model.aps() || dataset.N != model.antennas() || dataset.M != model.active() ||
      dataset.K != model.users()) {
    throw ConfigError("dataset dimensions do not match the CNN");
  }
  if (train.epochs < 1 || train.batch < 1 || train.validation_fraction < 0.0 || train.validation_fraction >= 1.0) {
    throw ConfigError("CNN training needs epochs >= 1, batch >= 1 and a validation fraction in [0, 1)");
  }
  const std::size_t total = dataset.samples();
  const auto n_val = static_cast<std::size_t>(std::floor(train.validation_fraction * static_cast<double>(total)));

  CnnTrainLog log;
  for (int ap = 0; ap < model.aps(); ++ap) {
    const auto& samples = dataset.per_ap[static_cast<std::size_t>(ap)];
    RandomStream rng = RandomStream(train.seed).child(static_cast<std::uint64_t>(ap));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    ad::AdamOptions opts;
    opts.schedule = train.schedule;
    ad::Adam adam(model.parameters(ap), opts);
    std::vector<CnnEpochReport> reports;
    for (int epoch = 0; epoch < train.epochs; ++epoch) {
      std::shuffle(tr.begin(), tr.end(), rng.engine());
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t start = 0; start < tr.size(); start += static_cast<std::size_t>(train.batch)) {
        const std::size_t end = std::min(tr.size(), start + static_cast<std::size_t>(train.batch));
        std::vector<const std::vector<double>*> feats;
        std::vector<int> labels;
        for (std::size_t j = start; j < end; ++j) {
          feats.push_back(&samples[tr[j]].x);
          labels.push_back(static_cast<int>(samples[tr[j]].label - 1));
        }
        ad::Tape tape;
        auto logits = model.logits(tape, ap, tape.constant(model.batch_input(feats)));
        auto loss = ad::softmax_cross_entropy(tape, logits, labels);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value)) {
          std::ostringstream os;
          os << "CNN loss for AP " << ap << " became " << value << " at epoch " << epoch;
          throw NumericalError(os.str());
        }
        const auto& lv = tape.value(logits);
        const std::size_t c = model.shapes().classes;
        for (std::size_t b = 0; b < labels.size(); ++b) {
          std::span<const double> row(lv.data.data() + b * c, c);
          if (argmax_label(row) == labels[b] + 1) ++correct;
        }
        adam.zero_grad();
        tape.backward(loss);
        adam.step();
        loss_sum += value * static_cast<double>(labels.size());
      }
      CnnEpochReport rep;
      rep.epoch = epoch;
      rep.train_loss = loss_sum / static_cast<double>(tr.size());
      rep.train_accuracy = static_cast<double>(correct) / static_cast<double>(tr.size());
      const Accuracy v = evaluate_cnn(model, ap, samples, val);
      rep.validation_loss = v.loss;
      rep.validation_accuracy = v.accuracy;
      reports.push_back(rep);
      if (on_epoch) on_epoch(ap, rep);
    }
    log.per_ap.push_back(std::move(reports));
  }
  return log;
}

}  // namespace cfmimo
