// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cfmimo/cnn.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/gnn.hpp"
#include "cfmimo/search.hpp"
#include "support.hpp"

using namespace cfmimo;

namespace {

const GnnArch kTinyGnn{1, 16, 8, 0.1};
const CnnArch kSmallCnn{8, 32};

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cfmimo_cnn_test_" + name)).string();
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST(CnnShapes, DefaultPipeline) {
  const auto s = cnn_shapes(8, 5, 4, 50);
  EXPECT_EQ(s.rows, 16u);
  EXPECT_EQ(s.cols, 4u);
  EXPECT_EQ(s.kernel1_cols, 2u);
  EXPECT_EQ(s.conv1_rows, 14u);
  EXPECT_EQ(s.conv1_cols, 3u);
  EXPECT_EQ(s.conv2_rows, 12u);
  EXPECT_EQ(s.conv2_cols, 3u);
  EXPECT_EQ(s.pool_rows, 6u);
  EXPECT_EQ(s.pool_cols, 1u);
  EXPECT_EQ(s.flat, 300u);
  EXPECT_EQ(s.classes, 56u);
}

TEST(CnnShapes, SmallArraysAndSingleUser) {
  const auto one = cnn_shapes(4, 2, 1, 5);
  EXPECT_EQ(one.kernel1_cols, 1u);
  EXPECT_EQ(one.conv2_cols, 1u);
  EXPECT_EQ(one.pool_cols, 1u);
  EXPECT_EQ(one.pool_rows, 2u);
  EXPECT_EQ(one.classes, 6u);
  const auto min = cnn_shapes(3, 1, 2, 4);
  EXPECT_EQ(min.conv2_rows, 2u);
  EXPECT_EQ(min.pool_rows, 1u);
  EXPECT_THROW(cnn_shapes(2, 1, 2, 4), UnsupportedConfiguration);
}

TEST(CnnFeatures, Layout) {
  Eigen::MatrixXcd h(2, 3);
  h << std::complex<double>(1, -1), std::complex<double>(2, -2), std::complex<double>(3, -3),
      std::complex<double>(4, -4), std::complex<double>(5, -5), std::complex<double>(6, -6);
  EXPECT_EQ(selection_features(h), (std::vector<double>{1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -6}));
}

TEST(CnnFeatures, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax_label(std::vector<double>{0.1, 0.4, 0.4, 0.1}), 2);
  EXPECT_EQ(argmax_label(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 1);
  EXPECT_EQ(argmax_label(std::vector<double>{0.0, 0.0, 1.0}), 3);
  EXPECT_THROW(argmax_label(std::vector<double>{}), InvalidInput);
}

TEST(CnnModel, ProbabilitiesFormASimplex) {
  const SystemConfig c;
  const CnnModel model(c, CnnArch{}, 1);
  EXPECT_EQ(model.shapes().classes, 56u);
  RandomStream rng(2);
  for (int t = 0; t < 5; ++t) {
    const auto real = draw_realization(c, rng);
    for (int i = 0; i < c.I; ++i) {
      const auto p = model.probabilities(i, real.channels.h_hat[i]);
      ASSERT_EQ(p.size(), 56u);
      double total = 0.0;
      for (double v : p) {
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      const auto s = model.predict(i, real.channels.h_hat[i]);
      EXPECT_EQ(s.label, argmax_label(p));
      EXPECT_EQ(s.members.size(), 5u);
    }
  }
}

TEST(CnnModel, BatchedLogitsMatchSingleSamples) {
  const auto c = testkit::desk_config();
  CnnModel model(c, kSmallCnn, 3);
  RandomStream rng(4);
  std::vector<std::vector<double>> feats;
  for (int b = 0; b < 4; ++b) feats.push_back(selection_features(draw_realization(c, rng).channels.h_hat[0]));
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  ad::Tape tape(false);
  const auto& lv = tape.value(model.logits(tape, 0, tape.constant(model.batch_input(ptrs))));
  const std::size_t classes = model.shapes().classes;
  for (std::size_t b = 0; b < feats.size(); ++b) {
    const auto p = model.probabilities(0, feats[b]);
    double mx = -1e300;
    for (std::size_t j = 0; j < classes; ++j) mx = std::max(mx, lv[b * classes + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(lv[b * classes + j] - mx);
    for (std::size_t j = 0; j < classes; ++j) EXPECT_NEAR(p[j], std::exp(lv[b * classes + j] - mx) / z, 1e-12);
  }
  ad::Tape bad(false);
  EXPECT_THROW(model.logits(bad, 0, bad.constant(ad::Tensor({1, 1, 6, 3}))), InvalidInput);
}

TEST(CnnPersistence, SaveLoadIsExact) {
  const auto c = testkit::desk_config();
  const CnnModel model(c, kSmallCnn, 5);
  const auto path = temp_path("roundtrip.cfw");
  model.save(path);
  const auto loaded = CnnModel::load(path, c);
  EXPECT_EQ(loaded.arch().filters, kSmallCnn.filters);
  EXPECT_EQ(loaded.arch().dense, kSmallCnn.dense);
  RandomStream rng(6);
  const auto h = draw_realization(c, rng).channels.h_hat;
  for (int i = 0; i < c.I; ++i) EXPECT_EQ(loaded.probabilities(i, h[i]), model.probabilities(i, h[i]));
  auto other = c;
  other.M = 3;
  EXPECT_THROW(CnnModel::load(path, other), ConfigError);
  std::filesystem::remove(path);

  auto file = model.to_file();
  file.header.kind = ModelKind::GNN;
  EXPECT_THROW(CnnModel::from_file(file), FormatError);
  file = model.to_file();
  file.tensors.pop_back();
  EXPECT_THROW(CnnModel::from_file(file), FormatError);
}

TEST(Dataset, LabelsComeFromIterativeSearch) {
  const auto c = testkit::desk_config();
  const GnnModel gnn(c, kTinyGnn, 7);
  const auto ds = generate_dataset(6, gnn, c, 8, 1);
  ASSERT_EQ(ds.samples(), 6u);
  EXPECT_EQ(ds.gnn_checksum, gnn.checksum());
  EXPECT_EQ(parse_config(ds.config_text), c);
  const GnnOracle oracle(gnn);
  for (std::size_t t = 0; t < 6; ++t) {
    RandomStream rng = RandomStream(8).child(t);
    const auto real = draw_realization(c, rng);
    const auto sel = iterative_search(real.channels.h_hat, real.channels.err_var, oracle, c);
    for (int i = 0; i < c.I; ++i) {
      EXPECT_EQ(ds.per_ap[i][t].label, sel.subsets[i].label);
      EXPECT_EQ(ds.per_ap[i][t].x, selection_features(real.channels.h_hat[i]));
    }
  }
}

TEST(Dataset, IndependentOfThreadCount) {
  const auto c = testkit::desk_config();
  const GnnModel gnn(c, kTinyGnn, 9);
  const auto one = encode_dataset(generate_dataset(12, gnn, c, 10, 1));
  const auto three = encode_dataset(generate_dataset(12, gnn, c, 10, 3));
  EXPECT_EQ(one, three);
}

TEST(Dataset, FullArrayHasOneLabel) {
  auto c = testkit::desk_config();
  c.M = c.N;
  const GnnModel gnn(c, kTinyGnn, 11);
  const auto ds = generate_dataset(4, gnn, c, 12, 1);
  for (const auto& ap : ds.per_ap) {
    for (const auto& s : ap) EXPECT_EQ(s.label, 1);
  }
}

TEST(Dataset, EncodeDecodeAndCorruption) {
  const auto c = testkit::desk_config();
  const GnnModel gnn(c, kTinyGnn, 13);
  const auto ds = generate_dataset(3, gnn, c, 14, 1);
  const auto bytes = encode_dataset(ds);
  const auto back = decode_dataset(bytes);
  EXPECT_EQ(encode_dataset(back), bytes);
  EXPECT_EQ(back.per_ap[2][1].x, ds.per_ap[2][1].x);
  EXPECT_THROW(decode_dataset(bytes.substr(0, bytes.size() - 1)), FormatError);
  auto flipped = bytes;
  flipped[20] ^= 0x01;
  EXPECT_THROW(decode_dataset(flipped), FormatError);
  const auto path = temp_path("dataset.cfd");
  save_dataset(ds, path);
  EXPECT_EQ(encode_dataset(load_dataset(path)), bytes);
  std::filesystem::remove(path);
}

TEST(CnnTraining, MemorizesASmallSet) {
  const auto c = testkit::desk_config();
  const GnnModel gnn(c, kTinyGnn, 15);
  const auto ds = generate_dataset(48, gnn, c, 16, 1);
  CnnModel model(c, CnnArch{16, 64}, 17);
  CnnTrainConfig train;
  train.epochs = 150;
  train.batch = 16;
  train.validation_fraction = 0.0;
  train.schedule = {3e-3, 1.0, 100};
  const auto log = train_cnn(model, ds, train);
  ASSERT_EQ(log.per_ap.size(), 3u);
  const auto idx = all_indices(ds.samples());
  for (int i = 0; i < c.I; ++i) {
    EXPECT_TRUE(std::isnan(log.per_ap[i].back().validation_accuracy));
    EXPECT_GE(evaluate_cnn(model, i, ds.per_ap[i], idx).accuracy, 0.95) << "AP " << i;
  }
}

TEST(CnnTraining, DeterministicWithSplitAndReports) {
  const auto c = testkit::desk_config();
  const GnnModel gnn(c, kTinyGnn, 18);
  const auto ds = generate_dataset(40, gnn, c, 19, 1);
  CnnTrainConfig train;
  train.epochs = 3;
  train.batch = 8;
  train.seed = 20;
  CnnModel a(c, kSmallCnn, 21), b(c, kSmallCnn, 21);
  int calls = 0;
  const auto la = train_cnn(a, ds, train, [&](int, const CnnEpochReport&) { ++calls; });
  const auto lb = train_cnn(b, ds, train);
  EXPECT_EQ(calls, 9);
  EXPECT_EQ(encode_weights(a.to_file()), encode_weights(b.to_file()));
  for (int i = 0; i < c.I; ++i) {
    ASSERT_EQ(la.per_ap[i].size(), 3u);
    EXPECT_EQ(la.per_ap[i].back().validation_loss, lb.per_ap[i].back().validation_loss);
    EXPECT_FALSE(std::isnan(la.per_ap[i].back().validation_accuracy));
  }

  train.validation_fraction = 1.0;
  EXPECT_THROW(train_cnn(a, ds, train), ConfigError);
  CnnModel wrong(SystemConfig{}, kSmallCnn, 1);
  train.validation_fraction = 0.1;
  EXPECT_THROW(train_cnn(wrong, ds, train), ConfigError);
}
