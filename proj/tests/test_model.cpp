#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/io/checkpoint.hpp"
#include "dilhyfs/model/blocks.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/model/train.hpp"

using namespace dilhyfs;
using namespace dilhyfs::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_size = 16;
  c.stage_dims = {4, 6, 8, 10};
  c.spatial_blocks = {1, 1, 1, 1};
  c.spectral_blocks = {1, 1, 1, 1};
  return c;
}

std::vector<Tensor> snapshot(const nn::ParamRefs& params) {
  std::vector<Tensor> out;
  for (const nn::Parameter* p : params) out.push_back(p->value);
  return out;
}

bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) return false;
    for (std::size_t j = 0; j < a[i].size(); ++j)
      if (std::bit_cast<std::uint64_t>(a[i][j]) != std::bit_cast<std::uint64_t>(b[i][j])) return false;
  }
  return true;
}

// Two toy classes: a bright square top-left versus bottom-right, plus noise.
void toy_data(Rng& rng, std::size_t per_class, std::vector<Tensor>& images, std::vector<std::size_t>& labels) {
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor x = rng_normal(rng, {1, 16, 16}, 0.1);
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t z = 0; z < 6; ++z) x.at(0, c ? 9 + y : 1 + y, c ? 9 + z : 1 + z) += 1.0;
      images.push_back(x);
      labels.push_back(c);
    }
}

}  // namespace

TEST(GfBlock, ZeroFilterAndZeroMlpOutputIsIdentity) {
  Rng rng(1);
  GfBlock block("b", 3, 8, 8, 2, 0.5, rng);
  for (nn::Parameter* p : block.filter().parameters()) p->value.fill(0.0);
  block.fc2().weight().value.fill(0.0);
  block.fc2().bias().value.fill(0.0);
  const Tensor x = rng_normal(rng, {3, 8, 8});
  EXPECT_EQ(max_abs_diff(block.forward(x), x), 0.0);
}

TEST(DualBranchModel, ShapesAndFeatureDim) {
  Rng rng(2);
  DualBranchModel net(tiny_config(), rng);
  EXPECT_EQ(net.feature_dim(), 10u);
  const Tensor f = net.forward_features(rng_normal(rng, {1, 16, 16}));
  EXPECT_EQ(f.shape(), (Shape{10}));
  EXPECT_THROW(net.forward_features(Tensor({1, 8, 8})), DimensionError);
  EXPECT_FALSE(net.has_head());
  EXPECT_THROW(net.head(), Error);
}

TEST(DualBranchModel, InvalidConfigsAreRejected) {
  Rng rng(3);
  ModelConfig c = tiny_config();
  c.input_size = 24;
  EXPECT_THROW(DualBranchModel(c, rng), ConfigError);
  c = tiny_config();
  c.spectral_blocks = {1, 0, 1, 1};
  EXPECT_THROW(DualBranchModel(c, rng), ConfigError);
  c = tiny_config();
  c.stage_dims = {4, 6, 8};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DualBranchModel, FusionWithZeroScaleAnnihilatesTheInput) {
  Rng rng(4);
  DualBranchModel net(tiny_config(), rng);
  // a = 0 and b = 0 in the last fusion makes the pooled vector constant zero, so every image
  // maps to the layernorm bias.
  auto fusion = net.fusion_parameters();
  fusion[fusion.size() - 2]->value.fill(0.0);
  fusion.back()->value.fill(0.0);
  const Tensor f1 = net.forward_features(rng_normal(rng, {1, 16, 16}));
  const Tensor f2 = net.forward_features(rng_normal(rng, {1, 16, 16}));
  EXPECT_EQ(max_abs_diff(f1, f2), 0.0);
}

TEST(DualBranchModel, BranchModesDisagree) {
  Rng rng(5);
  DualBranchModel net(tiny_config(), rng);
  const Tensor x = rng_normal(rng, {1, 16, 16});
  const Tensor dual = net.forward_features(x);
  net.set_mode(BranchMode::spatial_only);
  const Tensor spatial = net.forward_features(x);
  net.set_mode(BranchMode::spectral_only);
  const Tensor spectral = net.forward_features(x);
  EXPECT_GT(max_abs_diff(dual, spatial), 1e-6);
  EXPECT_GT(max_abs_diff(dual, spectral), 1e-6);
  EXPECT_GT(max_abs_diff(spatial, spectral), 1e-6);
}

TEST(DualBranchModel, SpatialOnlyModeLeavesSpectralGradientsZero) {
  Rng rng(6);
  DualBranchModel net(tiny_config(), rng);
  net.set_mode(BranchMode::spatial_only);
  nn::zero_grads(net.parameters());
  net.forward_features(rng_normal(rng, {1, 16, 16}));
  net.backward_features(rng_normal(rng, {10}));
  for (const nn::Parameter* p : net.spectral_parameters())
    for (double v : p->grad.values()) EXPECT_EQ(v, 0.0) << p->name;
}

TEST(Training, SpectralBranchIsBitwiseFrozenInPhaseB) {
  Rng data_rng(7);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  toy_data(data_rng, 6, images, labels);
  Rng rng(8);
  DualBranchModel net(tiny_config(), rng);
  TrainConfig cfg;
  cfg.sgd.learning_rate = 0.02;
  cfg.sgd.batch_size = 4;
  cfg.sgd.pretrain_epochs = 2;
  cfg.sgd.epochs = 2;

  const auto initial_spectral = snapshot(net.spectral_parameters());
  std::vector<Tensor> after_a, spatial_after_a;
  train_base(net, images, labels, 2, cfg, rng, [&](char phase, std::size_t epoch, const EpochStats&) {
    if (phase == 'A' && epoch + 1 == cfg.sgd.pretrain_epochs) {
      after_a = snapshot(net.spectral_parameters());
      spatial_after_a = snapshot(net.spatial_parameters());
    }
  });
  ASSERT_FALSE(after_a.empty());
  EXPECT_FALSE(bitwise_equal(initial_spectral, after_a));
  EXPECT_TRUE(bitwise_equal(after_a, snapshot(net.spectral_parameters())));
  EXPECT_FALSE(bitwise_equal(spatial_after_a, snapshot(net.spatial_parameters())));
  for (const nn::Parameter* p : net.spectral_parameters()) EXPECT_FALSE(p->trainable) << p->name;
}

TEST(Training, ExportedExtractorHasNoHeadAndRoundTrips) {
  Rng data_rng(9);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  toy_data(data_rng, 4, images, labels);
  Rng rng(10);
  DualBranchModel net(tiny_config(), rng);
  TrainConfig cfg;
  cfg.sgd.batch_size = 4;
  cfg.sgd.pretrain_epochs = 1;
  cfg.sgd.epochs = 1;
  train_base(net, images, labels, 2, cfg, rng);
  EXPECT_FALSE(net.has_head());

  const auto exported = net.export_feature_extractor();
  EXPECT_EQ(exported.size(), net.feature_parameters().size());
  std::size_t frozen = 0;
  for (const auto& t : exported) {
    EXPECT_EQ(t.name.rfind("head", 0), std::string::npos) << t.name;
    frozen += t.frozen ? 1 : 0;
  }
  EXPECT_EQ(frozen, net.spectral_parameters().size());

  const auto decoded = io::decode_checkpoint(io::encode_checkpoint(exported));
  Rng other(11);
  DualBranchModel copy(tiny_config(), other);
  copy.import_feature_extractor(decoded);
  const Tensor x = images.front();
  EXPECT_EQ(max_abs_diff(copy.forward_features(x), net.forward_features(x)), 0.0);
  for (const nn::Parameter* p : copy.spectral_parameters()) EXPECT_FALSE(p->trainable);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  const std::vector<io::NamedTensor> t{{"w", Tensor::matrix({{1, 2}, {3, 4}}), true, false}};
  std::string bytes = io::encode_checkpoint(t);
  EXPECT_THROW(io::decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(io::decode_checkpoint(bytes + "x"), DataError);
  bytes[0] = 'X';
  EXPECT_THROW(io::decode_checkpoint(bytes), DataError);
  EXPECT_THROW(io::encode_checkpoint({{"bad name", Tensor({1}), true, false}}), DataError);
}

TEST(Checkpoint, MissingOrMisshapenTensorIsRejected) {
  Rng rng(12);
  DualBranchModel net(tiny_config(), rng);
  auto tensors = net.export_feature_extractor();
  auto missing = tensors;
  missing.pop_back();
  EXPECT_THROW(net.import_feature_extractor(missing), DataError);
  tensors.front().value = Tensor({1});
  EXPECT_THROW(net.import_feature_extractor(tensors), DimensionError);
}

TEST(Training, LearnsASeparableToyProblem) {
  Rng data_rng(13);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  toy_data(data_rng, 10, images, labels);
  Rng rng(14);
  DualBranchModel net(tiny_config(), rng);
  TrainConfig cfg;
  cfg.sgd.learning_rate = 0.02;
  cfg.sgd.batch_size = 4;
  cfg.sgd.pretrain_epochs = 10;
  cfg.sgd.epochs = 10;
  const auto log = train_base(net, images, labels, 2, cfg, rng);
  ASSERT_EQ(log.phase_a.size(), 10u);
  ASSERT_EQ(log.phase_b.size(), 10u);
  EXPECT_LT(log.phase_a.back().loss, log.phase_a.front().loss);
  EXPECT_LT(log.phase_b.back().loss, log.phase_b.front().loss);
  EXPECT_GE(log.phase_b.back().accuracy, 0.9);
}

TEST(Training, RejectsBadBaseData) {
  Rng rng(15);
  DualBranchModel net(tiny_config(), rng);
  std::vector<Tensor> images{Tensor({1, 16, 16}), Tensor({1, 16, 16})};
  std::vector<std::size_t> labels{0, 0};
  EXPECT_THROW(train_base(net, images, labels, 2, TrainConfig{}, rng), DataError);
  std::vector<std::size_t> short_labels{0};
  EXPECT_THROW(train_base(net, images, short_labels, 2, TrainConfig{}, rng), DimensionError);
}
