#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/nn/layers.hpp"
#include "dilhyfs/nn/ops.hpp"

namespace dilhyfs::model {

/// Residual conv block: relu(conv(relu(LN(conv(x)))) + shortcut(x)).
/// The shortcut is a patch-merge downsample when the block changes resolution or width.
class ResidualBlock {
 public:
  ResidualBlock(const std::string& name, std::size_t cin, std::size_t cout, std::size_t stride,
                Rng& rng)
      : conv1_(name + ".conv1", cin, cout, stride, rng),
        norm_(name + ".norm", cout),
        conv2_(name + ".conv2", cout, cout, 1, rng) {
    if (stride != 1 || cin != cout) shortcut_.emplace(name + ".shortcut", cin, cout, rng);
  }

  Tensor forward(const Tensor& x) {
    Tensor h = conv2_.forward(relu1_.forward(norm_.forward(conv1_.forward(x))));
    h += shortcut_ ? shortcut_->forward(x) : x;
    return relu_out_.forward(h);
  }

  Tensor backward(const Tensor& grad_out) {
    const Tensor g = relu_out_.backward(grad_out);
    Tensor gx = conv1_.backward(norm_.backward(relu1_.backward(conv2_.backward(g))));
    gx += shortcut_ ? shortcut_->backward(g) : g;
    return gx;
  }

  void collect(nn::ParamRefs& out) {
    conv1_.collect(out);
    norm_.collect(out);
    conv2_.collect(out);
    if (shortcut_) shortcut_->collect(out);
  }

 private:
  nn::Conv3x3 conv1_;
  nn::ChannelLayerNorm norm_;
  nn::Relu relu1_;
  nn::Conv3x3 conv2_;
  std::optional<nn::Downsample> shortcut_;
  nn::Relu relu_out_;
};

/// Pre-norm global-filter block on [C x H x W]:
///   y = x + GF(LN(x)); out = y + MLP(LN(y)),
/// with channels as features and spatial positions as tokens for the norms and the MLP.
class GfBlock {
 public:
  GfBlock(const std::string& name, std::size_t channels, std::size_t h, std::size_t w,
          std::size_t mlp_ratio, double filter_init_std, Rng& rng)
      : norm1_(name + ".norm1", channels),
        filter_(name + ".filter", channels, h, w, rng, filter_init_std),
        norm2_(name + ".norm2", channels),
        fc1_(name + ".fc1", channels, channels * mlp_ratio, rng, std::sqrt(2.0)),
        fc2_(name + ".fc2", channels * mlp_ratio, channels, rng),
        h_(h),
        w_(w) {}

  Tensor forward(const Tensor& x) {
    Tensor y = x;
    y += filter_.forward(nn::tokens_to_chw(norm1_.forward(nn::chw_to_tokens(x)), h_, w_));
    const Tensor mlp = fc2_.forward(gelu_.forward(fc1_.forward(norm2_.forward(nn::chw_to_tokens(y)))));
    y += nn::tokens_to_chw(mlp, h_, w_);
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor gy = grad_out;
    const Tensor g_mlp = norm2_.backward(
        fc1_.backward(gelu_.backward(fc2_.backward(nn::chw_to_tokens(grad_out)))));
    gy += nn::tokens_to_chw(g_mlp, h_, w_);
    Tensor gx = gy;
    gx += nn::tokens_to_chw(norm1_.backward(nn::chw_to_tokens(filter_.backward(gy))), h_, w_);
    return gx;
  }

  void collect(nn::ParamRefs& out) {
    norm1_.collect(out);
    filter_.collect(out);
    norm2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
  }

  nn::GlobalFilterLayer& filter() { return filter_; }
  nn::Linear& fc1() { return fc1_; }
  nn::Linear& fc2() { return fc2_; }

 private:
  nn::LayerNorm norm1_;
  nn::GlobalFilterLayer filter_;
  nn::LayerNorm norm2_;
  nn::Linear fc1_;
  nn::Gelu gelu_;
  nn::Linear fc2_;
  std::size_t h_;
  std::size_t w_;
};

/// Convolutional stage; the first block halves the resolution for every stage but the first.
class SpatialStage {
 public:
  SpatialStage(const std::string& name, std::size_t cin, std::size_t cout, std::size_t blocks,
               bool downsample, Rng& rng) {
    for (std::size_t i = 0; i < blocks; ++i) {
      const bool first = i == 0;
      blocks_.emplace_back(name + "." + std::to_string(i), first ? cin : cout, cout,
                           first && downsample ? 2 : 1, rng);
    }
  }

  Tensor forward(const Tensor& x) {
    Tensor h = x;
    for (auto& b : blocks_) h = b.forward(h);
    return h;
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return g;
  }

  void collect(nn::ParamRefs& out) {
    for (auto& b : blocks_) b.collect(out);
  }

 private:
  std::vector<ResidualBlock> blocks_;
};

/// Global-filter stage, entered through a patch-merge downsample for every stage but the first.
class SpectralStage {
 public:
  SpectralStage(const std::string& name, std::size_t cin, std::size_t cout, std::size_t blocks,
                bool downsample, std::size_t resolution, std::size_t mlp_ratio,
                double filter_init_std, Rng& rng) {
    if (downsample) entry_.emplace(name + ".downsample", cin, cout, rng);
    for (std::size_t i = 0; i < blocks; ++i) {
      blocks_.emplace_back(name + "." + std::to_string(i), cout, resolution, resolution, mlp_ratio,
                           filter_init_std, rng);
    }
  }

  Tensor forward(const Tensor& x) {
    Tensor h = entry_ ? entry_->forward(x) : x;
    for (auto& b : blocks_) h = b.forward(h);
    return h;
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return entry_ ? entry_->backward(g) : g;
  }

  void collect(nn::ParamRefs& out) {
    if (entry_) entry_->collect(out);
    for (auto& b : blocks_) b.collect(out);
  }

  std::vector<GfBlock>& blocks() { return blocks_; }

 private:
  std::optional<nn::Downsample> entry_;
  std::vector<GfBlock> blocks_;
};

}  // namespace dilhyfs::model
