#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/io/checkpoint.hpp"
#include "dilhyfs/model/blocks.hpp"
#include "dilhyfs/model/config.hpp"
#include "dilhyfs/nn/layers.hpp"

namespace dilhyfs::model {

/// Which branch outputs feed the fusion layers. Branch-only modes replace the other branch's
/// stage outputs with zeros and leave the fusion parameters as they are.
enum class BranchMode { dual, spatial_only, spectral_only };

inline std::string_view branch_mode_name(BranchMode m) {
  switch (m) {
    case BranchMode::dual: return "dual";
    case BranchMode::spatial_only: return "spatial_only";
    case BranchMode::spectral_only: return "spectral_only";
  }
  return "unknown";
}

/// Spatial (residual conv) and spectral (global filter) branches sharing a stem. After stage s
/// both branch outputs are fused as z_s = a_s (r_s + g_s) + b_s and z_s feeds stage s + 1 of
/// both branches. The last z is average-pooled and the pooled vector is layer-normalized into
/// the feature vector.
class DualBranchModel {
 public:
  DualBranchModel(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        stem_("stem", 1, cfg.stage_dims.empty() ? 1 : cfg.stage_dims[0], 1, rng),
        norm_("norm", cfg.stage_dims.empty() ? 1 : cfg.stage_dims.back()) {
    cfg_.validate();
    for (std::size_t s = 0; s < cfg_.num_stages(); ++s) {
      const std::size_t cin = s == 0 ? cfg_.stage_dims[0] : cfg_.stage_dims[s - 1];
      const std::size_t cout = cfg_.stage_dims[s];
      const std::string idx = std::to_string(s);
      spatial_.emplace_back("spatial." + idx, cin, cout, cfg_.spatial_blocks[s], s > 0, rng);
      spectral_.emplace_back("spectral." + idx, cin, cout, cfg_.spectral_blocks[s], s > 0,
                             cfg_.stage_resolution(s), cfg_.mlp_ratio, cfg_.filter_init_std, rng);
      fusion_.emplace_back("fusion." + idx);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return cfg_.feature_dim(); }

  BranchMode mode() const { return mode_; }
  void set_mode(BranchMode m) { mode_ = m; }

  /// Feature vector [feature_dim] for a [1 x S x S] image.
  Tensor forward_features(const Tensor& image) {
    if (image.shape() != Shape{1, cfg_.input_size, cfg_.input_size}) {
      throw DimensionError("forward_features: image " + shape_string(image.shape()) +
                           " does not match input size " + std::to_string(cfg_.input_size));
    }
    Tensor z = stem_.forward(image);
    for (std::size_t s = 0; s < cfg_.num_stages(); ++s) {
      const Tensor r = mode_ == BranchMode::spectral_only ? zeros_for(s) : spatial_[s].forward(z);
      const Tensor g = mode_ == BranchMode::spatial_only ? zeros_for(s) : spectral_[s].forward(z);
      z = fusion_[s].forward(r, g);
    }
    const Tensor pooled = pool_.forward(z);
    return norm_.forward(pooled.reshaped({1, pooled.size()})).reshaped({pooled.size()});
  }

  /// Backpropagates d(loss)/d(features) through the last forward_features call. Parameter
  /// gradients accumulate for trainable parameters; returns the gradient w.r.t. the image.
  Tensor backward_features(const Tensor& grad_features) {
    const Tensor gp = norm_.backward(grad_features.reshaped({1, grad_features.size()}));
    Tensor gz = pool_.backward(gp.reshaped({gp.size()}));
    for (std::size_t s = cfg_.num_stages(); s-- > 0;) {
      const Tensor gb = fusion_[s].backward(gz);
      Tensor next(stage_input_shape(s));
      if (mode_ != BranchMode::spectral_only) next += spatial_[s].backward(gb);
      if (mode_ != BranchMode::spatial_only) next += spectral_[s].backward(gb);
      gz = std::move(next);
    }
    return stem_.backward(gz);
  }

  // Pooled features have norms in the tens at initialization; a small head keeps the first
  // logits near zero.
  static constexpr double kHeadInitGain = 0.01;

  bool has_head() const { return head_.has_value(); }

  void attach_head(std::size_t num_classes, Rng& rng) {
    head_.emplace("head", feature_dim(), num_classes, rng, kHeadInitGain);
  }
  void drop_head() { head_.reset(); }

  nn::Linear& head() {
    if (!head_) throw Error("model: no classifier head attached");
    return *head_;
  }

  /// Logits [1 x classes] through the attached head.
  Tensor forward_logits(const Tensor& image) {
    return head().forward(forward_features(image).reshaped({1, feature_dim()}));
  }

  /// Backward from logits gradient [1 x classes], optionally adding a direct feature gradient.
  void backward_logits(const Tensor& grad_logits, const Tensor* extra_feature_grad = nullptr) {
    Tensor gf = head().backward(grad_logits).reshaped({feature_dim()});
    if (extra_feature_grad) gf += *extra_feature_grad;
    backward_features(gf);
  }

  nn::ParamRefs stem_parameters() {
    nn::ParamRefs out;
    stem_.collect(out);
    return out;
  }
  nn::ParamRefs spatial_parameters() {
    nn::ParamRefs out;
    for (auto& s : spatial_) s.collect(out);
    return out;
  }
  nn::ParamRefs spectral_parameters() {
    nn::ParamRefs out;
    for (auto& s : spectral_) s.collect(out);
    return out;
  }
  nn::ParamRefs fusion_parameters() {
    nn::ParamRefs out;
    for (auto& f : fusion_) f.collect(out);
    return out;
  }
  nn::ParamRefs norm_parameters() {
    nn::ParamRefs out;
    norm_.collect(out);
    return out;
  }
  nn::ParamRefs head_parameters() {
    nn::ParamRefs out;
    if (head_) head_->collect(out);
    return out;
  }

  /// Feature-extractor parameters (everything except the head), in a fixed order.
  nn::ParamRefs feature_parameters() {
    nn::ParamRefs out = stem_parameters();
    for (std::size_t s = 0; s < cfg_.num_stages(); ++s) {
      spatial_[s].collect(out);
      spectral_[s].collect(out);
      fusion_[s].collect(out);
    }
    norm_.collect(out);
    return out;
  }

  nn::ParamRefs parameters() {
    nn::ParamRefs out = feature_parameters();
    for (nn::Parameter* p : head_parameters()) out.push_back(p);
    return out;
  }

  void set_spectral_trainable(bool t) { nn::set_trainable(spectral_parameters(), t); }
  void set_all_trainable(bool t) { nn::set_trainable(parameters(), t); }

  /// Named tensors of the feature extractor; the classifier head is never included.
  std::vector<io::NamedTensor> export_feature_extractor() {
    std::vector<io::NamedTensor> out;
    for (nn::Parameter* p : feature_parameters()) {
      out.push_back({p->name, p->value, true, !p->trainable});
    }
    return out;
  }

  /// Loads values by name; every feature-extractor parameter must be present with its shape.
  void import_feature_extractor(const std::vector<io::NamedTensor>& tensors) {
    for (nn::Parameter* p : feature_parameters()) {
      const io::NamedTensor* found = nullptr;
      for (const auto& t : tensors) {
        if (t.name == p->name) found = &t;
      }
      if (!found) throw DataError("checkpoint: missing tensor '" + p->name + "'");
      if (found->value.shape() != p->value.shape()) {
        throw DimensionError("checkpoint: tensor '" + p->name + "' has shape " +
                             shape_string(found->value.shape()) + ", expected " +
                             shape_string(p->value.shape()));
      }
      p->value = found->value;
      p->trainable = !found->frozen;
    }
  }

  std::vector<SpectralStage>& spectral_stages() { return spectral_; }

 private:
  Shape stage_output_shape(std::size_t s) const {
    const std::size_t res = cfg_.stage_resolution(s);
    return {cfg_.stage_dims[s], res, res};
  }
  Shape stage_input_shape(std::size_t s) const {
    if (s == 0) return {cfg_.stage_dims[0], cfg_.input_size, cfg_.input_size};
    return stage_output_shape(s - 1);
  }
  Tensor zeros_for(std::size_t s) const { return Tensor(stage_output_shape(s)); }

  ModelConfig cfg_;
  BranchMode mode_ = BranchMode::dual;
  nn::Conv3x3 stem_;
  std::vector<SpatialStage> spatial_;
  std::vector<SpectralStage> spectral_;
  std::vector<nn::ScaleShift> fusion_;
  nn::LayerNorm norm_;
  nn::AvgPool pool_;
  std::optional<nn::Linear> head_;
};

}  // namespace dilhyfs::model
