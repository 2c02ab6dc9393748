#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/data/augment.hpp"
#include "dilhyfs/losses.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/nn/sgd.hpp"

namespace dilhyfs::model {

struct TrainConfig {
  nn::SgdConfig sgd;
  losses::LossConfig loss;
  bool augment = true;  // random horizontal flip, p = 0.5, every time a sample is drawn

  void validate() const {
    sgd.validate();
    loss.validate();
  }
};

struct EpochStats {
  double loss = 0.0;      // mean over batches of the batch loss
  double accuracy = 0.0;  // training accuracy of the pre-update predictions
};

struct TrainLog {
  std::vector<EpochStats> phase_a;
  std::vector<EpochStats> phase_b;
};

/// Optional per-epoch observer: (phase 'A' or 'B', epoch index, stats).
using EpochCallback = std::function<void(char, std::size_t, const EpochStats&)>;

namespace detail {

inline std::size_t argmax_row(const Tensor& logits) {
  const auto r = logits.row(0);
  std::size_t best = 0;
  for (std::size_t j = 1; j < r.size(); ++j) {
    if (r[j] > r[best]) best = j;
  }
  return best;
}

inline void check_base_data(std::span<const Tensor> images, std::span<const std::size_t> labels,
                            std::size_t num_classes) {
  if (images.size() != labels.size()) {
    throw DimensionError("train_base: " + std::to_string(images.size()) + " images but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw DataError("train_base: base data needs at least 2 classes");
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw LabelError("train_base: label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] < 2) {
      throw DataError("train_base: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                      " samples (need at least 2)");
    }
  }
}

/// One phase of minibatch SGD. `step_sample` runs forward/backward for a single (augmented)
/// image and returns (loss contribution, correct?); `after_batch` runs once per batch before
/// the optimizer step.
template <typename StepSample, typename AfterBatch>
std::vector<EpochStats> run_phase(DualBranchModel& model, std::span<const Tensor> images,
                                  const TrainConfig& cfg, std::size_t epochs, Rng& rng,
                                  char phase, const EpochCallback& on_epoch,
                                  StepSample&& step_sample, AfterBatch&& after_batch) {
  std::vector<EpochStats> log;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const nn::ParamRefs params = model.parameters();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    EpochStats stats;
    std::size_t correct = 0, batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.sgd.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.sgd.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      nn::zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t idx : batch) {
        const Tensor x = cfg.augment ? data::hflip_augment(images[idx], rng) : images[idx];
        const auto [loss, hit] = step_sample(x, idx, batch.size());
        batch_loss += loss;
        correct += hit ? 1 : 0;
      }
      after_batch(batch);
      if (!std::isfinite(batch_loss)) {
        throw NumericError(std::string("train_base: non-finite loss in phase ") + phase + ", epoch " +
                           std::to_string(epoch));
      }
      nn::sgd_step(params, cfg.sgd);
      stats.loss += batch_loss;
      ++batches;
    }
    stats.loss /= static_cast<double>(batches);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
    log.push_back(stats);
    if (on_epoch) on_epoch(phase, epoch, stats);
  }
  return log;
}

}  // namespace detail

/// Two-phase base training.
///
/// Phase A trains every parameter plus a temporary head with cross-entropy for
/// sgd.pretrain_epochs. Phase B attaches a fresh head, freezes the spectral branch and trains
/// the rest with the focal + center loss for sgd.epochs, updating the class centers after
/// every batch. The head is dropped at the end and the spectral branch stays frozen.
inline TrainLog train_base(DualBranchModel& model, std::span<const Tensor> images,
                           std::span<const std::size_t> labels, std::size_t num_classes,
                           const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  detail::check_base_data(images, labels, num_classes);
  TrainLog log;
  const std::size_t d = model.feature_dim();
  auto no_batch_hook = [](std::span<const std::size_t>) {};

  // Phase A: cross-entropy on all parameters.
  model.set_all_trainable(true);
  model.attach_head(num_classes, rng);
  log.phase_a = detail::run_phase(
      model, images, cfg, cfg.sgd.pretrain_epochs, rng, 'A', on_epoch,
      [&](const Tensor& x, std::size_t idx, std::size_t batch) {
        const Tensor logits = model.forward_logits(x);
        const std::size_t y = labels[idx];
        auto ce = losses::focal_loss(logits, {&y, 1}, 0.0);
        ce.grad *= 1.0 / static_cast<double>(batch);
        model.backward_logits(ce.grad);
        return std::pair{ce.loss / static_cast<double>(batch), detail::argmax_row(logits) == y};
      },
      no_batch_hook);

  // Phase B: fresh head, frozen spectral branch, hybrid loss.
  model.attach_head(num_classes, rng);
  model.set_spectral_trainable(false);
  losses::CenterBank bank(num_classes, d, cfg.loss.center_alpha);
  std::vector<double> batch_features;
  std::vector<std::size_t> batch_labels;
  log.phase_b = detail::run_phase(
      model, images, cfg, cfg.sgd.epochs, rng, 'B', on_epoch,
      [&](const Tensor& x, std::size_t idx, std::size_t batch) {
        const Tensor f = model.forward_features(x).reshaped({1, d});
        const Tensor logits = model.head().forward(f);
        const std::size_t y = labels[idx];
        auto h = losses::hybrid_loss(logits, f, {&y, 1}, bank, cfg.loss);
        const double inv_b = 1.0 / static_cast<double>(batch);
        h.grad_logits *= inv_b;
        Tensor gf = model.head().backward(h.grad_logits);
        gf += h.grad_features;
        model.backward_features(gf.reshaped({d}));
        batch_labels.push_back(y);
        batch_features.insert(batch_features.end(), f.values().begin(), f.values().end());
        return std::pair{h.focal * inv_b + cfg.loss.center_weight * h.center,
                         detail::argmax_row(logits) == y};
      },
      [&](std::span<const std::size_t>) {
        const Tensor feats({batch_labels.size(), d}, std::move(batch_features));
        losses::update_centers(bank, feats, batch_labels);
        batch_features.clear();
        batch_labels.clear();
      });

  model.drop_head();
  return log;
}

/// Features [N x feature_dim] for a list of images, in order.
inline Tensor extract_features(DualBranchModel& model, std::span<const Tensor> images) {
  const std::size_t d = model.feature_dim();
  Tensor out({images.size(), d});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor f = model.forward_features(images[i]);
    std::copy(f.values().begin(), f.values().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace dilhyfs::model
