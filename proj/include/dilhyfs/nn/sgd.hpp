#pragma once

#include <cstddef>
#include <string>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/nn/layers.hpp"

namespace dilhyfs::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  std::size_t batch_size = 48;
  std::size_t epochs = 30;           // hybrid-loss fine-tuning
  std::size_t pretrain_epochs = 30;  // cross-entropy pretraining surrogate

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("sgd: batch_size must be positive");
    if (epochs == 0) throw ConfigError("sgd: epochs must be positive");
  }
};

/// Plain SGD with L2 weight decay: w <- w - lr * (g + wd * w), trainable parameters only.
inline void sgd_step(const ParamRefs& params, double learning_rate, double weight_decay) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    double* w = p->value.data();
    const double* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      w[i] -= learning_rate * (g[i] + weight_decay * w[i]);
    }
  }
}

inline void sgd_step(const ParamRefs& params, const SgdConfig& cfg) {
  sgd_step(params, cfg.learning_rate, cfg.weight_decay);
}

inline void zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace dilhyfs::nn
