#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"

namespace dilhyfs::losses {

struct LossConfig {
  double gamma = 0.5;            // focal focusing parameter
  double center_weight = 5e-4;   // c in L = L_F + c * L_C
  double center_alpha = 0.5;     // center update rate

  void validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("loss: gamma must be >= 0");
    if (!(center_weight >= 0.0)) throw ConfigError("loss: center_weight must be >= 0");
    if (!(center_alpha > 0.0 && center_alpha <= 1.0)) {
      throw ConfigError("loss: center_alpha must lie in (0, 1]");
    }
  }
};

/// Per-class feature centroids, one row per class.
struct CenterBank {
  Tensor centers;
  double alpha = 0.5;

  CenterBank() = default;
  CenterBank(std::size_t num_classes, std::size_t feature_dim, double alpha_ = 0.5)
      : centers({num_classes, feature_dim}), alpha(alpha_) {}

  std::size_t num_classes() const { return centers.dim(0); }
  std::size_t feature_dim() const { return centers.dim(1); }
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

struct HybridResult {
  double loss = 0.0;
  double focal = 0.0;
  double center = 0.0;
  Tensor grad_logits;
  Tensor grad_features;
};

namespace detail {

inline void check_labels(std::span<const std::size_t> labels, std::size_t batch,
                         std::size_t classes, const char* op) {
  if (labels.size() != batch) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for a batch of " + std::to_string(batch));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw LabelError(std::string(op) + ": label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace detail

/// Row-wise max-subtracted softmax of [B x C] logits.
inline Tensor softmax_probs(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) {
    throw DimensionError("softmax: expected [B x C] with C >= 1, got " + shape_string(logits.shape()));
  }
  Tensor p(logits.shape());
  const std::size_t c = logits.dim(1);
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto z = logits.row(i);
    auto out = p.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(z[j] - m);
      s += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= s;
  }
  return p;
}

/// Batch mean of -(1 - p_t)^gamma log p_t and its gradient w.r.t. the logits.
inline LossResult focal_loss(const Tensor& logits, std::span<const std::size_t> labels,
                             double gamma) {
  const Tensor p = softmax_probs(logits);
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  detail::check_labels(labels, b, c, "focal_loss");
  LossResult out;
  out.grad = Tensor(logits.shape());
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto z = logits.row(i);
    const auto pi = p.row(i);
    const std::size_t t = labels[i];
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double log_pt = z[t] - m - std::log(s);
    // 1 - p_t summed from the other classes keeps precision when p_t is close to 1.
    double q = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j != t) q += pi[j];
    }
    const double weight = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    out.loss += -weight * log_pt * inv_b;

    // dL/dp_t * p_t = gamma (1-p)^(gamma-1) p log p - (1-p)^gamma, then dp_t/dz_j = p_t (d_tj - p_j).
    double focus = 0.0;
    if (gamma != 0.0 && q > 0.0) focus = gamma * std::pow(q, gamma - 1.0) * pi[t] * log_pt;
    const double a = focus - weight;
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      g[j] = a * ((j == t ? 1.0 : 0.0) - pi[j]) * inv_b;
    }
  }
  return out;
}

/// Half the summed squared distance of each feature row to its class center.
inline LossResult center_loss(const Tensor& features, std::span<const std::size_t> labels,
                              const CenterBank& bank) {
  if (features.rank() != 2 || features.dim(1) != bank.feature_dim()) {
    throw DimensionError("center_loss: features " + shape_string(features.shape()) +
                         " do not match bank dimension " + std::to_string(bank.feature_dim()));
  }
  detail::check_labels(labels, features.dim(0), bank.num_classes(), "center_loss");
  LossResult out;
  out.grad = Tensor(features.shape());
  for (std::size_t i = 0; i < features.dim(0); ++i) {
    const auto f = features.row(i);
    const auto c = bank.centers.row(labels[i]);
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) {
      g[j] = f[j] - c[j];
      out.loss += 0.5 * g[j] * g[j];
    }
  }
  return out;
}

/// c_j <- c_j - alpha * sum_{i: y_i = j} (c_j - F_i) / (1 + n_j); absent classes untouched.
inline void update_centers(CenterBank& bank, const Tensor& features,
                           std::span<const std::size_t> labels) {
  if (features.rank() != 2 || features.dim(1) != bank.feature_dim()) {
    throw DimensionError("update_centers: feature dimension mismatch");
  }
  detail::check_labels(labels, features.dim(0), bank.num_classes(), "update_centers");
  const std::size_t d = bank.feature_dim();
  Tensor delta({bank.num_classes(), d});
  std::vector<std::size_t> counts(bank.num_classes(), 0);
  for (std::size_t i = 0; i < features.dim(0); ++i) {
    const std::size_t y = labels[i];
    ++counts[y];
    const auto f = features.row(i);
    const auto c = bank.centers.row(y);
    auto dl = delta.row(y);
    for (std::size_t j = 0; j < d; ++j) dl[j] += c[j] - f[j];
  }
  for (std::size_t y = 0; y < bank.num_classes(); ++y) {
    if (counts[y] == 0) continue;
    const double scale = bank.alpha / (1.0 + static_cast<double>(counts[y]));
    auto c = bank.centers.row(y);
    const auto dl = delta.row(y);
    for (std::size_t j = 0; j < d; ++j) c[j] -= scale * dl[j];
  }
}

/// L = L_F + c * L_C with the matching weighted gradients.
inline HybridResult hybrid_loss(const Tensor& logits, const Tensor& features,
                                std::span<const std::size_t> labels, const CenterBank& bank,
                                const LossConfig& cfg) {
  if (logits.rank() != 2 || features.rank() != 2 || logits.dim(0) != features.dim(0)) {
    throw DimensionError("hybrid_loss: logits " + shape_string(logits.shape()) + " and features " +
                         shape_string(features.shape()) + " disagree on batch size");
  }
  auto focal = focal_loss(logits, labels, cfg.gamma);
  auto center = center_loss(features, labels, bank);
  HybridResult out;
  out.focal = focal.loss;
  out.center = center.loss;
  out.loss = focal.loss + cfg.center_weight * center.loss;
  out.grad_logits = std::move(focal.grad);
  out.grad_features = std::move(center.grad);
  out.grad_features *= cfg.center_weight;
  return out;
}

}  // namespace dilhyfs::losses
