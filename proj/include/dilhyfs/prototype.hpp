#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/linalg.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/io/checkpoint.hpp"

namespace dilhyfs::prototype {

enum class Activation { relu, identity };

inline std::string_view activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("prototype: unknown activation '" + std::string(s) + "' (relu|identity)");
}

struct PrototypeConfig {
  std::size_t projection_dim = 2000;  // M
  int lambda_min_exp = -8;            // grid is 10^k for k in [min, max]
  int lambda_max_exp = 8;
  Activation activation = Activation::relu;
  bool normalize_class_means = true;
  double validation_fraction = 0.2;

  void validate() const {
    if (projection_dim == 0) throw ConfigError("prototype: projection_dim must be >= 1");
    if (lambda_min_exp > lambda_max_exp) throw ConfigError("prototype: empty lambda grid");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("prototype: validation_fraction must lie in (0, 1)");
    }
  }

  std::vector<double> lambda_grid() const {
    std::vector<double> grid;
    for (int k = lambda_min_exp; k <= lambda_max_exp; ++k) grid.push_back(std::pow(10.0, k));
    return grid;
  }
};

/// Frozen projection W [D x M], Gram G [M x M], per-class sums S (one length-M column per
/// registered class) and counts, the ridge parameter and the class registry. Column c of S
/// belongs to classes[c]; registry order is arrival order.
struct PrototypeState {
  Tensor w;
  Tensor g;
  std::vector<std::vector<double>> sums;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> classes;
  std::optional<double> lambda;
  Activation activation = Activation::relu;
  bool normalize_class_means = true;

  std::size_t feature_dim() const { return w.dim(0); }
  std::size_t projection_dim() const { return w.dim(1); }
  std::size_t num_classes() const { return classes.size(); }

  /// Registry slot of `label`, or nullopt when unseen.
  std::optional<std::size_t> slot(std::size_t label) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == label) return i;
    }
    return std::nullopt;
  }

  std::size_t register_class(std::size_t label) {
    if (auto s = slot(label)) return *s;
    classes.push_back(label);
    sums.emplace_back(projection_dim(), 0.0);
    counts.push_back(0);
    return classes.size() - 1;
  }
};

/// W ~ N(0, 1) i.i.d. from Rng(seed); G, S empty.
inline PrototypeState init_projection(std::uint64_t seed, std::size_t feature_dim, std::size_t m,
                                      const PrototypeConfig& cfg = {}) {
  if (m == 0 || feature_dim == 0) throw ConfigError("prototype: feature_dim and M must be >= 1");
  Rng rng(seed);
  PrototypeState st;
  st.w = rng_normal(rng, {feature_dim, m});
  st.g = Tensor({m, m});
  st.activation = cfg.activation;
  st.normalize_class_means = cfg.normalize_class_means;
  return st;
}

/// H = phi(F W) for features F [B x D].
inline Tensor embed(const PrototypeState& st, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != st.feature_dim()) {
    throw DimensionError("embed: features " + shape_string(features.shape()) +
                         " do not match projection " + shape_string(st.w.shape()));
  }
  Tensor h = matmul(features, st.w);
  if (st.activation == Activation::relu) {
    for (double& v : h.values()) v = std::max(v, 0.0);
  }
  return h;
}

/// G += H^T H; S[:, y_i] += H_i; m[y_i] += 1. Unseen labels are registered in arrival order.
inline void ingest_task(PrototypeState& st, const Tensor& h, std::span<const std::size_t> labels) {
  if (h.rank() != 2 || h.dim(1) != st.projection_dim()) {
    throw DimensionError("ingest_task: H " + shape_string(h.shape()) + " does not have " +
                         std::to_string(st.projection_dim()) + " columns");
  }
  if (labels.size() != h.dim(0)) {
    throw DimensionError("ingest_task: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(h.dim(0)) + " rows");
  }
  kernel::syrk_acc(h.data(), st.g.data(), h.dim(0), st.projection_dim());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = st.register_class(labels[i]);
    const auto row = h.row(i);
    auto& s = st.sums[c];
    for (std::size_t j = 0; j < row.size(); ++j) s[j] += row[j];
    ++st.counts[c];
  }
}

/// Class-mean matrix C [M x classes]: column c is S_c / m_c (or S_c when normalization is off).
inline Tensor class_means(const PrototypeState& st) {
  const std::size_t m = st.projection_dim(), k = st.num_classes();
  Tensor c({m, k});
  for (std::size_t j = 0; j < k; ++j) {
    if (st.counts[j] == 0) {
      throw DataError("prototype: class " + std::to_string(st.classes[j]) + " has no samples");
    }
    const double scale = st.normalize_class_means ? 1.0 / static_cast<double>(st.counts[j]) : 1.0;
    for (std::size_t i = 0; i < m; ++i) c.at(i, j) = st.sums[j][i] * scale;
  }
  return c;
}

/// Solves (G + lambda I) P = C for an explicit lambda.
inline Tensor compute_prototypes(const PrototypeState& st, double lambda) {
  const Tensor c = class_means(st);
  if (c.dim(1) == 0) return c;
  Tensor a = st.g;
  for (std::size_t i = 0; i < a.dim(0); ++i) a.at(i, i) += lambda;
  try {
    return solve_spd(a, c);
  } catch (const FactorizationError& e) {
    throw NumericError("compute_prototypes: G + " + std::to_string(lambda) +
                       " I is not positive definite (" + e.what() + "); lambda too small");
  }
}

inline Tensor compute_prototypes(const PrototypeState& st) {
  if (!st.lambda) throw ConfigError("compute_prototypes: lambda has not been selected");
  return compute_prototypes(st, *st.lambda);
}

/// Row-wise argmax of H P mapped back to labels; ties go to the earliest-registered class.
inline std::vector<std::size_t> predict(const PrototypeState& st, const Tensor& p, const Tensor& h) {
  if (p.rank() != 2 || p.dim(1) != st.num_classes() || p.dim(0) != st.projection_dim()) {
    throw DimensionError("predict: prototypes " + shape_string(p.shape()) + " do not match state");
  }
  if (st.num_classes() == 0) throw DataError("predict: no classes registered");
  const Tensor scores = matmul(h, p);
  std::vector<std::size_t> out(h.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = scores.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = st.classes[best];
  }
  return out;
}

struct LambdaCandidate {
  double lambda = 0.0;
  double mse = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<LambdaCandidate> candidates;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};

/// Stratified split: per class, a seeded shuffle sends round(fraction * n) samples (at least
/// one, at most n - 1) to validation. Row lists come back sorted.
inline void stratified_split(std::span<const std::size_t> labels, double fraction, Rng& rng,
                             std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  std::vector<std::size_t> order;
  for (std::size_t y : labels) {
    if (std::find(order.begin(), order.end(), y) == order.end()) order.push_back(y);
  }
  for (std::size_t y : order) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == y) rows.push_back(i);
    }
    if (rows.size() < 2) {
      throw DataError("select_lambda: class " + std::to_string(y) + " has " +
                      std::to_string(rows.size()) + " sample(s); stratification needs at least 2");
    }
    rng.shuffle(rows);
    const auto n_val = static_cast<std::size_t>(std::clamp<double>(
        std::round(fraction * static_cast<double>(rows.size())), 1.0, static_cast<double>(rows.size() - 1)));
    val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

inline Tensor gather_rows(const Tensor& h, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), h.dim(1)});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = h.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// Picks lambda on a stratified 80/20 split of the base task: for every grid value, fit P on
/// the training part with a temporary state and score the validation part by mean squared
/// error against one-hot targets. The smallest error wins; ties go to the larger lambda.
/// A grid value whose shifted Gram fails to factor is recorded as infeasible and skipped.
/// Stores the winner in `st.lambda`.
inline LambdaSelection select_lambda(PrototypeState& st, const Tensor& base_h,
                                     std::span<const std::size_t> base_labels, Rng& rng,
                                     const PrototypeConfig& cfg = {}) {
  cfg.validate();
  if (base_labels.size() != base_h.dim(0)) {
    throw DimensionError("select_lambda: label count does not match H rows");
  }
  LambdaSelection sel;
  stratified_split(base_labels, cfg.validation_fraction, rng, sel.train_rows, sel.validation_rows);

  PrototypeState fit;
  fit.w = st.w;
  fit.g = Tensor(st.g.shape());
  fit.activation = st.activation;
  fit.normalize_class_means = st.normalize_class_means;
  std::vector<std::size_t> train_labels, val_labels;
  for (std::size_t r : sel.train_rows) train_labels.push_back(base_labels[r]);
  for (std::size_t r : sel.validation_rows) val_labels.push_back(base_labels[r]);
  for (std::size_t y : base_labels) fit.register_class(y);
  const Tensor h_fit = gather_rows(base_h, sel.train_rows);
  ingest_task(fit, h_fit, train_labels);
  if (fit.num_classes() < 2) throw DataError("select_lambda: base task needs at least 2 classes");
  const Tensor h_val = gather_rows(base_h, sel.validation_rows);

  // With fewer fitting rows than M the same prototypes come from the n x n kernel system:
  // (H^T H + lambda I)^-1 H^T Y D = H^T (H H^T + lambda I)^-1 Y D, D holding the mean scales.
  const bool dual = h_fit.dim(0) < st.projection_dim();
  Tensor kernel_fit, kernel_val, targets;
  if (dual) {
    const Tensor h_fit_t = transpose(h_fit);
    kernel_fit = matmul(h_fit, h_fit_t);
    kernel_val = matmul(h_val, h_fit_t);
    targets = Tensor({h_fit.dim(0), fit.num_classes()});
    for (std::size_t i = 0; i < train_labels.size(); ++i) {
      const std::size_t j = *fit.slot(train_labels[i]);
      targets.at(i, j) = fit.normalize_class_means ? 1.0 / static_cast<double>(fit.counts[j]) : 1.0;
    }
  }

  bool any = false;
  for (double lambda : cfg.lambda_grid()) {
    LambdaCandidate cand;
    cand.lambda = lambda;
    try {
      Tensor scores;
      if (dual) {
        Tensor a = kernel_fit;
        for (std::size_t i = 0; i < a.dim(0); ++i) a.at(i, i) += lambda;
        scores = matmul(kernel_val, cholesky_solve(cholesky(a), targets));
      } else {
        scores = matmul(h_val, compute_prototypes(fit, lambda));
      }
      double sse = 0.0;
      for (std::size_t i = 0; i < scores.dim(0); ++i) {
        const std::size_t target = *fit.slot(val_labels[i]);
        for (std::size_t j = 0; j < scores.dim(1); ++j) {
          const double e = scores.at(i, j) - (j == target ? 1.0 : 0.0);
          sse += e * e;
        }
      }
      cand.mse = sse / static_cast<double>(scores.size());
      cand.feasible = std::isfinite(cand.mse);
    } catch (const NumericError&) {
      cand.feasible = false;
    }
    sel.candidates.push_back(cand);
    any = any || cand.feasible;
  }
  if (!any) throw NumericError("select_lambda: no lambda in the grid gives a positive definite system");
  const LambdaCandidate* best = nullptr;
  for (const auto& c : sel.candidates) {
    if (c.feasible && (!best || c.mse <= best->mse)) best = &c;
  }
  sel.lambda = best->lambda;
  st.lambda = sel.lambda;
  return sel;
}

/// Named tensors for the shared checkpoint container.
inline std::vector<io::NamedTensor> export_state(const PrototypeState& st) {
  std::vector<io::NamedTensor> out;
  out.push_back({"prototype.w", st.w, false, true});
  out.push_back({"prototype.g", st.g, false, true});
  const std::size_t k = st.num_classes(), m = st.projection_dim();
  Tensor s({m, k}), counts({k}), classes({k});
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < m; ++i) s.at(i, j) = st.sums[j][i];
    counts[j] = static_cast<double>(st.counts[j]);
    classes[j] = static_cast<double>(st.classes[j]);
  }
  out.push_back({"prototype.sums", s, false, true});
  out.push_back({"prototype.counts", counts, false, true});
  out.push_back({"prototype.classes", classes, false, true});
  out.push_back({"prototype.lambda", Tensor({1}, st.lambda.value_or(0.0)), false, true});
  return out;
}

}  // namespace dilhyfs::prototype
