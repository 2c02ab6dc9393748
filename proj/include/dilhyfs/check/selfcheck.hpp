#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "dilhyfs/check/gradcheck.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/losses.hpp"
#include "dilhyfs/prototype.hpp"
#include "dilhyfs/protocol/metrics.hpp"
#include "dilhyfs/spectral/fft.hpp"
#include "dilhyfs/spectral/global_filter.hpp"

// The invariant battery behind `dilhyfs selfcheck`: spectral oracles, gradient checks,
// incremental-learner properties and metric identities.

namespace dilhyfs::check {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CheckGroup {
  std::string name;
  std::vector<CheckResult> checks;

  std::size_t passed() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(),
                                                  [](const CheckResult& c) { return c.pass; }));
  }
  bool pass() const { return passed() == checks.size(); }
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline CheckResult bound_check(std::string name, double value, double bound) {
  return {std::move(name), value <= bound, "max error " + sci(value) + " (bound " + sci(bound) + ")"};
}

// ---------------------------------------------------------------------------------------------
// Spectral

/// Filtered output by direct circular convolution with the filter's spatial kernel; the kernel
/// itself comes from an explicit inverse DFT sum, so no FFT is involved.
inline Tensor circular_convolution_oracle(const Tensor& x, const spectral::GlobalFilter& f) {
  const ComplexTensor full = spectral::expand_hermitian(f);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y(x.shape());
  std::vector<double> kernel(h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * h * w;
    for (std::size_t py = 0; py < h; ++py) {
      for (std::size_t px = 0; px < w; ++px) {
        double s = 0.0;
        for (std::size_t u = 0; u < h; ++u) {
          for (std::size_t v = 0; v < w; ++v) {
            const double phase = 2.0 * std::numbers::pi *
                                 (static_cast<double>((u * py) % h) / static_cast<double>(h) +
                                  static_cast<double>((v * px) % w) / static_cast<double>(w));
            s += full.re[base + u * w + v] * std::cos(phase) - full.im[base + u * w + v] * std::sin(phase);
          }
        }
        kernel[py * w + px] = s / static_cast<double>(h * w);
      }
    }
    for (std::size_t py = 0; py < h; ++py) {
      for (std::size_t px = 0; px < w; ++px) {
        double s = 0.0;
        for (std::size_t qy = 0; qy < h; ++qy) {
          for (std::size_t qx = 0; qx < w; ++qx) {
            s += x[base + qy * w + qx] * kernel[((py + h - qy) % h) * w + (px + w - qx) % w];
          }
        }
        y[base + py * w + px] = s;
      }
    }
  }
  return y;
}

inline CheckGroup spectral_group(std::uint64_t seed = 1) {
  Rng rng(seed);
  CheckGroup g{"spectral", {}};
  const std::size_t sides[] = {1, 2, 4, 8, 16, 32};
  double dft_err = 0.0, trip_err = 0.0, parseval_err = 0.0;
  for (std::size_t h : sides) {
    for (std::size_t w : sides) {
      if (h != w && h * w > 128) continue;
      const Tensor x = rng_normal(rng, {h, w});
      const ComplexTensor fast = spectral::fft2(x);
      const ComplexTensor slow = spectral::naive_dft2(x);
      for (std::size_t i = 0; i < fast.size(); ++i) {
        dft_err = std::max({dft_err, std::abs(fast.re[i] - slow.re[i]), std::abs(fast.im[i] - slow.im[i])});
      }
      const ComplexTensor back = spectral::ifft2(fast);
      for (std::size_t i = 0; i < back.size(); ++i) {
        trip_err = std::max({trip_err, std::abs(back.re[i] - x[i]), std::abs(back.im[i])});
      }
      double energy_x = 0.0, energy_f = 0.0;
      for (double v : x.values()) energy_x += v * v;
      for (std::size_t i = 0; i < fast.size(); ++i) energy_f += fast.re[i] * fast.re[i] + fast.im[i] * fast.im[i];
      energy_f /= static_cast<double>(h * w);
      parseval_err = std::max(parseval_err, std::abs(energy_f - energy_x) / energy_x);
    }
  }
  g.checks.push_back(bound_check("fft2 matches naive DFT", dft_err, 1e-10));
  g.checks.push_back(bound_check("ifft2(fft2(x)) round trip", trip_err, 1e-10));
  g.checks.push_back(bound_check("Parseval relative error", parseval_err, 1e-12));

  double conv_err = 0.0, residue = 0.0;
  for (std::size_t side : {4, 8}) {
    const Tensor x = rng_normal(rng, {2, side, side});
    const auto f = spectral::GlobalFilter::random(2, side, side, rng, 1.0);
    conv_err = std::max(conv_err, max_abs_diff(spectral::apply_global_filter(x, f), circular_convolution_oracle(x, f)));
    residue = std::max(residue, spectral::imaginary_residue(x, f));
  }
  g.checks.push_back(bound_check("global filter equals circular convolution", conv_err, 1e-9));
  g.checks.push_back(bound_check("filtered output is real", residue, 1e-10));
  return g;
}

// ---------------------------------------------------------------------------------------------
// Gradients

inline CheckGroup gradient_group(std::uint64_t seed = 1, const GradCheckOptions& opt = {}) {
  CheckGroup g{"gradients", {}};
  std::vector<GradReport> reports = run_gradient_suite(seed, opt);
  reports.push_back(check_model_stem(seed, opt));
  for (const auto& r : reports) {
    g.checks.push_back({r.name, r.pass(),
                        "max rel error " + sci(r.max_rel_error) + " over " + std::to_string(r.probes) +
                            " probes (bound " + sci(r.tolerance) + ")"});
  }

  Rng rng(seed + 1);
  const Tensor logits = rng_normal(rng, {5, 4}, 2.0);
  const std::vector<std::size_t> labels{0, 3, 1, 1, 2};
  const double focal0 = losses::focal_loss(logits, labels, 0.0).loss;
  double ce = 0.0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto r = logits.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - m);
    ce += -(r[labels[i]] - m - std::log(z));
  }
  ce /= static_cast<double>(logits.dim(0));
  g.checks.push_back(bound_check("focal loss at gamma 0 equals cross-entropy", std::abs(focal0 - ce), 1e-12));
  return g;
}

// ---------------------------------------------------------------------------------------------
// Incremental learner

/// Points scattered around `k` well separated centers in `d` dimensions.
inline Tensor clustered_points(Rng& rng, const Tensor& centers, std::span<const std::size_t> labels,
                               double spread) {
  const std::size_t d = centers.dim(1);
  Tensor x({labels.size(), d});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = centers.at(labels[i], j) + spread * rng.normal();
  }
  return x;
}

inline double accuracy_of(const prototype::PrototypeState& st, const Tensor& p, const Tensor& h,
                          std::span<const std::size_t> labels) {
  const auto pred = prototype::predict(st, p, h);
  return protocol::accuracy(pred, labels);
}

inline CheckGroup incremental_group(std::uint64_t seed = 1) {
  Rng rng(seed);
  CheckGroup g{"incremental", {}};
  const std::size_t d = 6, m = 64;
  prototype::PrototypeConfig pcfg;
  pcfg.projection_dim = m;

  // Order invariance: the same samples ingested forwards and in reverse.
  {
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 30; ++i) labels.push_back(i % 3);
    const Tensor f = rng_normal(rng, {labels.size(), d});
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
    std::vector<std::size_t> rev_labels;
    for (std::size_t i : order) rev_labels.push_back(labels[i]);
    const Tensor f_rev = prototype::gather_rows(f, order);

    auto a = prototype::init_projection(seed, d, m, pcfg);
    auto b = prototype::init_projection(seed, d, m, pcfg);
    prototype::ingest_task(a, prototype::embed(a, f), labels);
    prototype::ingest_task(b, prototype::embed(b, f_rev), rev_labels);
    double err = max_abs_diff(a.g, b.g);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& sa = a.sums[*a.slot(c)];
      const auto& sb = b.sums[*b.slot(c)];
      for (std::size_t i = 0; i < m; ++i) err = std::max(err, std::abs(sa[i] - sb[i]));
    }
    const Tensor pa = prototype::compute_prototypes(a, 1.0);
    const Tensor pb = prototype::compute_prototypes(b, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < m; ++i) err = std::max(err, std::abs(pa.at(i, *a.slot(c)) - pb.at(i, *b.slot(c))));
    }
    const Tensor probe = rng_normal(rng, {20, d});
    const bool same = prototype::predict(a, pa, prototype::embed(a, probe)) ==
                      prototype::predict(b, pb, prototype::embed(b, probe));
    g.checks.push_back(bound_check("sample order invariance of G, S and P", err, 1e-10));
    g.checks.push_back({"sample order invariance of predictions", same, same ? "identical" : "differ"});
  }

  // Incremental Gram equals the batch Gram.
  {
    const Tensor f = rng_normal(rng, {25, d});
    std::vector<std::size_t> labels(25);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4;
    auto inc = prototype::init_projection(seed, d, m, pcfg);
    const Tensor h = prototype::embed(inc, f);
    for (std::size_t start = 0; start < 25; start += 7) {
      std::vector<std::size_t> rows;
      for (std::size_t r = start; r < std::min<std::size_t>(25, start + 7); ++r) rows.push_back(r);
      std::vector<std::size_t> part_labels;
      for (std::size_t r : rows) part_labels.push_back(labels[r]);
      prototype::ingest_task(inc, prototype::gather_rows(h, rows), part_labels);
    }
    Tensor batch({m, m});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < h.dim(0); ++r) s += h.at(r, i) * h.at(r, j);
        batch.at(i, j) = s;
      }
    }
    g.checks.push_back(bound_check("incremental Gram equals batch H^T H", max_abs_diff(inc.g, batch), 1e-9));
  }

  // Separable clusters, then a 5-shot fourth cluster.
  {
    Tensor centers({4, d});
    for (std::size_t k = 0; k < 4; ++k) centers.at(k, k) = 8.0;
    std::vector<std::size_t> base_labels;
    for (std::size_t i = 0; i < 60; ++i) base_labels.push_back(i % 3);
    const Tensor base = clustered_points(rng, centers, base_labels, 0.5);
    auto st = prototype::init_projection(seed, d, m, pcfg);
    const Tensor hb = prototype::embed(st, base);
    prototype::ingest_task(st, hb, base_labels);
    Rng lambda_rng(seed + 7);
    prototype::select_lambda(st, hb, base_labels, lambda_rng, pcfg);
    const double base_acc = accuracy_of(st, prototype::compute_prototypes(st), hb, base_labels);

    std::vector<std::size_t> new_labels(5, 3);
    const Tensor fresh = clustered_points(rng, centers, new_labels, 0.5);
    prototype::ingest_task(st, prototype::embed(st, fresh), new_labels);
    const double old_acc = accuracy_of(st, prototype::compute_prototypes(st), hb, base_labels);
    g.checks.push_back({"3-cluster oracle train accuracy >= 0.99", base_acc >= 0.99, "accuracy " + sci(base_acc)});
    g.checks.push_back({"old classes after a 5-shot increment >= 0.99", old_acc >= 0.99, "accuracy " + sci(old_acc)});
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Lambda selection

/// Targets that are an exact linear function of the embedding: the validation error is
/// smallest for the least regularization.
inline CheckGroup lambda_group(std::uint64_t seed = 1) {
  CheckGroup g{"lambda", {}};
  const std::size_t classes = 3, per_class = 40, m = 12;
  prototype::PrototypeConfig pcfg;
  pcfg.projection_dim = m;
  pcfg.activation = prototype::Activation::identity;
  pcfg.normalize_class_means = false;

  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < classes * per_class; ++i) labels.push_back(i % classes);
  auto run = [&](std::uint64_t split_seed) {
    auto st = prototype::init_projection(seed, m, m, pcfg);
    st.w = Tensor({m, m});
    for (std::size_t i = 0; i < m; ++i) st.w.at(i, i) = 1.0;
    Tensor f({labels.size(), m});
    for (std::size_t i = 0; i < labels.size(); ++i) {
      f.at(i, labels[i]) = 1.0;
      f.at(i, classes + i % (m - classes)) = 1.0;
    }
    const Tensor h = prototype::embed(st, f);
    prototype::ingest_task(st, h, labels);
    Rng r(split_seed);
    return prototype::select_lambda(st, h, labels, r, pcfg);
  };
  const auto first = run(seed);
  const auto again = run(seed);
  const auto grid = pcfg.lambda_grid();
  const bool in_grid = std::find(grid.begin(), grid.end(), first.lambda) != grid.end();
  g.checks.push_back({"selected lambda lies on the decade grid", in_grid, "lambda " + sci(first.lambda)});
  g.checks.push_back({"selection is deterministic per seed", first.lambda == again.lambda,
                      sci(first.lambda) + " vs " + sci(again.lambda)});
  g.checks.push_back({"noiseless instance selects lambda <= 1e-2", first.lambda <= 1e-2, "lambda " + sci(first.lambda)});
  return g;
}

// ---------------------------------------------------------------------------------------------
// Metrics

inline CheckGroup metrics_group() {
  CheckGroup g{"metrics", {}};
  const std::vector<double> table1{94.54, 80.21, 84.10, 85.08, 78.98, 81.93, 83.60};
  const std::vector<double> table2{90.54, 88.65};
  const double a1 = protocol::average_incremental_accuracy(table1);
  const double pd1 = protocol::performance_drop(table1);
  const double a2 = protocol::average_incremental_accuracy(table2);
  const double pd2 = protocol::performance_drop(table2);
  g.checks.push_back(bound_check("1-way 5-shot row: mean accuracy 84.06", std::abs(a1 - 84.06), 0.005));
  g.checks.push_back(bound_check("1-way 5-shot row: drop 10.94", std::abs(pd1 - 10.94), 0.001));
  g.checks.push_back(bound_check("cross-domain row: mean accuracy 89.595", std::abs(a2 - 89.595), 0.005));
  g.checks.push_back(bound_check("cross-domain row: drop 1.89", std::abs(pd2 - 1.89), 0.001));
  return g;
}

inline std::vector<CheckGroup> run_selfcheck(std::uint64_t seed = 1, const GradCheckOptions& opt = {}) {
  return {spectral_group(seed), gradient_group(seed, opt), incremental_group(seed), lambda_group(seed),
          metrics_group()};
}

}  // namespace dilhyfs::check
