#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dilhyfs/check/selfcheck.hpp"
#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/linalg.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/prototype.hpp"

using namespace dilhyfs;
using namespace dilhyfs::prototype;

namespace {

PrototypeConfig config_with(std::size_t m) {
  PrototypeConfig c;
  c.projection_dim = m;
  return c;
}

std::vector<std::size_t> cyclic_labels(std::size_t n, std::size_t k) {
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % k;
  return y;
}

}  // namespace

TEST(Projection, ShapeSeedAndActivation) {
  const auto a = init_projection(5, 4, 30);
  const auto b = init_projection(5, 4, 30);
  EXPECT_EQ(a.w.shape(), (Shape{4, 30}));
  EXPECT_EQ(max_abs_diff(a.w, b.w), 0.0);
  EXPECT_GT(max_abs_diff(a.w, init_projection(6, 4, 30).w), 0.0);
  Rng rng(1);
  const Tensor f = rng_normal(rng, {3, 4});
  const Tensor h = embed(a, f);
  const Tensor lin = matmul(f, a.w);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h[i], std::max(lin[i], 0.0));
  EXPECT_THROW(embed(a, Tensor({3, 5})), DimensionError);
  EXPECT_THROW(init_projection(1, 4, 0), ConfigError);
}

TEST(Ingest, EmptyStateHasNoPrototypes) {
  const auto st = init_projection(1, 3, 8);
  for (double v : st.g.values()) EXPECT_EQ(v, 0.0);
  const Tensor p = compute_prototypes(st, 1.0);
  EXPECT_EQ(p.dim(1), 0u);
  EXPECT_THROW(predict(st, p, Tensor({1, 8})), DataError);
  EXPECT_THROW(compute_prototypes(st), ConfigError);
}

TEST(Ingest, OrderInvarianceOverShuffles) {
  Rng rng(2);
  const std::size_t d = 5, m = 40;
  const auto labels = cyclic_labels(24, 4);
  const Tensor f = rng_normal(rng, {24, d});
  auto ref = init_projection(3, d, m);
  ingest_task(ref, embed(ref, f), labels);
  const Tensor p_ref = compute_prototypes(ref, 0.1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> order(24);
    for (std::size_t i = 0; i < 24; ++i) order[i] = i;
    rng.shuffle(order);
    auto st = init_projection(3, d, m);
    // Two tasks of unequal size in a shuffled order.
    for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{0, 9}, {9, 24}}) {
      std::vector<std::size_t> rows(order.begin() + lo, order.begin() + hi), y;
      for (std::size_t r : rows) y.push_back(labels[r]);
      ingest_task(st, embed(st, gather_rows(f, rows)), y);
    }
    EXPECT_LE(max_abs_diff(st.g, ref.g), 1e-10);
    const Tensor p = compute_prototypes(st, 0.1);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(p.at(i, *st.slot(c)), p_ref.at(i, *ref.slot(c)), 1e-10);
  }
}

TEST(Ingest, IncrementalGramEqualsBatchOuterProducts) {
  Rng rng(4);
  const std::size_t m = 17;
  auto st = init_projection(4, 3, m);
  std::vector<Tensor> parts;
  for (std::size_t n : {1u, 6u, 11u}) {
    const Tensor h = rng_normal(rng, {n, m});
    ingest_task(st, h, cyclic_labels(n, 2));
    parts.push_back(h);
  }
  Tensor batch({m, m});
  for (const Tensor& h : parts)
    for (std::size_t r = 0; r < h.dim(0); ++r)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) batch.at(i, j) += h.at(r, i) * h.at(r, j);
  EXPECT_LE(max_abs_diff(st.g, batch), 1e-9);
  EXPECT_EQ(st.counts[*st.slot(0)] + st.counts[*st.slot(1)], 18u);
}

TEST(Ingest, RegistryFollowsArrivalOrder) {
  auto st = init_projection(1, 2, 4);
  const std::vector<std::size_t> y{7, 3, 7, 9};
  ingest_task(st, Tensor({4, 4}, 1.0), y);
  EXPECT_EQ(st.classes, (std::vector<std::size_t>{7, 3, 9}));
  EXPECT_EQ(st.counts, (std::vector<std::size_t>{2, 1, 1}));
  const std::vector<std::size_t> short_y{1};
  EXPECT_THROW(ingest_task(st, Tensor({2, 4}), short_y), DimensionError);
}

TEST(Prototypes, SolveTheRidgeSystem) {
  Rng rng(5);
  const std::size_t m = 9;
  auto st = init_projection(5, 3, m);
  const auto y = cyclic_labels(20, 3);
  ingest_task(st, rng_normal(rng, {20, m}), y);
  const Tensor p = compute_prototypes(st, 0.3);
  Tensor a = st.g;
  for (std::size_t i = 0; i < m; ++i) a.at(i, i) += 0.3;
  EXPECT_LE(max_abs_diff(matmul(a, p), class_means(st)), 1e-10);
}

TEST(Prototypes, ThreeClustersThenAFewShotFourth) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = check::incremental_group(seed);
    for (const auto& c : g.checks) EXPECT_TRUE(c.pass) << "seed " << seed << ": " << c.name << " " << c.detail;
  }
}

TEST(Lambda, DualScoresMatchPrimalScores) {
  Rng rng(6);
  const std::size_t d = 4, m = 60;
  const auto labels = cyclic_labels(30, 3);
  Tensor f = rng_normal(rng, {30, d});
  for (std::size_t i = 0; i < 30; ++i) f.at(i, labels[i]) += 3.0;
  auto st = init_projection(6, d, m, config_with(m));
  const Tensor h = embed(st, f);
  Rng split_rng(9);
  PrototypeConfig cfg = config_with(m);
  cfg.lambda_min_exp = -2;
  cfg.lambda_max_exp = 3;
  const auto sel = select_lambda(st, h, labels, split_rng, cfg);
  ASSERT_LT(sel.train_rows.size(), m);

  // Primal refit on the same split, scored by hand.
  auto fit = init_projection(6, d, m, cfg);
  for (std::size_t y : labels) fit.register_class(y);
  std::vector<std::size_t> train_y;
  for (std::size_t r : sel.train_rows) train_y.push_back(labels[r]);
  ingest_task(fit, gather_rows(h, sel.train_rows), train_y);
  const Tensor hv = gather_rows(h, sel.validation_rows);
  for (const auto& cand : sel.candidates) {
    ASSERT_TRUE(cand.feasible);
    const Tensor scores = matmul(hv, compute_prototypes(fit, cand.lambda));
    double sse = 0.0;
    for (std::size_t i = 0; i < scores.dim(0); ++i)
      for (std::size_t j = 0; j < scores.dim(1); ++j) {
        const double t = fit.classes[j] == labels[sel.validation_rows[i]] ? 1.0 : 0.0;
        sse += (scores.at(i, j) - t) * (scores.at(i, j) - t);
      }
    EXPECT_NEAR(cand.mse, sse / static_cast<double>(scores.size()), 1e-8 * std::max(1.0, cand.mse))
        << "lambda " << cand.lambda;
  }
}

TEST(Lambda, OnGridDeterministicAndSmallWhenNoiseless) {
  for (std::uint64_t seed : {1u, 4u}) {
    const auto g = check::lambda_group(seed);
    for (const auto& c : g.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.detail;
  }
}

TEST(Lambda, HeavyNoisePrefersMoreRegularization) {
  Rng rng(7);
  const std::size_t d = 40, m = 40;
  const auto labels = cyclic_labels(60, 3);
  PrototypeConfig cfg = config_with(m);
  cfg.activation = Activation::identity;
  auto st = init_projection(7, d, m, cfg);
  // Full-rank features and labels that carry no signal: a weak ridge fits the noise.
  const Tensor h = embed(st, rng_normal(rng, {60, d}));
  Rng split(8);
  const auto sel = select_lambda(st, h, labels, split, cfg);
  EXPECT_GE(sel.lambda, 1e3);
  EXPECT_EQ(sel.candidates.size(), 17u);
  EXPECT_GT(sel.candidates.front().mse, sel.candidates.back().mse);
}

TEST(Lambda, SingletonClassCannotBeStratified) {
  auto st = init_projection(1, 2, 5);
  const std::vector<std::size_t> y{0, 0, 1};
  Rng rng(1);
  EXPECT_THROW(select_lambda(st, Tensor({3, 5}, 1.0), y, rng, config_with(5)), DataError);
}
