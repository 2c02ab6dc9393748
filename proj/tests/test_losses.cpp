#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dilhyfs/check/gradcheck.hpp"
#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/losses.hpp"

using namespace dilhyfs;
using namespace dilhyfs::losses;

namespace {

// Cross-entropy straight from the definition, with long double accumulation.
double reference_ce(const Tensor& logits, const std::vector<std::size_t>& labels) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < logits.dim(1); ++j) s += std::exp(static_cast<long double>(logits.at(i, j)));
    total += std::log(s) - logits.at(i, labels[i]);
  }
  return static_cast<double>(total / logits.dim(0));
}

}  // namespace

TEST(Softmax, UniformAndShiftInvariant) {
  const Tensor p = softmax_probs(Tensor({2, 4}, 3.0));
  for (double v : p.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  Rng rng(1);
  Tensor x = rng_normal(rng, {3, 5}, 3.0);
  const Tensor p0 = softmax_probs(x);
  for (double& v : x.values()) v += 700.0;
  EXPECT_LE(max_abs_diff(softmax_probs(x), p0), 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (double v : p0.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(FocalLoss, GammaZeroHalfProbabilityIsLn2) {
  const std::vector<std::size_t> y{0};
  EXPECT_NEAR(focal_loss(Tensor::matrix({{0.0, 0.0}}), y, 0.0).loss, std::log(2.0), 1e-15);
}

TEST(FocalLoss, DefaultGammaAtPt09) {
  // Two logits [ln 9, 0] give p_t = 0.9 exactly; -(0.1)^0.5 ln 0.9 = 0.033318...
  const std::vector<std::size_t> y{0};
  const double loss = focal_loss(Tensor::matrix({{std::log(9.0), 0.0}}), y, 0.5).loss;
  EXPECT_NEAR(loss, 0.033318, 5e-7);
}

TEST(FocalLoss, SaturatedPredictionHasZeroLoss) {
  const std::vector<std::size_t> y{1};
  EXPECT_NEAR(focal_loss(Tensor::matrix({{-50.0, 50.0, -50.0}}), y, 0.5).loss, 0.0, 1e-30);
}

TEST(FocalLoss, GammaZeroEqualsCrossEntropy) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = rng_normal(rng, {6, 5}, 2.0);
    std::vector<std::size_t> y(6);
    for (auto& v : y) v = rng.below(5);
    EXPECT_NEAR(focal_loss(z, y, 0.0).loss, reference_ce(z, y), 1e-12);
  }
}

TEST(FocalLoss, NonIncreasingInPt) {
  for (double gamma : {0.0, 0.5, 2.0}) {
    double prev = INFINITY;
    for (int k = 1; k < 100; ++k) {
      const double pt = k / 100.0;
      const std::vector<std::size_t> y{0};
      const double loss = focal_loss(Tensor::matrix({{std::log(pt / (1 - pt)), 0.0}}), y, gamma).loss;
      EXPECT_LE(loss, prev + 1e-15);
      prev = loss;
    }
  }
}

TEST(FocalLoss, BadLabelThrows) {
  const std::vector<std::size_t> y{0, 3};
  EXPECT_THROW(focal_loss(Tensor({2, 3}), y, 0.5), LabelError);
}

TEST(FocalLoss, GradientFiniteDifferences) {
  check::GradCheckOptions opt;
  opt.tolerance = 1e-5;
  const std::vector<std::size_t> y{2, 0};
  Rng rng(3);
  const auto rep = check::check_scalar(
      "focal", rng_normal(rng, {2, 3}, 1.5), [&](const Tensor& z) { return focal_loss(z, y, 0.5).loss; },
      [&](const Tensor& z) { return focal_loss(z, y, 0.5).grad; }, opt);
  EXPECT_TRUE(rep.pass()) << rep.max_rel_error;
}

TEST(CenterLoss, HandArithmetic) {
  CenterBank bank(2, 2);
  const std::vector<std::size_t> y{1};
  const Tensor f = Tensor::matrix({{0.0, 2.0}});
  const auto r = center_loss(f, y, bank);
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_EQ(r.grad.at(0, 1), 2.0);
  bank.centers.at(1, 1) = 2.0;
  EXPECT_EQ(center_loss(f, y, bank).loss, 0.0);
}

TEST(CenterLoss, BatchSumMatchesDirectSum) {
  Rng rng(4);
  CenterBank bank(3, 4);
  bank.centers = rng_normal(rng, {3, 4});
  const Tensor f = rng_normal(rng, {3, 4});
  const std::vector<std::size_t> y{2, 2, 0};
  double direct = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) direct += 0.5 * std::pow(f.at(i, j) - bank.centers.at(y[i], j), 2);
  EXPECT_NEAR(center_loss(f, y, bank).loss, direct, 1e-12);
  EXPECT_GE(center_loss(f, y, bank).loss, 0.0);
}

TEST(UpdateCenters, HandArithmeticAndAbsentClasses) {
  CenterBank bank(2, 1, 1.0);
  bank.centers.at(1, 0) = 7.0;
  const std::vector<std::size_t> y{0};
  update_centers(bank, Tensor::matrix({{2.0}}), y);
  EXPECT_DOUBLE_EQ(bank.centers.at(0, 0), 1.0);
  EXPECT_EQ(bank.centers.at(1, 0), 7.0);
}

TEST(UpdateCenters, TwoSamplesOfOneClass) {
  CenterBank bank(1, 2, 0.5);
  bank.centers = Tensor::matrix({{1.0, -1.0}});
  const std::vector<std::size_t> y{0, 0};
  update_centers(bank, Tensor::matrix({{3.0, 0.0}, {-1.0, 2.0}}), y);
  // delta = ((1-3) + (1+1), (-1-0) + (-1-2)) / 3 = (0, -4/3); c -= 0.5 delta
  EXPECT_NEAR(bank.centers.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(bank.centers.at(0, 1), -1.0 + 2.0 / 3.0, 1e-15);
}

TEST(HybridLoss, WeightedSum) {
  CenterBank bank(3, 4);
  Rng rng(5);
  const Tensor z = rng_normal(rng, {2, 3});
  const Tensor f = rng_normal(rng, {2, 4});
  const std::vector<std::size_t> y{1, 2};
  LossConfig cfg;
  cfg.center_weight = 0.0;
  const auto h0 = hybrid_loss(z, f, y, bank, cfg);
  const auto focal = focal_loss(z, y, cfg.gamma);
  EXPECT_EQ(h0.loss, focal.loss);
  EXPECT_EQ(max_abs_diff(h0.grad_logits, focal.grad), 0.0);
  cfg.center_weight = 5e-4;
  const auto h = hybrid_loss(z, f, y, bank, cfg);
  EXPECT_NEAR(h.loss, h.focal + 5e-4 * h.center, 1e-15);
  EXPECT_NEAR(0.5 + 5e-4 * 100.0, 0.55, 1e-15);
}

TEST(HybridLoss, GradientFiniteDifferences) {
  Rng rng(6);
  CenterBank bank(3, 4);
  bank.centers = rng_normal(rng, {3, 4});
  LossConfig cfg;
  cfg.center_weight = 0.3;
  const std::vector<std::size_t> y{0, 2};
  const Tensor f = rng_normal(rng, {2, 4});
  const Tensor z = rng_normal(rng, {2, 3});
  check::GradCheckOptions opt;
  opt.tolerance = 1e-5;
  const auto rz = check::check_scalar(
      "hybrid_logits", z, [&](const Tensor& t) { return hybrid_loss(t, f, y, bank, cfg).loss; },
      [&](const Tensor& t) { return hybrid_loss(t, f, y, bank, cfg).grad_logits; }, opt);
  const auto rf = check::check_scalar(
      "hybrid_features", f, [&](const Tensor& t) { return hybrid_loss(z, t, y, bank, cfg).loss; },
      [&](const Tensor& t) { return hybrid_loss(z, t, y, bank, cfg).grad_features; }, opt);
  EXPECT_TRUE(rz.pass()) << rz.max_rel_error;
  EXPECT_TRUE(rf.pass()) << rf.max_rel_error;
}
