#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/losses.hpp"
#include "dilhyfs/model/blocks.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/nn/layers.hpp"
#include "dilhyfs/nn/sgd.hpp"

// Central finite-difference checks for every layer, block and loss.

namespace dilhyfs::check {

struct GradReport {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool pass() const { return max_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_probes = 24;  // per tensor, spread evenly over the entries
  std::string corrupt;          // name of a check whose analytic gradient is perturbed
};

/// |a - n| / max(|a|, |n|), with a floor so gradients that are zero on both sides compare equal.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace detail {

inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_probes) {
  std::vector<std::size_t> out;
  if (n <= max_probes) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t k = 0; k < max_probes; ++k) out.push_back(k * (n - 1) / (max_probes - 1));
  return out;
}

/// Compares `analytic` against central differences of `loss` in the entries of `target`.
inline void compare(Tensor& target, const Tensor& analytic, const std::function<double()>& loss,
                    const GradCheckOptions& opt, GradReport& rep) {
  for (std::size_t i : probe_indices(target.size(), opt.max_probes)) {
    const double saved = target[i];
    target[i] = saved + opt.epsilon;
    const double up = loss();
    target[i] = saved - opt.epsilon;
    const double down = loss();
    target[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.epsilon);
    rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic[i], numeric));
    ++rep.probes;
  }
}

}  // namespace detail

/// Checks a differentiable map y = forward(x) with parameters `params` through the scalar
/// L = <w, y> for a random fixed w. `backward(dL/dy)` must return dL/dx and accumulate the
/// parameter gradients.
inline GradReport check_map(const std::string& name, Tensor x, const nn::ParamRefs& params,
                            const std::function<Tensor(const Tensor&)>& forward,
                            const std::function<Tensor(const Tensor&)>& backward, Rng& rng,
                            const GradCheckOptions& opt) {
  GradReport rep;
  rep.name = name;
  rep.tolerance = opt.tolerance;
  const Tensor y0 = forward(x);
  const Tensor w = rng_normal(rng, y0.shape());
  nn::zero_grads(params);
  forward(x);
  Tensor gx = backward(w);
  std::vector<Tensor> gp;
  for (nn::Parameter* p : params) gp.push_back(p->grad);
  if (opt.corrupt == name) {
    gx *= 1.01;
    for (Tensor& g : gp) g *= 1.01;
  }
  auto loss = [&] {
    const Tensor y = forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  detail::compare(x, gx, loss, opt, rep);
  for (std::size_t k = 0; k < params.size(); ++k) detail::compare(params[k]->value, gp[k], loss, opt, rep);
  return rep;
}

inline GradReport check_layer(const std::string& name, nn::Layer& layer, const Tensor& x, Rng& rng,
                              const GradCheckOptions& opt) {
  return check_map(
      name, x, layer.parameters(), [&](const Tensor& in) { return layer.forward(in); },
      [&](const Tensor& g) { return layer.backward(g); }, rng, opt);
}

/// Checks a scalar function of one tensor given its analytic gradient.
inline GradReport check_scalar(const std::string& name, Tensor x,
                               const std::function<double(const Tensor&)>& value,
                               const std::function<Tensor(const Tensor&)>& gradient,
                               const GradCheckOptions& opt) {
  GradReport rep;
  rep.name = name;
  rep.tolerance = opt.tolerance;
  Tensor g = gradient(x);
  if (opt.corrupt == name) g *= 1.01;
  detail::compare(x, g, [&] { return value(x); }, opt, rep);
  return rep;
}

/// Values bounded away from zero, so piecewise-linear layers are probed off their kinks.
inline Tensor off_kink(Rng& rng, const Shape& shape) {
  Tensor t = rng_normal(rng, shape);
  for (double& v : t.values()) v = v >= 0.0 ? v + 0.1 : v - 0.1;
  return t;
}

/// The whole battery on small randomized shapes.
inline std::vector<GradReport> run_gradient_suite(std::uint64_t seed = 1, const GradCheckOptions& opt = {}) {
  Rng rng(seed);
  std::vector<GradReport> out;

  {
    nn::Conv3x3 conv("conv", 3, 4, 1, rng);
    out.push_back(check_layer("conv3x3", conv, rng_normal(rng, {3, 5, 6}), rng, opt));
  }
  {
    nn::Conv3x3 conv("conv", 2, 3, 2, rng);
    out.push_back(check_layer("conv3x3_stride2", conv, rng_normal(rng, {2, 6, 5}), rng, opt));
  }
  {
    nn::Linear lin("linear", 5, 3, rng);
    out.push_back(check_layer("linear", lin, rng_normal(rng, {4, 5}), rng, opt));
  }
  {
    nn::Relu relu;
    out.push_back(check_layer("relu", relu, off_kink(rng, {2, 3, 4}), rng, opt));
  }
  {
    nn::Gelu gelu;
    out.push_back(check_layer("gelu", gelu, rng_normal(rng, {3, 7}, 2.0), rng, opt));
  }
  {
    nn::LayerNorm ln("layernorm", 6);
    for (nn::Parameter* p : ln.parameters()) p->value = rng_normal(rng, p->value.shape());
    out.push_back(check_layer("layernorm", ln, rng_normal(rng, {4, 6}), rng, opt));
  }
  {
    nn::ChannelLayerNorm ln("channel_layernorm", 3);
    for (nn::Parameter* p : ln.parameters()) p->value = rng_normal(rng, p->value.shape());
    out.push_back(check_layer("channel_layernorm", ln, rng_normal(rng, {3, 4, 4}), rng, opt));
  }
  {
    nn::GlobalFilterLayer gf("global_filter", 2, 8, 4, rng, 1.0);
    out.push_back(check_layer("global_filter", gf, rng_normal(rng, {2, 8, 4}), rng, opt));
  }
  {
    nn::ScaleShift fuse("scale_shift");
    fuse.a().value[0] = 0.7;
    fuse.b().value[0] = -0.2;
    const Tensor g = rng_normal(rng, {2, 3, 3});
    out.push_back(check_map(
        "scale_shift", rng_normal(rng, {2, 3, 3}), {&fuse.a(), &fuse.b()},
        [&](const Tensor& r) { return fuse.forward(r, g); },
        [&](const Tensor& go) { return fuse.backward(go); }, rng, opt));
  }
  {
    nn::AvgPool pool;
    out.push_back(check_layer("avg_pool", pool, rng_normal(rng, {3, 4, 4}), rng, opt));
  }
  {
    nn::Downsample down("downsample", 2, 3, rng);
    out.push_back(check_layer("downsample", down, rng_normal(rng, {2, 4, 4}), rng, opt));
  }
  {
    model::ResidualBlock block("residual_block", 2, 3, 2, rng);
    nn::ParamRefs params;
    block.collect(params);
    out.push_back(check_map(
        "residual_block", rng_normal(rng, {2, 8, 8}), params,
        [&](const Tensor& x) { return block.forward(x); },
        [&](const Tensor& g) { return block.backward(g); }, rng, opt));
  }
  {
    model::GfBlock block("gf_block", 3, 4, 4, 2, 0.5, rng);
    nn::ParamRefs params;
    block.collect(params);
    out.push_back(check_map(
        "gf_block", rng_normal(rng, {3, 4, 4}), params,
        [&](const Tensor& x) { return block.forward(x); },
        [&](const Tensor& g) { return block.backward(g); }, rng, opt));
  }

  const std::vector<std::size_t> labels{2, 0, 1, 2};
  for (double gamma : {0.0, 0.5, 2.0}) {
    const std::string name = gamma == 0.5 ? "focal_loss" : "focal_loss_gamma" + std::to_string(static_cast<int>(gamma));
    out.push_back(check_scalar(
        name, rng_normal(rng, {4, 3}, 1.5),
        [&](const Tensor& z) { return losses::focal_loss(z, labels, gamma).loss; },
        [&](const Tensor& z) { return losses::focal_loss(z, labels, gamma).grad; }, opt));
  }
  {
    losses::CenterBank bank(3, 5);
    bank.centers = rng_normal(rng, {3, 5});
    out.push_back(check_scalar(
        "center_loss", rng_normal(rng, {4, 5}),
        [&](const Tensor& f) { return losses::center_loss(f, labels, bank).loss; },
        [&](const Tensor& f) { return losses::center_loss(f, labels, bank).grad; }, opt));
  }
  return out;
}

/// Gradient of a scalar loss with respect to the stem weights of a full (small) model,
/// propagated through every stage of both branches.
inline GradReport check_model_stem(std::uint64_t seed = 1, const GradCheckOptions& base = {}) {
  GradCheckOptions opt = base;
  opt.tolerance = 1e-3;
  Rng rng(seed);
  model::ModelConfig cfg;
  cfg.input_size = 16;
  cfg.stage_dims = {4, 6, 8, 8};
  cfg.spatial_blocks = {1, 1, 1, 1};
  cfg.spectral_blocks = {1, 1, 1, 1};
  model::DualBranchModel net(cfg, rng);
  const Tensor image = rng_normal(rng, {1, 16, 16});
  const Tensor w = rng_normal(rng, {net.feature_dim()});
  const nn::ParamRefs all = net.parameters();
  nn::zero_grads(all);
  net.forward_features(image);
  net.backward_features(w);
  nn::Parameter& stem = *net.stem_parameters().front();
  Tensor analytic = stem.grad;
  if (opt.corrupt == "model_stem") analytic *= 1.01;
  GradReport rep;
  rep.name = "model_stem";
  rep.tolerance = opt.tolerance;
  detail::compare(stem.value, analytic, [&] {
    const Tensor f = net.forward_features(image);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
    return s;
  }, opt, rep);
  return rep;
}

}  // namespace dilhyfs::check
