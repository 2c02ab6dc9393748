#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/nn/ops.hpp"
#include "dilhyfs/spectral/global_filter.hpp"

namespace dilhyfs::nn {

/// A named learnable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
  Tensor* grad_if_trainable() { return trainable ? &grad : nullptr; }
};

using ParamRefs = std::vector<Parameter*>;

enum class LayerKind {
  conv3x3,
  linear,
  relu,
  gelu,
  layernorm,
  global_filter,
  scale_shift,
  avg_pool,
  downsample,
};

inline std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::gelu: return "gelu";
    case LayerKind::layernorm: return "layernorm";
    case LayerKind::global_filter: return "global_filter";
    case LayerKind::scale_shift: return "scale_shift";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::downsample: return "downsample";
  }
  return "unknown";
}

/// Single-input layer. forward() caches what backward() needs; backward() returns the input
/// gradient and accumulates parameter gradients for trainable parameters only.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(ParamRefs&) {}

  ParamRefs parameters() {
    ParamRefs out;
    collect(out);
    return out;
  }
};

inline void set_trainable(const ParamRefs& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::string name, std::size_t cin, std::size_t cout, std::size_t stride, Rng& rng)
      : weight_(name + ".w", rng_normal(rng, {cout, cin, 3, 3}, std::sqrt(2.0 / (9.0 * cin)))),
        bias_(name + ".b", Tensor({cout})),
        stride_(stride) {}

  LayerKind kind() const override { return LayerKind::conv3x3; }

  Tensor forward(const Tensor& x) override {
    return conv3x3_forward(x, weight_.value, bias_.value, stride_, &cache_);
  }

  Tensor backward(const Tensor& grad_out) override {
    return conv3x3_backward(cache_, weight_.value, grad_out, weight_.grad_if_trainable(),
                            bias_.grad_if_trainable());
  }

  void collect(ParamRefs& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  std::size_t stride_;
  Conv3x3Cache cache_;
};

/// Row-wise affine map on [N x Din].
class Linear final : public Layer {
 public:
  Linear(std::string name, std::size_t din, std::size_t dout, Rng& rng, double gain = 1.0)
      : weight_(name + ".w", rng_normal(rng, {din, dout}, gain / std::sqrt(static_cast<double>(din)))),
        bias_(name + ".b", Tensor({dout})) {}

  LayerKind kind() const override { return LayerKind::linear; }

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return linear_forward(x, weight_.value, bias_.value);
  }

  Tensor backward(const Tensor& grad_out) override {
    return linear_backward(input_, weight_.value, grad_out, weight_.grad_if_trainable(),
                           bias_.grad_if_trainable());
  }

  void collect(ParamRefs& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Tensor forward(const Tensor& x) override {
    input_ = x;
    return relu_forward(x);
  }
  Tensor backward(const Tensor& grad_out) override { return relu_backward(input_, grad_out); }

 private:
  Tensor input_;
};

class Gelu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::gelu; }
  Tensor forward(const Tensor& x) override {
    input_ = x;
    return gelu_forward(x);
  }
  Tensor backward(const Tensor& grad_out) override { return gelu_backward(input_, grad_out); }

 private:
  Tensor input_;
};

/// Normalizes over the last axis.
class LayerNorm final : public Layer {
 public:
  LayerNorm(std::string name, std::size_t dim, double eps = 1e-6)
      : gamma_(name + ".gamma", Tensor({dim}, 1.0)), beta_(name + ".beta", Tensor({dim})), eps_(eps) {}

  LayerKind kind() const override { return LayerKind::layernorm; }

  Tensor forward(const Tensor& x) override {
    return layernorm_forward(x, gamma_.value, beta_.value, eps_, &cache_);
  }
  Tensor backward(const Tensor& grad_out) override {
    return layernorm_backward(cache_, gamma_.value, grad_out, gamma_.grad_if_trainable(),
                              beta_.grad_if_trainable());
  }
  void collect(ParamRefs& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }

 private:
  Parameter gamma_;
  Parameter beta_;
  double eps_;
  LayerNormCache cache_;
};

/// Layernorm across channels at each spatial position of a [C x H x W] map.
class ChannelLayerNorm final : public Layer {
 public:
  ChannelLayerNorm(std::string name, std::size_t channels) : norm_(std::move(name), channels) {}

  LayerKind kind() const override { return LayerKind::layernorm; }

  Tensor forward(const Tensor& x) override {
    h_ = x.dim(1);
    w_ = x.dim(2);
    return tokens_to_chw(norm_.forward(chw_to_tokens(x)), h_, w_);
  }
  Tensor backward(const Tensor& grad_out) override {
    return tokens_to_chw(norm_.backward(chw_to_tokens(grad_out)), h_, w_);
  }
  void collect(ParamRefs& out) override { norm_.collect(out); }

 private:
  LayerNorm norm_;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
};

/// Frequency-domain filter on [C x H x W]; K stored as real and imaginary half-spectrum planes.
class GlobalFilterLayer final : public Layer {
 public:
  GlobalFilterLayer(std::string name, std::size_t channels, std::size_t h, std::size_t w, Rng& rng,
                    double init_std = 0.02)
      : height_(h), width_(w) {
    const auto f = spectral::GlobalFilter::random(channels, h, w, rng, init_std);
    k_re_ = Parameter(name + ".k_re", Tensor(f.k.shape, f.k.re));
    k_im_ = Parameter(name + ".k_im", Tensor(f.k.shape, f.k.im));
  }

  LayerKind kind() const override { return LayerKind::global_filter; }

  spectral::GlobalFilter filter() const {
    spectral::GlobalFilter f(k_re_.value.dim(0), height_, width_);
    f.k.re = k_re_.value.storage();
    f.k.im = k_im_.value.storage();
    return f;
  }

  Tensor forward(const Tensor& x) override {
    input_ = x;
    spectrum_ = spectral::fft2(x);
    const auto y = spectral::filter_spectrum(spectrum_, spectral::expand_hermitian(filter()));
    return y.real();
  }

  Tensor backward(const Tensor& grad_out) override {
    const bool want_k = k_re_.trainable || k_im_.trainable;
    auto g = spectral::global_filter_backward(input_, filter(), grad_out, &spectrum_, want_k);
    if (k_re_.trainable) {
      for (std::size_t i = 0; i < g.grad_k.size(); ++i) k_re_.grad[i] += g.grad_k.re[i];
    }
    if (k_im_.trainable) {
      for (std::size_t i = 0; i < g.grad_k.size(); ++i) k_im_.grad[i] += g.grad_k.im[i];
    }
    return std::move(g.grad_x);
  }

  void collect(ParamRefs& out) override {
    out.push_back(&k_re_);
    out.push_back(&k_im_);
  }

  Parameter& k_re() { return k_re_; }
  Parameter& k_im() { return k_im_; }

 private:
  Parameter k_re_;
  Parameter k_im_;
  std::size_t height_;
  std::size_t width_;
  Tensor input_;
  ComplexTensor spectrum_;
};

class AvgPool final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::avg_pool; }
  Tensor forward(const Tensor& x) override {
    shape_ = x.shape();
    return avg_pool_forward(x);
  }
  Tensor backward(const Tensor& grad_out) override { return avg_pool_backward(shape_, grad_out); }

 private:
  Shape shape_;
};

class Downsample final : public Layer {
 public:
  Downsample(std::string name, std::size_t cin, std::size_t cout, Rng& rng)
      : weight_(name + ".w", rng_normal(rng, {4 * cin, cout}, 1.0 / std::sqrt(4.0 * cin))),
        bias_(name + ".b", Tensor({cout})) {}

  LayerKind kind() const override { return LayerKind::downsample; }

  Tensor forward(const Tensor& x) override {
    input_ = x;
    return downsample_forward(x, weight_.value, bias_.value);
  }
  Tensor backward(const Tensor& grad_out) override {
    return downsample_backward(input_, weight_.value, grad_out, weight_.grad_if_trainable(),
                               bias_.grad_if_trainable());
  }
  void collect(ParamRefs& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

/// Two-input fusion z = a * (r + g) + b with learnable scalars (a = 1, b = 0 initially).
class ScaleShift {
 public:
  explicit ScaleShift(std::string name)
      : a_(name + ".a", Tensor({1}, 1.0)), b_(name + ".b", Tensor({1}, 0.0)) {}

  static constexpr LayerKind kind() { return LayerKind::scale_shift; }

  Tensor forward(const Tensor& r, const Tensor& g) {
    r_ = r;
    g_ = g;
    return scale_shift_forward(r, g, a_.value[0], b_.value[0]);
  }

  /// Gradient w.r.t. r; the gradient w.r.t. g is identical.
  Tensor backward(const Tensor& grad_out) {
    auto grads = scale_shift_backward(r_, g_, a_.value[0], grad_out);
    if (a_.trainable) a_.grad[0] += grads.grad_a;
    if (b_.trainable) b_.grad[0] += grads.grad_b;
    return std::move(grads.grad_r);
  }

  void collect(ParamRefs& out) {
    out.push_back(&a_);
    out.push_back(&b_);
  }

  Parameter& a() { return a_; }
  Parameter& b() { return b_; }

 private:
  Parameter a_;
  Parameter b_;
  Tensor r_;
  Tensor g_;
};

}  // namespace dilhyfs::nn
