#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/linalg.hpp"
#include "dilhyfs/core/tensor.hpp"

// Forward/backward kernels for the layer set. Backward functions return input gradients and
// accumulate (+=) parameter gradients into caller-provided tensors when those are non-null.

namespace dilhyfs::nn {

// ---------------------------------------------------------------------------------------------
// conv3x3: zero padding 1, stride 1 or 2, weights [Cout x Cin x 3 x 3].

struct Conv3x3Cache {
  Shape input_shape;
  std::size_t stride = 1;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  Tensor cols;  // [Cin*9 x Ho*Wo] patch matrix, one row per kernel tap
};

namespace detail {

inline void check_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
    throw DimensionError("conv3x3: expected x [C x H x W] and w [Cout x Cin x 3 x 3], got " +
                         shape_string(x.shape()) + " and " + shape_string(w.shape()));
  }
  if (x.dim(0) != w.dim(1)) {
    throw DimensionError("conv3x3: input has " + std::to_string(x.dim(0)) +
                         " channels but weights expect " + std::to_string(w.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != w.dim(0)) {
    throw DimensionError("conv3x3: bias shape " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(w.dim(0)) + " output channels");
  }
  if (stride != 1 && stride != 2) throw ConfigError("conv3x3: stride must be 1 or 2");
}

}  // namespace detail

inline Tensor conv3x3_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                              std::size_t stride, Conv3x3Cache* cache = nullptr) {
  detail::check_conv(x, w, bias, stride);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  const std::size_t ho = (h - 1) / stride + 1;
  const std::size_t wo = (wd - 1) / stride + 1;
  const std::size_t positions = ho * wo;
  const std::size_t k = cin * 9;

  Tensor cols({k, positions});
  double* cp = cols.data();
  const double* xp = x.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = cp + (c * 9 + ky * 3 + kx) * positions;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = xp + (c * h + iy) * wd;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            dst[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(wd)) ? src[ix] : 0.0;
          }
        }
      }
    }
  }

  Tensor out({cout, ho, wo});
  kernel::gemm_acc(w.data(), cols.data(), out.data(), cout, k, positions);
  for (std::size_t c = 0; c < cout; ++c) {
    double* oc = out.data() + c * positions;
    for (std::size_t p = 0; p < positions; ++p) oc[p] += bias[c];
  }
  if (cache) {
    cache->input_shape = x.shape();
    cache->stride = stride;
    cache->out_h = ho;
    cache->out_w = wo;
    cache->cols = std::move(cols);
  }
  return out;
}

struct Conv3x3Grads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_bias;
};

/// Accumulates into grad_w / grad_bias when non-null; always returns grad_x.
inline Tensor conv3x3_backward(const Conv3x3Cache& cache, const Tensor& w, const Tensor& grad_out,
                               Tensor* grad_w, Tensor* grad_bias) {
  const std::size_t cin = cache.input_shape[0], h = cache.input_shape[1],
                    wd = cache.input_shape[2];
  const std::size_t cout = w.dim(0), ho = cache.out_h, wo = cache.out_w;
  const std::size_t positions = ho * wo, k = cin * 9;
  if (grad_out.shape() != Shape{cout, ho, wo}) {
    throw DimensionError("conv3x3_backward: grad_out " + shape_string(grad_out.shape()) +
                         " does not match output [" + std::to_string(cout) + "x" +
                         std::to_string(ho) + "x" + std::to_string(wo) + "]");
  }
  if (grad_w) {
    Tensor cols_t({positions, k});
    kernel::transpose(cache.cols.data(), cols_t.data(), k, positions);
    kernel::gemm_acc(grad_out.data(), cols_t.data(), grad_w->data(), cout, positions, k);
  }
  if (grad_bias) {
    for (std::size_t c = 0; c < cout; ++c) {
      const double* g = grad_out.data() + c * positions;
      double s = 0.0;
      for (std::size_t p = 0; p < positions; ++p) s += g[p];
      (*grad_bias)[c] += s;
    }
  }
  // Patch-matrix gradient W^T * grad_out, computed along whichever extent is longer.
  Tensor gcols({k, positions});
  if (positions >= k) {
    kernel::gemm_tn_acc(w.data(), grad_out.data(), gcols.data(), k, cout, positions);
  } else {
    Tensor go_t({positions, cout});
    kernel::transpose(grad_out.data(), go_t.data(), cout, positions);
    Tensor gcols_t({positions, k});
    kernel::gemm_acc(go_t.data(), w.data(), gcols_t.data(), positions, cout, k);
    kernel::transpose(gcols_t.data(), gcols.data(), positions, k);
  }

  Tensor grad_x(cache.input_shape);
  double* gx = grad_x.data();
  const std::size_t stride = cache.stride;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = gcols.data() + (c * 9 + ky * 3 + kx) * positions;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = gx + (c * h + iy) * wd;
          const double* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(wd)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return grad_x;
}

/// Convenience form returning all three gradients.
inline Conv3x3Grads conv3x3_backward(const Conv3x3Cache& cache, const Tensor& w,
                                     const Tensor& grad_out) {
  Conv3x3Grads g;
  g.grad_w = Tensor(w.shape());
  g.grad_bias = Tensor({w.dim(0)});
  g.grad_x = conv3x3_backward(cache, w, grad_out, &g.grad_w, &g.grad_bias);
  return g;
}

// ---------------------------------------------------------------------------------------------
// linear: x [N x Din] * w [Din x Dout] + b [Dout]

inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.rank() != 1 ||
      b.dim(0) != w.dim(1)) {
    throw DimensionError("linear: incompatible shapes x " + shape_string(x.shape()) + ", w " +
                         shape_string(w.shape()) + ", b " + shape_string(b.shape()));
  }
  Tensor out({x.dim(0), w.dim(1)});
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    std::copy(b.values().begin(), b.values().end(), out.row(i).begin());
  }
  kernel::gemm_acc(x.data(), w.data(), out.data(), x.dim(0), x.dim(1), w.dim(1));
  return out;
}

inline Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                              Tensor* grad_w, Tensor* grad_b) {
  const std::size_t n = x.dim(0), din = w.dim(0), dout = w.dim(1);
  if (grad_out.shape() != Shape{n, dout}) {
    throw DimensionError("linear_backward: grad_out shape " + shape_string(grad_out.shape()));
  }
  if (grad_w) kernel::gemm_tn_acc(x.data(), grad_out.data(), grad_w->data(), din, n, dout);
  if (grad_b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = grad_out.row(i);
      for (std::size_t j = 0; j < dout; ++j) (*grad_b)[j] += g[j];
    }
  }
  Tensor w_t = transpose(w);
  Tensor grad_x({n, din});
  kernel::gemm_acc(grad_out.data(), w_t.data(), grad_x.data(), n, dout, din);
  return grad_x;
}

// ---------------------------------------------------------------------------------------------
// Elementwise activations.

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  x.require_same_shape(grad_out, "relu_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

// GELU, tanh formulation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double kGeluCubic = 0.044715;
inline const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);

// tanh(u) as 1 - 2 / (e^{2u} + 1); within a few ulps of std::tanh and saturates cleanly.
inline double fast_tanh(double u) { return 1.0 - 2.0 / (std::exp(2.0 * u) + 1.0); }

inline Tensor gelu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) {
    const double t = fast_tanh(kGeluScale * (v + kGeluCubic * v * v * v));
    v = 0.5 * v * (1.0 + t);
  }
  return y;
}

inline Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
  x.require_same_shape(grad_out, "gelu_backward");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double t = fast_tanh(kGeluScale * (v + kGeluCubic * v * v * v));
    const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
    g[i] = grad_out[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// layernorm over the last axis.

struct LayerNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
};

inline Tensor layernorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                double eps = 1e-6, LayerNormCache* cache = nullptr) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1) {
    throw DimensionError("layernorm: bad ranks");
  }
  const std::size_t d = x.shape().back();
  if (d == 0 || gamma.dim(0) != d || beta.dim(0) != d) {
    throw DimensionError("layernorm: last axis " + std::to_string(d) + " vs gamma " +
                         shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
  }
  const std::size_t rows = x.size() / d;
  Tensor y(x.shape());
  Tensor x_hat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* hr = x_hat.data() + r * d;
    double* yr = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * is;
      yr[j] = gamma[j] * hr[j] + beta[j];
    }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

inline Tensor layernorm_backward(const LayerNormCache& cache, const Tensor& gamma,
                                 const Tensor& grad_out, Tensor* grad_gamma, Tensor* grad_beta) {
  cache.x_hat.require_same_shape(grad_out, "layernorm_backward");
  const std::size_t d = gamma.dim(0);
  const std::size_t rows = grad_out.size() / d;
  Tensor grad_x(grad_out.shape());
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = grad_out.data() + r * d;
    const double* h = cache.x_hat.data() + r * d;
    double mean_d = 0.0;
    double mean_dh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dxhat[j] = g[j] * gamma[j];
      mean_d += dxhat[j];
      mean_dh += dxhat[j] * h[j];
      if (grad_gamma) (*grad_gamma)[j] += g[j] * h[j];
      if (grad_beta) (*grad_beta)[j] += g[j];
    }
    mean_d /= static_cast<double>(d);
    mean_dh /= static_cast<double>(d);
    double* gx = grad_x.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      gx[j] = cache.inv_std[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
    }
  }
  return grad_x;
}

// ---------------------------------------------------------------------------------------------
// scale_shift fusion: z = a * (r + g) + b with scalar a, b.

inline Tensor scale_shift_forward(const Tensor& r, const Tensor& g, double a, double b) {
  r.require_same_shape(g, "scale_shift");
  Tensor z(r.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * (r[i] + g[i]) + b;
  return z;
}

struct ScaleShiftGrads {
  Tensor grad_r;  // equals grad_g
  double grad_a = 0.0;
  double grad_b = 0.0;
};

inline ScaleShiftGrads scale_shift_backward(const Tensor& r, const Tensor& g, double a,
                                            const Tensor& grad_out) {
  r.require_same_shape(g, "scale_shift_backward");
  r.require_same_shape(grad_out, "scale_shift_backward");
  ScaleShiftGrads out;
  out.grad_r = Tensor(r.shape());
  for (std::size_t i = 0; i < r.size(); ++i) {
    out.grad_a += grad_out[i] * (r[i] + g[i]);
    out.grad_b += grad_out[i];
    out.grad_r[i] = a * grad_out[i];
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Global average pool [C x H x W] -> [C].

inline Tensor avg_pool_forward(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("avg_pool: expected [C x H x W], got " + shape_string(x.shape()));
  const std::size_t c_n = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor y({c_n});
  for (std::size_t c = 0; c < c_n; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += x[c * hw + p];
    y[c] = s / static_cast<double>(hw);
  }
  return y;
}

inline Tensor avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  if (input_shape.size() != 3 || grad_out.size() != input_shape[0]) {
    throw DimensionError("avg_pool_backward: grad_out " + shape_string(grad_out.shape()) +
                         " does not match input " + shape_string(input_shape));
  }
  const std::size_t hw = input_shape[1] * input_shape[2];
  Tensor g(input_shape);
  for (std::size_t c = 0; c < input_shape[0]; ++c) {
    const double v = grad_out[c] / static_cast<double>(hw);
    for (std::size_t p = 0; p < hw; ++p) g[c * hw + p] = v;
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Layout helpers between channel maps [C x H x W] and token rows [H*W x C].

inline Tensor chw_to_tokens(const Tensor& x) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor t({hw, c});
  kernel::transpose(x.data(), t.data(), c, hw);
  return t;
}

inline Tensor tokens_to_chw(const Tensor& t, std::size_t h, std::size_t w) {
  const std::size_t hw = t.dim(0), c = t.dim(1);
  if (hw != h * w) throw DimensionError("tokens_to_chw: token count does not match H x W");
  Tensor x({c, h, w});
  kernel::transpose(t.data(), x.data(), hw, c);
  return x;
}

// ---------------------------------------------------------------------------------------------
// downsample: 2x2 patch merge followed by a linear map, [C x H x W] -> [Cout x H/2 x W/2].
// Patch feature index: c * 4 + dy * 2 + dx; weights [4C x Cout], bias [Cout].

inline Tensor patch_merge(const Tensor& x) {
  const std::size_t c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor p({ho * wo, 4 * c_n});
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = p.data() + (oy * wo + ox) * 4 * c_n;
      for (std::size_t c = 0; c < c_n; ++c) {
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            row[c * 4 + dy * 2 + dx] = x.at(c, 2 * oy + dy, 2 * ox + dx);
          }
        }
      }
    }
  }
  return p;
}

inline Tensor downsample_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || x.dim(1) < 2 || x.dim(2) < 2 || x.dim(1) % 2 || x.dim(2) % 2) {
    throw DimensionError("downsample: expected [C x H x W] with even H, W >= 2, got " +
                         shape_string(x.shape()));
  }
  if (w.rank() != 2 || w.dim(0) != 4 * x.dim(0)) {
    throw DimensionError("downsample: weight " + shape_string(w.shape()) + " does not accept " +
                         std::to_string(x.dim(0)) + " channels");
  }
  const Tensor tokens = linear_forward(patch_merge(x), w, b);
  return tokens_to_chw(tokens, x.dim(1) / 2, x.dim(2) / 2);
}

inline Tensor downsample_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                                  Tensor* grad_w, Tensor* grad_b) {
  const std::size_t c_n = x.dim(0), ho = x.dim(1) / 2, wo = x.dim(2) / 2;
  if (grad_out.shape() != Shape{w.dim(1), ho, wo}) {
    throw DimensionError("downsample_backward: grad_out shape " + shape_string(grad_out.shape()));
  }
  const Tensor gp = linear_backward(patch_merge(x), w, chw_to_tokens(grad_out), grad_w, grad_b);
  Tensor grad_x(x.shape());
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const double* row = gp.data() + (oy * wo + ox) * 4 * c_n;
      for (std::size_t c = 0; c < c_n; ++c) {
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            grad_x.at(c, 2 * oy + dy, 2 * ox + dx) = row[c * 4 + dy * 2 + dx];
          }
        }
      }
    }
  }
  return grad_x;
}

}  // namespace dilhyfs::nn
