#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/spectral/fft.hpp"

namespace dilhyfs::spectral {

/// Learnable frequency-domain filter stored as a half spectrum [C x H x (W/2 + 1)].
///
/// The full H x W spectrum is always the Hermitian expansion of the stored half, so filtering
/// a real input gives a real output. Columns 0 and W/2 are their own mirror images; there the
/// effective coefficient is the Hermitian part 0.5 * (K[u] + conj(K[-u])).
struct GlobalFilter {
  ComplexTensor k;
  std::size_t height = 0;
  std::size_t width = 0;

  GlobalFilter() = default;
  GlobalFilter(std::size_t channels, std::size_t h, std::size_t w)
      : k({channels, h, w / 2 + 1}), height(h), width(w) {
    if (!is_power_of_two(h) || !is_power_of_two(w)) {
      throw ConfigError("global filter: extents " + std::to_string(h) + "x" + std::to_string(w) +
                        " are not powers of two");
    }
  }

  std::size_t channels() const { return k.shape[0]; }
  std::size_t half_width() const { return width / 2 + 1; }

  static GlobalFilter constant(std::size_t channels, std::size_t h, std::size_t w, double re,
                               double im = 0.0) {
    GlobalFilter f(channels, h, w);
    std::fill(f.k.re.begin(), f.k.re.end(), re);
    std::fill(f.k.im.begin(), f.k.im.end(), im);
    return f;
  }

  static GlobalFilter random(std::size_t channels, std::size_t h, std::size_t w, Rng& rng,
                             double stddev) {
    GlobalFilter f(channels, h, w);
    for (std::size_t i = 0; i < f.k.size(); ++i) {
      f.k.re[i] = stddev * rng.normal();
      f.k.im[i] = stddev * rng.normal();
    }
    return f;
  }
};

namespace detail {

inline bool self_conjugate_column(std::size_t v, std::size_t w) { return v == 0 || 2 * v == w; }

inline void require_filter_shape(const Shape& x, const GlobalFilter& f, const char* op) {
  if (x.size() != 3 || x[0] != f.channels() || x[1] != f.height || x[2] != f.width) {
    throw DimensionError(std::string(op) + ": input " + shape_string(x) + " does not match filter [" +
                         std::to_string(f.channels()) + "x" + std::to_string(f.height) + "x" +
                         std::to_string(f.width) + "]");
  }
}

}  // namespace detail

/// Full-spectrum [C x H x W] Hermitian expansion of the stored half spectrum.
inline ComplexTensor expand_hermitian(const GlobalFilter& f) {
  const std::size_t c_n = f.channels(), h = f.height, w = f.width, hw = f.half_width();
  ComplexTensor full({c_n, h, w});
  for (std::size_t c = 0; c < c_n; ++c) {
    const std::size_t kbase = c * h * hw;
    const std::size_t fbase = c * h * w;
    for (std::size_t u = 0; u < h; ++u) {
      const std::size_t mu = (h - u) % h;
      for (std::size_t v = 0; v < hw; ++v) {
        const double pr = f.k.re[kbase + u * hw + v];
        const double pi = f.k.im[kbase + u * hw + v];
        if (detail::self_conjugate_column(v, w)) {
          const double qr = f.k.re[kbase + mu * hw + v];
          const double qi = f.k.im[kbase + mu * hw + v];
          full.re[fbase + u * w + v] = 0.5 * (pr + qr);
          full.im[fbase + u * w + v] = 0.5 * (pi - qi);
        } else {
          full.re[fbase + u * w + v] = pr;
          full.im[fbase + u * w + v] = pi;
          full.re[fbase + mu * w + (w - v)] = pr;
          full.im[fbase + mu * w + (w - v)] = -pi;
        }
      }
    }
  }
  return full;
}

/// Complex result of F^-1[K . F[x]] before the real part is taken (spectrum of x supplied).
inline ComplexTensor filter_spectrum(const ComplexTensor& x_spectrum, const ComplexTensor& full) {
  ComplexTensor prod(x_spectrum.shape);
  for (std::size_t i = 0; i < prod.size(); ++i) {
    prod.re[i] = full.re[i] * x_spectrum.re[i] - full.im[i] * x_spectrum.im[i];
    prod.im[i] = full.re[i] * x_spectrum.im[i] + full.im[i] * x_spectrum.re[i];
  }
  return ifft2(prod);
}

/// Largest |imaginary part| left after filtering x; zero up to rounding for any stored filter.
inline double imaginary_residue(const Tensor& x, const GlobalFilter& f) {
  detail::require_filter_shape(x.shape(), f, "imaginary_residue");
  const ComplexTensor y = filter_spectrum(fft2(x), expand_hermitian(f));
  return max_abs(y.im);
}

/// Per-channel F^-1[K . F[x]] for real x of shape [C x H x W]; returns the real part.
inline Tensor apply_global_filter(const Tensor& x, const GlobalFilter& f) {
  detail::require_filter_shape(x.shape(), f, "apply_global_filter");
  const ComplexTensor y = filter_spectrum(fft2(x), expand_hermitian(f));
#ifndef NDEBUG
  if (max_abs(y.im) > 1e-10 * std::max(1.0, max_abs(y.re))) {
    throw NumericError("apply_global_filter: imaginary residue above 1e-10");
  }
#endif
  return y.real();
}

struct GlobalFilterGrads {
  Tensor grad_x;
  ComplexTensor grad_k;  // re: d/dRe(K), im: d/dIm(K), in half-spectrum layout
};

/// Exact gradients of sum(grad_out * apply_global_filter(x, f)).
///
/// x_spectrum may be passed to reuse the forward transform of x.
inline GlobalFilterGrads global_filter_backward(const Tensor& x, const GlobalFilter& f,
                                                const Tensor& grad_out,
                                                const ComplexTensor* x_spectrum = nullptr,
                                                bool want_grad_k = true) {
  detail::require_filter_shape(x.shape(), f, "global_filter_backward");
  detail::require_filter_shape(grad_out.shape(), f, "global_filter_backward");
  const std::size_t c_n = f.channels(), h = f.height, w = f.width, hw = f.half_width();
  const ComplexTensor full = expand_hermitian(f);
  const ComplexTensor g = fft2(grad_out);

  GlobalFilterGrads out;
  ComplexTensor prod(g.shape);
  for (std::size_t i = 0; i < prod.size(); ++i) {
    // conj(K) * G
    prod.re[i] = full.re[i] * g.re[i] + full.im[i] * g.im[i];
    prod.im[i] = full.re[i] * g.im[i] - full.im[i] * g.re[i];
  }
  out.grad_x = ifft2(prod).real();

  out.grad_k = ComplexTensor({c_n, h, hw});
  if (!want_grad_k) return out;

  ComplexTensor local;
  if (x_spectrum == nullptr) {
    local = fft2(x);
    x_spectrum = &local;
  }
  const ComplexTensor& xs = *x_spectrum;
  const double inv_n = 1.0 / static_cast<double>(h * w);
  // Q = X conj(G) / N; dL/dRe(Kfull) = Re Q, dL/dIm(Kfull) = -Im Q.
  std::vector<double> qr(xs.size()), qi(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    qr[i] = (xs.re[i] * g.re[i] + xs.im[i] * g.im[i]) * inv_n;
    qi[i] = (xs.im[i] * g.re[i] - xs.re[i] * g.im[i]) * inv_n;
  }
  for (std::size_t c = 0; c < c_n; ++c) {
    const std::size_t fbase = c * h * w;
    const std::size_t kbase = c * h * hw;
    for (std::size_t u = 0; u < h; ++u) {
      const std::size_t mu = (h - u) % h;
      for (std::size_t v = 0; v < hw; ++v) {
        const std::size_t a = fbase + u * w + v;
        double dr = 0.0;
        double di = 0.0;
        if (detail::self_conjugate_column(v, w)) {
          const std::size_t b = fbase + mu * w + v;
          dr = 0.5 * (qr[a] + qr[b]);
          di = 0.5 * (-qi[a] + qi[b]);
        } else {
          const std::size_t b = fbase + mu * w + (w - v);
          dr = qr[a] + qr[b];
          di = -qi[a] + qi[b];
        }
        out.grad_k.re[kbase + u * hw + v] = dr;
        out.grad_k.im[kbase + u * hw + v] = di;
      }
    }
  }
  return out;
}

}  // namespace dilhyfs::spectral
