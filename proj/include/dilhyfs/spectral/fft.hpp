#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"

// 2-D discrete Fourier transforms.
//
// Convention: forward X[u,v] = sum_{y,x} x[y,x] exp(-2 pi i (u y / H + v x / W)), unnormalized;
// the inverse uses the + sign and carries the 1/(H W) factor.

namespace dilhyfs::spectral {

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

inline void require_pow2(std::size_t h, std::size_t w, const char* op) {
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ConfigError(std::string(op) + ": extents " + std::to_string(h) + "x" +
                      std::to_string(w) + " are not powers of two");
  }
}

/// cos and sin of 2 pi k / n for k < n / 2.
struct Twiddles {
  std::size_t n = 0;
  std::vector<double> cos;
  std::vector<double> sin;

  explicit Twiddles(std::size_t n_) : n(n_), cos(n_ / 2), sin(n_ / 2) {
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      cos[k] = std::cos(angle);
      sin[k] = std::sin(angle);
    }
  }
};

/// In-place iterative radix-2 transform over n = tw.n points spaced `stride` apart.
/// sign = -1 forward, +1 inverse (no scaling).
inline void fft1d(double* re, double* im, const Twiddles& tw, std::size_t stride, int sign) {
  const std::size_t n = tw.n;
  if (n <= 1) return;
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i * stride], re[j * stride]);
      std::swap(im[i * stride], im[j * stride]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len >> 1;
    const std::size_t step = n / len;
    for (std::size_t k = 0; k < half; ++k) {
      const double wr = tw.cos[k * step];
      const double wi = sign * tw.sin[k * step];
      for (std::size_t start = 0; start < n; start += len) {
        const std::size_t a = (start + k) * stride;
        const std::size_t b = (start + k + half) * stride;
        const double tr = re[b] * wr - im[b] * wi;
        const double ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

/// Transforms every H x W plane of a [..., H, W] complex array in place.
inline void fft2_planes(ComplexTensor& x, int sign) {
  const std::size_t rank = x.shape.size();
  const std::size_t h = x.shape[rank - 2];
  const std::size_t w = x.shape[rank - 1];
  const std::size_t planes = x.size() / (h * w);
  const Twiddles tw_rows(w);
  const Twiddles tw_cols(h);
  for (std::size_t p = 0; p < planes; ++p) {
    double* re = x.re.data() + p * h * w;
    double* im = x.im.data() + p * h * w;
    for (std::size_t r = 0; r < h; ++r) fft1d(re + r * w, im + r * w, tw_rows, 1, sign);
    for (std::size_t c = 0; c < w; ++c) fft1d(re + c, im + c, tw_cols, w, sign);
  }
}

inline void require_planar(const Shape& shape, const char* op) {
  if (shape.size() < 2) {
    throw DimensionError(std::string(op) + ": need at least 2 axes, got " + shape_string(shape));
  }
}

}  // namespace detail

/// Forward 2-D transform of every trailing H x W plane (H, W powers of two).
inline ComplexTensor fft2(const ComplexTensor& x) {
  detail::require_planar(x.shape, "fft2");
  detail::require_pow2(x.shape[x.shape.size() - 2], x.shape.back(), "fft2");
  ComplexTensor out = x;
  detail::fft2_planes(out, -1);
  return out;
}

inline ComplexTensor fft2(const Tensor& x) { return fft2(ComplexTensor::from_real(x)); }

/// Inverse of fft2, including the 1/(H W) normalization.
inline ComplexTensor ifft2(const ComplexTensor& x) {
  detail::require_planar(x.shape, "ifft2");
  const std::size_t h = x.shape[x.shape.size() - 2];
  const std::size_t w = x.shape.back();
  detail::require_pow2(h, w, "ifft2");
  ComplexTensor out = x;
  detail::fft2_planes(out, +1);
  const double scale = 1.0 / static_cast<double>(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.re[i] *= scale;
    out.im[i] *= scale;
  }
  return out;
}

/// Direct double-sum DFT of a single H x W plane; any extents >= 1.
inline ComplexTensor naive_dft2(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("naive_dft2: expected H x W, got " + shape_string(x.shape()));
  const std::size_t h = x.dim(0);
  const std::size_t w = x.dim(1);
  ComplexTensor out(x.shape());
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      double sr = 0.0;
      double si = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t c = 0; c < w; ++c) {
          // Reduce the phase index modulo the period before scaling to keep the angle small.
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>((u * y) % h) / static_cast<double>(h) +
                                static_cast<double>((v * c) % w) / static_cast<double>(w));
          sr += x.at(y, c) * std::cos(phase);
          si += x.at(y, c) * std::sin(phase);
        }
      }
      out.re[u * w + v] = sr;
      out.im[u * w + v] = si;
    }
  }
  return out;
}

}  // namespace dilhyfs::spectral
