#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "urecon/errors.hpp"

// Radix-2 decimation-in-time FFT over planar complex storage (separate
// real/imaginary planes). The per-stage kernels are exposed so callers can
// record each stage individually; the adjoint of every stage is exact.

namespace urecon::fft {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline int log2_of(std::size_t n) {
  int l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

inline std::vector<std::size_t> bitrev_indices(std::size_t n) {
  const int bits = log2_of(n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0, v = i;
    for (int b = 0; b < bits; ++b) {
      r = (r << 1) | (v & 1);
      v >>= 1;
    }
    idx[i] = r;
  }
  return idx;
}

// Twiddles for the stage with half-block size m: w_j = exp(sign*i*pi*j/m).
// sign = -1 is the forward transform.
inline void stage_twiddles(std::size_t m, int sign, std::vector<double>& wre,
                           std::vector<double>& wim) {
  wre.resize(m);
  wim.resize(m);
  const double base = sign * 3.14159265358979323846 / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    wre[j] = std::cos(base * static_cast<double>(j));
    wim[j] = std::sin(base * static_cast<double>(j));
  }
}

// One butterfly stage along a contiguous line of length n (stride `stride`
// between elements). Blocks of size 2m, twiddle applied to the bottom half.
inline void stage_line(double* re, double* im, std::size_t n,
                       std::size_t stride, std::size_t m, const double* wre,
                       const double* wim) {
  for (std::size_t k = 0; k < n; k += 2 * m) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t top = (k + j) * stride;
      const std::size_t bot = (k + j + m) * stride;
      const double tr = re[top], ti = im[top];
      const double br = re[bot], bi = im[bot];
      const double xr = wre[j] * br - wim[j] * bi;
      const double xi = wre[j] * bi + wim[j] * br;
      re[top] = tr + xr;
      im[top] = ti + xi;
      re[bot] = tr - xr;
      im[bot] = ti - xi;
    }
  }
}

// Adjoint of stage_line: top' = t + b, bot' = conj(w)*(t - b).
inline void stage_line_adjoint(double* re, double* im, std::size_t n,
                               std::size_t stride, std::size_t m,
                               const double* wre, const double* wim) {
  for (std::size_t k = 0; k < n; k += 2 * m) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t top = (k + j) * stride;
      const std::size_t bot = (k + j + m) * stride;
      const double tr = re[top], ti = im[top];
      const double br = re[bot], bi = im[bot];
      const double dr = tr - br, di = ti - bi;
      re[top] = tr + br;
      im[top] = ti + bi;
      re[bot] = wre[j] * dr + wim[j] * di;
      im[bot] = wre[j] * di - wim[j] * dr;
    }
  }
}

// Stage applied along every row (transform direction = width).
inline void stage_rows(double* re, double* im, std::size_t h, std::size_t w,
                       std::size_t m, int sign, bool adjoint = false) {
  std::vector<double> wre, wim;
  stage_twiddles(m, sign, wre, wim);
  for (std::size_t y = 0; y < h; ++y) {
    double* r = re + y * w;
    double* i = im + y * w;
    if (adjoint)
      stage_line_adjoint(r, i, w, 1, m, wre.data(), wim.data());
    else
      stage_line(r, i, w, 1, m, wre.data(), wim.data());
  }
}

// Stage applied along every column (transform direction = height).
inline void stage_cols(double* re, double* im, std::size_t h, std::size_t w,
                       std::size_t m, int sign, bool adjoint = false) {
  std::vector<double> wre, wim;
  stage_twiddles(m, sign, wre, wim);
  for (std::size_t x = 0; x < w; ++x) {
    double* r = re + x;
    double* i = im + x;
    if (adjoint)
      stage_line_adjoint(r, i, h, w, m, wre.data(), wim.data());
    else
      stage_line(r, i, h, w, m, wre.data(), wim.data());
  }
}

// Bit-reversal reorder of rows within each column / columns within each row.
// The permutation is an involution, so it is its own inverse and adjoint.
inline void bitrev_rows(double* re, double* im, std::size_t h, std::size_t w) {
  const auto idx = bitrev_indices(w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (idx[x] > x) {
        std::swap(re[y * w + x], re[y * w + idx[x]]);
        std::swap(im[y * w + x], im[y * w + idx[x]]);
      }
}

inline void bitrev_cols(double* re, double* im, std::size_t h, std::size_t w) {
  const auto idx = bitrev_indices(h);
  for (std::size_t y = 0; y < h; ++y)
    if (idx[y] > y)
      for (std::size_t x = 0; x < w; ++x) {
        std::swap(re[y * w + x], re[idx[y] * w + x]);
        std::swap(im[y * w + x], im[idx[y] * w + x]);
      }
}

// Orthonormal 2-D transform, in place. sign = -1 forward, +1 inverse; both
// directions scale by 1/sqrt(h*w) so the map is unitary.
inline void fft2_inplace(double* re, double* im, std::size_t h, std::size_t w,
                         int sign) {
  if (!is_pow2(h) || !is_pow2(w))
    throw ContractError("fft2 requires power-of-two dimensions, got " +
                        std::to_string(h) + "x" + std::to_string(w));
  bitrev_rows(re, im, h, w);
  for (std::size_t m = 1; m < w; m *= 2) stage_rows(re, im, h, w, m, sign);
  bitrev_cols(re, im, h, w);
  for (std::size_t m = 1; m < h; m *= 2) stage_cols(re, im, h, w, m, sign);
  const double s = 1.0 / std::sqrt(static_cast<double>(h * w));
  const std::size_t n = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    re[i] *= s;
    im[i] *= s;
  }
}

}  // namespace urecon::fft
