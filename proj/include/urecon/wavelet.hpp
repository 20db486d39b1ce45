#pragma once

#include <cmath>
#include <cstddef>

#include "urecon/errors.hpp"
#include "urecon/mri.hpp"

// Orthonormal 2-D Haar transform with the usual in-place Mallat layout:
// after L levels the approximation band sits in the top-left
// (H/2^L) x (W/2^L) block, detail bands around it. Coefficient count is
// exactly H*W and the transform preserves the l2 norm.

namespace urecon {

struct WaveletCoeffs {
  std::size_t levels = 0;
  ComplexImage data;  // Mallat layout

  std::size_t approx_h() const { return data.height >> levels; }
  std::size_t approx_w() const { return data.width >> levels; }
};

namespace wavelet_detail {

constexpr double kInvSqrt2 = 0.70710678118654752440;

inline void haar_rows(double* p, std::size_t n_rows, std::size_t n_cols,
                      std::size_t stride, bool inverse) {
  std::vector<double> tmp(n_cols);
  for (std::size_t y = 0; y < n_rows; ++y) {
    double* row = p + y * stride;
    const std::size_t half = n_cols / 2;
    if (!inverse) {
      for (std::size_t i = 0; i < half; ++i) {
        tmp[i] = (row[2 * i] + row[2 * i + 1]) * kInvSqrt2;
        tmp[half + i] = (row[2 * i] - row[2 * i + 1]) * kInvSqrt2;
      }
    } else {
      for (std::size_t i = 0; i < half; ++i) {
        tmp[2 * i] = (row[i] + row[half + i]) * kInvSqrt2;
        tmp[2 * i + 1] = (row[i] - row[half + i]) * kInvSqrt2;
      }
    }
    for (std::size_t i = 0; i < n_cols; ++i) row[i] = tmp[i];
  }
}

inline void haar_cols(double* p, std::size_t n_rows, std::size_t n_cols,
                      std::size_t stride, bool inverse) {
  std::vector<double> tmp(n_rows);
  for (std::size_t x = 0; x < n_cols; ++x) {
    double* col = p + x;
    const std::size_t half = n_rows / 2;
    if (!inverse) {
      for (std::size_t i = 0; i < half; ++i) {
        tmp[i] = (col[2 * i * stride] + col[(2 * i + 1) * stride]) * kInvSqrt2;
        tmp[half + i] =
            (col[2 * i * stride] - col[(2 * i + 1) * stride]) * kInvSqrt2;
      }
    } else {
      for (std::size_t i = 0; i < half; ++i) {
        tmp[2 * i] = (col[i * stride] + col[(half + i) * stride]) * kInvSqrt2;
        tmp[2 * i + 1] =
            (col[i * stride] - col[(half + i) * stride]) * kInvSqrt2;
      }
    }
    for (std::size_t i = 0; i < n_rows; ++i) col[i * stride] = tmp[i];
  }
}

}  // namespace wavelet_detail

inline WaveletCoeffs haar_dwt2(const ComplexImage& x, std::size_t levels) {
  if (levels < 1) throw ContractError("haar_dwt2 needs at least one level");
  const std::size_t div = std::size_t{1} << levels;
  if (x.height % div || x.width % div)
    throw ContractError("image dims must be divisible by 2^levels");
  WaveletCoeffs c;
  c.levels = levels;
  c.data = x;
  for (int plane = 0; plane < 2; ++plane) {
    double* p = plane ? c.data.im() : c.data.re();
    std::size_t h = x.height, w = x.width;
    for (std::size_t l = 0; l < levels; ++l) {
      wavelet_detail::haar_rows(p, h, w, x.width, false);
      wavelet_detail::haar_cols(p, h, w, x.width, false);
      h /= 2;
      w /= 2;
    }
  }
  return c;
}

inline ComplexImage haar_idwt2(const WaveletCoeffs& c) {
  ComplexImage out = c.data;
  for (int plane = 0; plane < 2; ++plane) {
    double* p = plane ? out.im() : out.re();
    for (std::size_t l = c.levels; l >= 1; --l) {
      const std::size_t h = out.height >> (l - 1);
      const std::size_t w = out.width >> (l - 1);
      wavelet_detail::haar_cols(p, h, w, out.width, true);
      wavelet_detail::haar_rows(p, h, w, out.width, true);
    }
  }
  return out;
}

// Complex soft-thresholding of the detail bands; the approximation band is
// left untouched so the DC level is never shrunk.
inline WaveletCoeffs soft_threshold(const WaveletCoeffs& c, double lambda) {
  if (lambda < 0.0) throw ContractError("threshold must be >= 0");
  WaveletCoeffs out = c;
  if (lambda == 0.0) return out;
  const std::size_t ah = c.approx_h(), aw = c.approx_w();
  double* re = out.data.re();
  double* im = out.data.im();
  for (std::size_t y = 0; y < out.data.height; ++y)
    for (std::size_t x = 0; x < out.data.width; ++x) {
      if (y < ah && x < aw) continue;
      const std::size_t i = y * out.data.width + x;
      const double mag = std::hypot(re[i], im[i]);
      if (mag <= lambda) {
        re[i] = 0.0;
        im[i] = 0.0;
      } else {
        const double shrink = (mag - lambda) / mag;
        re[i] *= shrink;
        im[i] *= shrink;
      }
    }
  return out;
}

inline double l1_norm_details(const WaveletCoeffs& c) {
  const std::size_t ah = c.approx_h(), aw = c.approx_w();
  const double* re = c.data.re();
  const double* im = c.data.im();
  double acc = 0.0;
  for (std::size_t y = 0; y < c.data.height; ++y)
    for (std::size_t x = 0; x < c.data.width; ++x) {
      if (y < ah && x < aw) continue;
      const std::size_t i = y * c.data.width + x;
      acc += std::hypot(re[i], im[i]);
    }
  return acc;
}

}  // namespace urecon
