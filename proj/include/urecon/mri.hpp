#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "urecon/errors.hpp"
#include "urecon/fft.hpp"
#include "urecon/tensor.hpp"

// Multi-coil Cartesian MRI forward model: y_c = M F (S_c x) with an
// orthonormal 2-D Fourier transform, SENSE-normalized coil maps and
// column-wise (phase-encode) undersampling.

namespace urecon {

// H x W complex image stored as two planes: all real values, then all
// imaginary values. The planar layout is shared with [2,H,W] graph tensors.
struct ComplexImage {
  std::size_t height = 0, width = 0;
  std::vector<double> data;

  ComplexImage() = default;
  ComplexImage(std::size_t h, std::size_t w)
      : height(h), width(w), data(2 * h * w, 0.0) {}

  std::size_t pixels() const { return height * width; }
  double* re() { return data.data(); }
  double* im() { return data.data() + pixels(); }
  const double* re() const { return data.data(); }
  const double* im() const { return data.data() + pixels(); }

  std::complex<double> at(std::size_t y, std::size_t x) const {
    const std::size_t i = y * width + x;
    return {data[i], data[pixels() + i]};
  }
  void set(std::size_t y, std::size_t x, std::complex<double> v) {
    const std::size_t i = y * width + x;
    data[i] = v.real();
    data[pixels() + i] = v.imag();
  }

  Tensor to_tensor(bool requires_grad = false) const {
    Tensor t({2, height, width}, data);
    t.requires_grad = requires_grad;
    return t;
  }
  static ComplexImage from_tensor(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 2)
      throw ShapeError("expected a [2,H,W] tensor");
    ComplexImage img(t.shape[1], t.shape[2]);
    img.data = t.data;
    return img;
  }
};

inline double norm2(const ComplexImage& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  return std::sqrt(acc);
}

// <a, b> = sum conj(a_i) b_i
inline std::complex<double> cdot(const ComplexImage& a, const ComplexImage& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("cdot shape mismatch");
  const std::size_t n = a.pixels();
  double re = 0.0, im = 0.0;
  const double *ar = a.re(), *ai = a.im(), *br = b.re(), *bi = b.im();
  for (std::size_t i = 0; i < n; ++i) {
    re += ar[i] * br[i] + ai[i] * bi[i];
    im += ar[i] * bi[i] - ai[i] * br[i];
  }
  return {re, im};
}

inline void cmul_into(const ComplexImage& a, const ComplexImage& b,
                      ComplexImage& out) {
  const std::size_t n = a.pixels();
  const double *ar = a.re(), *ai = a.im(), *br = b.re(), *bi = b.im();
  double *or_ = out.re(), *oi = out.im();
  for (std::size_t i = 0; i < n; ++i) {
    or_[i] = ar[i] * br[i] - ai[i] * bi[i];
    oi[i] = ar[i] * bi[i] + ai[i] * br[i];
  }
}

inline void axpy(double a, const ComplexImage& x, ComplexImage& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] += a * x.data[i];
}

// Readout direction fully sampled; undersampling picks phase-encode columns.
struct SamplingMask {
  std::size_t width = 0;
  std::vector<std::uint8_t> sampled;  // one flag per column

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : sampled) n += v;
    return n;
  }
};

struct CoilMaps {
  std::size_t n_coils = 0, height = 0, width = 0;
  std::vector<ComplexImage> maps;
};

struct KspaceData {
  std::size_t n_coils = 0, height = 0, width = 0;
  std::vector<ComplexImage> coils;

  KspaceData() = default;
  KspaceData(std::size_t nc, std::size_t h, std::size_t w)
      : n_coils(nc), height(h), width(w), coils(nc, ComplexImage(h, w)) {}
};

struct Encoder {
  CoilMaps coils;
  SamplingMask mask;

  std::size_t height() const { return coils.height; }
  std::size_t width() const { return coils.width; }
  std::size_t n_coils() const { return coils.n_coils; }
};

inline ComplexImage fft2_ortho(const ComplexImage& x, int sign = -1) {
  ComplexImage out = x;
  fft::fft2_inplace(out.re(), out.im(), out.height, out.width, sign);
  return out;
}

inline ComplexImage ifft2_ortho(const ComplexImage& x) {
  return fft2_ortho(x, +1);
}

inline void apply_mask(const SamplingMask& m, ComplexImage& k) {
  if (m.width != k.width) throw ShapeError("mask width mismatch");
  double *re = k.re(), *im = k.im();
  for (std::size_t y = 0; y < k.height; ++y)
    for (std::size_t x = 0; x < k.width; ++x)
      if (!m.sampled[x]) {
        re[y * k.width + x] = 0.0;
        im[y * k.width + x] = 0.0;
      }
}

inline KspaceData apply_forward(const Encoder& e, const ComplexImage& x) {
  if (x.height != e.height() || x.width != e.width())
    throw ShapeError("apply_forward image/encoder shape mismatch");
  KspaceData y(e.n_coils(), x.height, x.width);
  for (std::size_t c = 0; c < e.n_coils(); ++c) {
    cmul_into(e.coils.maps[c], x, y.coils[c]);
    fft::fft2_inplace(y.coils[c].re(), y.coils[c].im(), x.height, x.width, -1);
    apply_mask(e.mask, y.coils[c]);
  }
  return y;
}

inline ComplexImage apply_adjoint(const Encoder& e, const KspaceData& y) {
  if (y.height != e.height() || y.width != e.width() ||
      y.n_coils != e.n_coils())
    throw ShapeError("apply_adjoint kspace/encoder shape mismatch");
  ComplexImage out(y.height, y.width);
  ComplexImage tmp(y.height, y.width);
  const std::size_t n = out.pixels();
  for (std::size_t c = 0; c < y.n_coils; ++c) {
    tmp = y.coils[c];
    apply_mask(e.mask, tmp);
    fft::fft2_inplace(tmp.re(), tmp.im(), tmp.height, tmp.width, +1);
    const ComplexImage& s = e.coils.maps[c];
    const double *sr = s.re(), *si = s.im(), *tr = tmp.re(), *ti = tmp.im();
    double *or_ = out.re(), *oi = out.im();
    // conj(S_c) * tmp, accumulated
    for (std::size_t i = 0; i < n; ++i) {
      or_[i] += sr[i] * tr[i] + si[i] * ti[i];
      oi[i] += sr[i] * ti[i] - si[i] * tr[i];
    }
  }
  return out;
}

// A^H A x + beta x, the normal operator of the regularized DC subproblem.
inline ComplexImage normal_op(const Encoder& e, const ComplexImage& x,
                              double beta) {
  ComplexImage out = apply_adjoint(e, apply_forward(e, x));
  if (beta != 0.0) axpy(beta, x, out);
  return out;
}

inline SamplingMask make_uniform_mask(std::size_t width, std::size_t r,
                                      std::size_t c) {
  if (r < 1) throw ContractError("acceleration must be >= 1");
  if (c > width)
    throw ContractError("center lines (" + std::to_string(c) +
                        ") exceed mask width (" + std::to_string(width) + ")");
  SamplingMask m;
  m.width = width;
  m.sampled.assign(width, 0);
  for (std::size_t x = 0; x < width; x += r) m.sampled[x] = 1;
  const std::size_t start = (width - c) / 2;
  for (std::size_t x = start; x < start + c; ++x) m.sampled[x] = 1;
  return m;
}

inline SamplingMask make_random_mask(std::size_t width, std::size_t r,
                                     std::size_t c, std::uint64_t seed) {
  if (r < 1) throw ContractError("acceleration must be >= 1");
  if (c > width) throw ContractError("center lines exceed mask width");
  const std::size_t total = static_cast<std::size_t>(
      std::llround(static_cast<double>(width) / static_cast<double>(r)));
  if (total < c)
    throw ContractError("width/R smaller than requested center lines");
  SamplingMask m;
  m.width = width;
  m.sampled.assign(width, 0);
  const std::size_t start = (width - c) / 2;
  for (std::size_t x = start; x < start + c; ++x) m.sampled[x] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t x = 0; x < width; ++x)
    if (!m.sampled[x]) rest.push_back(x);
  Rng rng(seed);
  std::size_t need = total - c;
  // partial Fisher-Yates: the first `need` entries are a uniform draw
  for (std::size_t i = 0; i < need && i < rest.size(); ++i) {
    const std::size_t j = i + rng.below(rest.size() - i);
    std::swap(rest[i], rest[j]);
    m.sampled[rest[i]] = 1;
  }
  return m;
}

// Smooth Gaussian-profile sensitivities centered on points evenly spaced
// around the image border, each with a gentle linear phase, pixelwise
// normalized to sum_c |S_c|^2 = 1.
inline CoilMaps make_coil_maps(std::size_t n_coils, std::size_t h,
                               std::size_t w) {
  if (n_coils < 1) throw ContractError("need at least one coil");
  CoilMaps cm;
  cm.n_coils = n_coils;
  cm.height = h;
  cm.width = w;
  cm.maps.assign(n_coils, ComplexImage(h, w));
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  const double sigma = 0.6 * static_cast<double>(std::min(h, w));
  const double tau = 6.28318530717958647692;
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double ang = tau * static_cast<double>(c) /
                       static_cast<double>(n_coils);
    const double py = cy + 0.5 * static_cast<double>(h - 1) * std::sin(ang);
    const double px = cx + 0.5 * static_cast<double>(w - 1) * std::cos(ang);
    // per-coil phase ramp, fixed by coil index
    const double ry = 0.2 * std::sin(ang + 0.7);
    const double rx = 0.2 * std::cos(ang + 0.3);
    ComplexImage& s = cm.maps[c];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (static_cast<double>(y) - py) / sigma;
        const double dx = (static_cast<double>(x) - px) / sigma;
        const double g = std::exp(-0.5 * (dy * dy + dx * dx));
        const double ph =
            tau * (ry * static_cast<double>(y) / static_cast<double>(h) +
                   rx * static_cast<double>(x) / static_cast<double>(w));
        s.set(y, x, std::polar(g, ph));
      }
  }
  // SENSE-1 normalization
  for (std::size_t i = 0; i < h * w; ++i) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n_coils; ++c) {
      const double re = cm.maps[c].data[i];
      const double im = cm.maps[c].data[h * w + i];
      ss += re * re + im * im;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < n_coils; ++c) {
      cm.maps[c].data[i] *= inv;
      cm.maps[c].data[h * w + i] *= inv;
    }
  }
  return cm;
}

// Randomized piecewise-smooth ellipse phantom with a low-order polynomial
// phase. Magnitude clipped to [0, 1].
inline ComplexImage make_phantom(std::size_t h, std::size_t w,
                                 std::uint64_t seed) {
  if (h < 16 || w < 16) throw ContractError("phantom needs H, W >= 16");
  Rng rng(seed);
  const std::size_t n_ell = 8 + rng.below(8);  // 8..15
  struct Ell {
    double cy, cx, a, b, cosr, sinr, val;
  };
  std::vector<Ell> ells(n_ell);
  const double mind = static_cast<double>(std::min(h, w));
  for (auto& e : ells) {
    e.cy = rng.uniform(0.2, 0.8) * static_cast<double>(h);
    e.cx = rng.uniform(0.2, 0.8) * static_cast<double>(w);
    e.a = rng.uniform(0.08, 0.35) * mind;
    e.b = rng.uniform(0.08, 0.35) * mind;
    const double rot = rng.uniform(0.0, 3.14159265358979323846);
    e.cosr = std::cos(rot);
    e.sinr = std::sin(rot);
    e.val = rng.uniform(0.1, 1.0);
  }
  double pc[6];
  for (double& v : pc) v = rng.uniform(-0.5, 0.5);
  ComplexImage img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double mag = 0.0;
      for (const auto& e : ells) {
        const double dy = static_cast<double>(y) - e.cy;
        const double dx = static_cast<double>(x) - e.cx;
        const double u = (dx * e.cosr + dy * e.sinr) / e.a;
        const double v = (-dx * e.sinr + dy * e.cosr) / e.b;
        if (u * u + v * v <= 1.0) mag += e.val;
      }
      mag = std::clamp(mag, 0.0, 1.0);
      const double u = 2.0 * static_cast<double>(x) / static_cast<double>(w) -
                       1.0;
      const double v = 2.0 * static_cast<double>(y) / static_cast<double>(h) -
                       1.0;
      const double ph = 3.14159265358979323846 *
                        (pc[0] + pc[1] * u + pc[2] * v + pc[3] * u * u +
                         pc[4] * u * v + pc[5] * v * v);
      img.set(y, x, std::polar(mag, ph));
    }
  return img;
}

// y = A x + n with iid complex Gaussian noise of std `sigma` per sampled
// entry (components sigma/sqrt(2) each); unsampled entries stay exactly zero.
inline KspaceData simulate_acquisition(const ComplexImage& x, const Encoder& e,
                                       double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ContractError("noise sigma must be >= 0");
  KspaceData y = apply_forward(e, x);
  if (sigma == 0.0) return y;
  Rng rng(seed);
  const double comp = sigma / std::sqrt(2.0);
  for (std::size_t c = 0; c < y.n_coils; ++c) {
    ComplexImage& k = y.coils[c];
    for (std::size_t yy = 0; yy < k.height; ++yy)
      for (std::size_t xx = 0; xx < k.width; ++xx)
        if (e.mask.sampled[xx]) {
          const std::size_t i = yy * k.width + xx;
          k.data[i] += comp * rng.normal();
          k.data[k.pixels() + i] += comp * rng.normal();
        }
  }
  return y;
}

inline ComplexImage zero_filled(const Encoder& e, const KspaceData& y) {
  return apply_adjoint(e, y);
}

}  // namespace urecon
