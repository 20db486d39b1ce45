#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include "urecon/mri.hpp"
#include "urecon/threading.hpp"

// PSNR / SSIM on magnitude images, the Wilcoxon signed-rank test and the
// batch evaluation harness.

namespace urecon {

inline std::vector<double> magnitude(const ComplexImage& x) {
  std::vector<double> m(x.pixels());
  const double *re = x.re(), *im = x.im();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::hypot(re[i], im[i]);
  return m;
}

// 20 log10(max|ref| / RMSE of magnitudes); identical inputs give +inf,
// rendered as "perfect" in tables and excluded from aggregates.
inline double psnr(const ComplexImage& ref, const ComplexImage& rec) {
  if (ref.height != rec.height || ref.width != rec.width)
    throw ShapeError("psnr shape mismatch");
  const auto mr = magnitude(ref);
  const auto mc = magnitude(rec);
  double peak = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < mr.size(); ++i) {
    peak = std::max(peak, mr[i]);
    const double d = mr[i] - mc[i];
    mse += d * d;
  }
  if (peak == 0.0) throw ContractError("psnr reference is identically zero");
  mse /= static_cast<double>(mr.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / std::sqrt(mse));
}

// Mean local SSIM over magnitude images: 7x7 uniform window, K1 = 0.01,
// K2 = 0.03, dynamic range L = max|ref| unless overridden.
inline double ssim(const ComplexImage& ref, const ComplexImage& rec,
                   double dynamic_range = 0.0) {
  constexpr std::size_t kWin = 7;
  constexpr double kK1 = 0.01, kK2 = 0.03;
  if (ref.height != rec.height || ref.width != rec.width)
    throw ShapeError("ssim shape mismatch");
  if (ref.height < kWin || ref.width < kWin)
    throw ContractError("image smaller than the SSIM window");
  const auto a = magnitude(ref);
  const auto b = magnitude(rec);
  double level = dynamic_range;
  if (level <= 0.0) {
    for (double v : a) level = std::max(level, v);
    if (level == 0.0) throw ContractError("ssim reference is identically zero");
  }
  const double c1 = (kK1 * level) * (kK1 * level);
  const double c2 = (kK2 * level) * (kK2 * level);
  const std::size_t h = ref.height, w = ref.width;
  const double inv_n = 1.0 / static_cast<double>(kWin * kWin);
  double acc = 0.0;
  std::size_t windows = 0;
  for (std::size_t y = 0; y + kWin <= h; ++y)
    for (std::size_t x = 0; x + kWin <= w; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t dy = 0; dy < kWin; ++dy)
        for (std::size_t dx = 0; dx < kWin; ++dx) {
          const double va = a[(y + dy) * w + (x + dx)];
          const double vb = b[(y + dy) * w + (x + dx)];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double mu_a = sa * inv_n, mu_b = sb * inv_n;
      const double var_a = saa * inv_n - mu_a * mu_a;
      const double var_b = sbb * inv_n - mu_b * mu_b;
      const double cov = sab * inv_n - mu_a * mu_b;
      acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++windows;
    }
  return acc / static_cast<double>(windows);
}

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p_value = 1.0;
};

// Two-sided Wilcoxon signed-rank test: zero differences discarded, ties get
// mid-ranks; exact sign enumeration below n = 10, normal approximation with
// continuity correction (and tie correction) from n = 10 up.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ContractError("wilcoxon needs paired samples of equal length");
  if (a.size() < 6) throw ContractError("wilcoxon needs at least 6 pairs");
  std::vector<double> mags;
  std::vector<int> signs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;
    mags.push_back(std::fabs(d));
    signs.push_back(d > 0.0 ? 1 : -1);
  }
  const std::size_t n = mags.size();
  if (n == 0) return {0.0, 1.0};  // all differences zero

  // mid-ranks of |d|
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t x, std::size_t y) { return mags[x] < mags[y]; });
  std::vector<double> ranks(n);
  double tie_correction = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && mags[idx[j]] == mags[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = mid;
    const double t = static_cast<double>(j - i);
    tie_correction += t * t * t - t;
    i = j;
  }
  double w_plus = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += ranks[i];
    if (signs[i] > 0) w_plus += ranks[i];
  }
  const double w_minus = total - w_plus;
  const double w = std::min(w_plus, w_minus);

  double p;
  if (n < 10) {
    // enumerate all sign assignments of the observed ranks
    const std::size_t combos = std::size_t{1} << n;
    std::size_t le = 0, ge = 0;
    for (std::size_t mask = 0; mask < combos; ++mask) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (std::size_t{1} << i)) s += ranks[i];
      if (s <= w_plus) ++le;
      if (s >= w_plus) ++ge;
    }
    const double tail =
        static_cast<double>(std::min(le, ge)) / static_cast<double>(combos);
    p = std::min(1.0, 2.0 * tail);
  } else {
    const double dn = static_cast<double>(n);
    const double mean = dn * (dn + 1.0) / 4.0;
    const double var =
        dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_correction / 48.0;
    if (var <= 0.0) return {w, 1.0};
    const double z = (w - mean + 0.5) / std::sqrt(var);
    p = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  }
  return {w, p};
}

struct MetricsRow {
  std::size_t item = 0;
  std::string method;
  double psnr_db = 0.0;  // +inf encodes a perfect reconstruction
  double ssim_value = 0.0;
};

struct MetricsSummary {
  std::string method;
  double mean_psnr = 0.0;
  double median_psnr = 0.0;
  double iqr_lo_psnr = 0.0, iqr_hi_psnr = 0.0;
  std::size_t perfect_count = 0;  // excluded from the PSNR aggregates
  double mean_ssim = 0.0;
  double median_ssim = 0.0;
  double iqr_lo_ssim = 0.0, iqr_hi_ssim = 0.0;
};

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ContractError("percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

inline MetricsSummary summarize(const std::string& method,
                                const std::vector<MetricsRow>& rows) {
  MetricsSummary s;
  s.method = method;
  std::vector<double> ps, ss;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    if (std::isinf(r.psnr_db)) {
      ++s.perfect_count;
    } else {
      ps.push_back(r.psnr_db);
    }
    ss.push_back(r.ssim_value);
  }
  if (!ps.empty()) {
    double acc = 0.0;
    for (double v : ps) acc += v;
    s.mean_psnr = acc / static_cast<double>(ps.size());
    s.median_psnr = percentile(ps, 0.5);
    s.iqr_lo_psnr = percentile(ps, 0.25);
    s.iqr_hi_psnr = percentile(ps, 0.75);
  }
  if (!ss.empty()) {
    double acc = 0.0;
    for (double v : ss) acc += v;
    s.mean_ssim = acc / static_cast<double>(ss.size());
    s.median_ssim = percentile(ss, 0.5);
    s.iqr_lo_ssim = percentile(ss, 0.25);
    s.iqr_hi_ssim = percentile(ss, 0.75);
  }
  return s;
}

// One named reconstruction method for the evaluation harness.
struct MethodUnderTest {
  std::string name;
  // item index -> reconstruction
  std::function<ComplexImage(std::size_t)> reconstruct;
};

// Reconstructs every item with every method (parallel over items) and
// computes both metrics against the references.
inline std::vector<MetricsRow> evaluate_methods(
    const std::vector<ComplexImage>& refs,
    const std::vector<MethodUnderTest>& methods) {
  std::vector<MetricsRow> rows(refs.size() * methods.size());
  parallel_for(refs.size(), [&](std::size_t item) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const ComplexImage rec = methods[m].reconstruct(item);
      MetricsRow& row = rows[item * methods.size() + m];
      row.item = item;
      row.method = methods[m].name;
      row.psnr_db = psnr(refs[item], rec);
      row.ssim_value = ssim(refs[item], rec);
    }
  });
  return rows;
}

}  // namespace urecon
