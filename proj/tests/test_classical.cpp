#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "urecon/classical.hpp"
#include "urecon/metrics.hpp"

using namespace urecon;

namespace {

ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  ComplexImage img(h, w);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("haar transform basics") {
  // constant image: approximation 2c after one level, details zero
  {
    const double c = 0.7;
    ComplexImage x(4, 4);
    for (std::size_t i = 0; i < 16; ++i) x.data[i] = c;
    const WaveletCoeffs w = haar_dwt2(x, 1);
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t xx = 0; xx < 4; ++xx) {
        const double want = (y < 2 && xx < 2) ? 2.0 * c : 0.0;
        CHECK(w.data.at(y, xx).real() == Catch::Approx(want).margin(1e-14));
        CHECK(w.data.at(y, xx).imag() == 0.0);
      }
  }

  const ComplexImage x = random_image(16, 16, 3);
  const WaveletCoeffs w = haar_dwt2(x, 3);

  // orthonormal: coefficient count and l2 norm preserved
  CHECK(w.data.data.size() == x.data.size());
  CHECK(norm2(w.data) == Catch::Approx(norm2(x)).epsilon(1e-12));

  // perfect reconstruction
  const ComplexImage back = haar_idwt2(w);
  double err = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i)
    err = std::max(err, std::fabs(back.data[i] - x.data[i]));
  CHECK(err / norm2(x) < 1e-12);

  // adjointness <Wx, c> = <x, W^T c>
  const ComplexImage cimg = random_image(16, 16, 4);
  WaveletCoeffs cw;
  cw.levels = 3;
  cw.data = cimg;
  const auto lhs = cdot(w.data, cimg);
  const auto rhs = cdot(x, haar_idwt2(cw));
  CHECK(std::abs(lhs - rhs) / (norm2(x) * norm2(cimg)) < 1e-10);

  CHECK_THROWS_AS(haar_dwt2(random_image(12, 16, 5), 3), ContractError);
}

TEST_CASE("soft thresholding") {
  ComplexImage x(4, 4);
  x.set(2, 1, {0.5, 0.0});
  x.set(3, 3, {3.0, 4.0});
  WaveletCoeffs c{1, x};

  // lambda = 0 is the identity
  const WaveletCoeffs same = soft_threshold(c, 0.0);
  CHECK(same.data.data == x.data);

  const WaveletCoeffs t = soft_threshold(c, 0.2);
  CHECK(t.data.at(2, 1).real() == Catch::Approx(0.3).margin(1e-15));

  const WaveletCoeffs t2 = soft_threshold(c, 1.0);
  CHECK(t2.data.at(3, 3).real() == Catch::Approx(2.4).margin(1e-12));
  CHECK(t2.data.at(3, 3).imag() == Catch::Approx(3.2).margin(1e-12));

  // approximation band exempt
  ComplexImage a(4, 4);
  a.set(0, 0, {0.5, 0.0});  // inside the 2x2 approx block of a 1-level stack
  const WaveletCoeffs ta = soft_threshold(WaveletCoeffs{1, a}, 10.0);
  CHECK(ta.data.at(0, 0).real() == 0.5);

  // nonexpansive map
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    WaveletCoeffs ca{1, random_image(8, 8, 100 + trial)};
    WaveletCoeffs cb{1, random_image(8, 8, 200 + trial)};
    const WaveletCoeffs sa = soft_threshold(ca, 0.3);
    const WaveletCoeffs sb = soft_threshold(cb, 0.3);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < sa.data.data.size(); ++i) {
      const double ds = sa.data.data[i] - sb.data.data[i];
      const double d = ca.data.data[i] - cb.data.data[i];
      num += ds * ds;
      den += d * d;
    }
    CHECK(std::sqrt(num) <= std::sqrt(den) * (1.0 + 1e-12));
  }
}

TEST_CASE("l1-wavelet PGD solves the consistent unregularized problem") {
  Encoder e{make_coil_maps(2, 32, 32), make_uniform_mask(32, 1, 0)};
  const ComplexImage truth = make_phantom(32, 32, 9);
  const KspaceData y = apply_forward(e, truth);
  const ComplexImage x = l1w_pgd(y, e, 0.0, 1.0, 50);
  double err = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i)
    err = std::max(err, std::fabs(x.data[i] - truth.data[i]));
  CHECK(err / norm2(truth) < 1e-6);
}

TEST_CASE("l1-wavelet PGD objective is nonincreasing") {
  Encoder e{make_coil_maps(2, 32, 32), make_uniform_mask(32, 4, 8)};
  const ComplexImage truth = make_phantom(32, 32, 11);
  const KspaceData y = simulate_acquisition(truth, e, 0.01, 13);
  const double lambda = 1e-2;
  std::vector<double> objectives;
  l1w_pgd(y, e, lambda, 1.0, 30, 3, [&](const ComplexImage& z) {
    objectives.push_back(l1w_objective(e, y, z, lambda, 3));
  });
  REQUIRE(objectives.size() == 30);
  for (std::size_t i = 1; i < objectives.size(); ++i)
    CHECK(objectives[i] <= objectives[i - 1] * (1.0 + 1e-10));
}

TEST_CASE("l1-wavelet PGD beats zero-filled on an undersampled phantom") {
  Encoder e{make_coil_maps(4, 64, 64), make_uniform_mask(64, 4, 8)};
  const ComplexImage truth = make_phantom(64, 64, 15);
  const KspaceData y = simulate_acquisition(truth, e, 0.01, 17);
  const ComplexImage zf = apply_adjoint(e, y);
  const double zf_psnr = psnr(truth, zf);
  double best = -1e300;
  for (double lambda : classical_lambda_grid())
    best = std::max(best, psnr(truth, l1w_pgd(y, e, lambda, 1.0, 60)));
  CHECK(best > zf_psnr);
}

TEST_CASE("l1-wavelet ADMM converges and agrees with PGD") {
  Encoder full{make_coil_maps(2, 32, 32), make_uniform_mask(32, 1, 0)};
  const ComplexImage truth = make_phantom(32, 32, 19);
  {
    const KspaceData y = apply_forward(full, truth);
    const ComplexImage x = l1w_admm(y, full, 0.0, 0.1, 30, 10);
    double err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i)
      err = std::max(err, std::fabs(x.data[i] - truth.data[i]));
    CHECK(err / norm2(truth) < 1e-6);
  }

  Encoder e{make_coil_maps(2, 32, 32), make_uniform_mask(32, 2, 8)};
  const KspaceData y = simulate_acquisition(truth, e, 0.01, 21);
  const double lambda = 1e-3;

  double primal = 0.0;
  const ComplexImage xa = l1w_admm(y, e, lambda, 0.5, 100, 15, 3, &primal);
  CHECK(primal < 1e-4);

  const ComplexImage xp = l1w_pgd(y, e, lambda, 1.0, 600);
  const double fa = l1w_objective(e, y, xa, lambda, 3);
  const double fp = l1w_objective(e, y, xp, lambda, 3);
  CHECK(std::fabs(fa - fp) / fp < 0.01);
  // both solve the same convex problem: ADMM cannot land below PGD's
  // converged objective by more than the agreement tolerance
  CHECK(fa > fp * 0.99);
}

TEST_CASE("lambda tuning picks the best grid point") {
  // synthetic score peaking at 3e-3
  auto recon = [](double lambda, std::size_t) {
    ComplexImage img(16, 16);
    img.data[0] = lambda;
    return img;
  };
  auto score = [](const ComplexImage& img, std::size_t) {
    const double l = img.data[0];
    return -std::fabs(std::log(l) - std::log(3e-3));
  };
  CHECK(tune_lambda(3, recon, score) == 3e-3);
}
