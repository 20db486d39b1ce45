#pragma once

#include <functional>
#include <vector>

#include "urecon/mri.hpp"
#include "urecon/unroll.hpp"
#include "urecon/wavelet.hpp"

// Traditional l1-wavelet regularized baselines. These run on plain complex
// images (no autodiff) since nothing here is trained.

namespace urecon {

// ||y - A x||^2 + lambda * ||W x||_1 (detail bands only, matching the
// unthresholded approximation band of the prox).
inline double l1w_objective(const Encoder& e, const KspaceData& y,
                            const ComplexImage& x, double lambda,
                            std::size_t levels) {
  const KspaceData ax = apply_forward(e, x);
  double fid = 0.0;
  for (std::size_t c = 0; c < ax.n_coils; ++c)
    for (std::size_t i = 0; i < ax.coils[c].data.size(); ++i) {
      const double d = ax.coils[c].data[i] - y.coils[c].data[i];
      fid += d * d;
    }
  return fid + lambda * l1_norm_details(haar_dwt2(x, levels));
}

// Proximal gradient descent: z = prox(x), x = z + mu A^H (y - A z).
// The optional observer sees each prox output z (the ISTA iterate).
inline ComplexImage l1w_pgd(
    const KspaceData& y, const Encoder& e, double lambda, double mu,
    std::size_t iters, std::size_t levels = 3,
    const std::function<void(const ComplexImage&)>& observer = nullptr) {
  if (mu <= 0.0 || mu > 1.0) throw ContractError("l1w_pgd needs mu in (0,1]");
  if (lambda < 0.0) throw ContractError("l1w_pgd needs lambda >= 0");
  ComplexImage x = apply_adjoint(e, y);
  for (std::size_t it = 0; it < iters; ++it) {
    const ComplexImage z =
        haar_idwt2(soft_threshold(haar_dwt2(x, levels), lambda * mu));
    if (observer) observer(z);
    const KspaceData az = apply_forward(e, z);
    KspaceData res = y;
    for (std::size_t c = 0; c < res.n_coils; ++c)
      for (std::size_t i = 0; i < res.coils[c].data.size(); ++i)
        res.coils[c].data[i] -= az.coils[c].data[i];
    x = z;
    const ComplexImage g = apply_adjoint(e, res);
    axpy(mu, g, x);
  }
  return x;
}

// ADMM with the wavelet soft-threshold prox at lambda/beta, CG x-update and
// a unit-rate scaled dual update.
inline ComplexImage l1w_admm(const KspaceData& y, const Encoder& e,
                             double lambda, double beta, std::size_t iters,
                             std::size_t cg_iters, std::size_t levels = 3,
                             double* primal_residual_out = nullptr) {
  if (beta <= 0.0) throw ContractError("l1w_admm needs beta > 0");
  const ComplexImage ahy = apply_adjoint(e, y);
  ComplexImage x = ahy;
  ComplexImage u(x.height, x.width);
  ComplexImage z(x.height, x.width);
  for (std::size_t it = 0; it < iters; ++it) {
    ComplexImage xu = x;
    axpy(1.0, u, xu);
    z = haar_idwt2(soft_threshold(haar_dwt2(xu, levels), lambda / beta));
    ComplexImage rhs = ahy;
    for (std::size_t i = 0; i < rhs.data.size(); ++i)
      rhs.data[i] += beta * (z.data[i] - u.data[i]);
    x = cg_solve(e, beta, rhs, cg_iters);
    for (std::size_t i = 0; i < u.data.size(); ++i)
      u.data[i] += x.data[i] - z.data[i];
  }
  if (primal_residual_out) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double d = x.data[i] - z.data[i];
      acc += d * d;
    }
    *primal_residual_out = std::sqrt(acc);
  }
  return x;
}

inline std::vector<double> classical_lambda_grid() {
  return {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
}

// Grid search over lambda maximizing the mean of `score(reconstruction, i)`
// across items. `recon` maps (lambda, item index) to an image.
inline double tune_lambda(
    std::size_t n_items,
    const std::function<ComplexImage(double, std::size_t)>& recon,
    const std::function<double(const ComplexImage&, std::size_t)>& score,
    const std::vector<double>& grid = classical_lambda_grid()) {
  if (grid.empty()) throw ContractError("empty lambda grid");
  double best_lambda = grid.front();
  double best_score = -1e300;
  for (double lambda : grid) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_items; ++i)
      acc += score(recon(lambda, i), i);
    const double mean = acc / static_cast<double>(n_items);
    if (mean > best_score) {
      best_score = mean;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace urecon
