#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "urecon/graph.hpp"
#include "urecon/mri.hpp"
#include "urecon/params.hpp"
#include "urecon/prox.hpp"

// The unrolled reconstruction networks. Every update, including each internal
// conjugate-gradient iteration and FFT butterfly, is recorded in the autodiff
// graph, so training differentiates through the exact forward computation.

namespace urecon {

enum class Algorithm { PGD, HC_PGD, NESTEROV_PGD, VSQP, HC_VSQP, ADMM, HC_ADMM };

inline bool is_history_cognizant(Algorithm a) {
  return a == Algorithm::HC_PGD || a == Algorithm::HC_VSQP ||
         a == Algorithm::HC_ADMM;
}
inline bool uses_cg(Algorithm a) {
  return a == Algorithm::VSQP || a == Algorithm::HC_VSQP ||
         a == Algorithm::ADMM || a == Algorithm::HC_ADMM;
}
inline bool is_admm(Algorithm a) {
  return a == Algorithm::ADMM || a == Algorithm::HC_ADMM;
}

struct UnrollConfig {
  Algorithm algorithm = Algorithm::PGD;
  std::size_t unrolls = 10;  // T
  std::size_t cg_iters = 10;
  ProxConfig prox;
};

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// Trainable scalars start at mu = 1, beta = 0.05, eta = 1 (softplus
// reparameterized) and alpha = 0; combiners start one-hot so every HC
// variant begins exactly at its conventional counterpart.
inline ParamSet init_params(const UnrollConfig& cfg, std::uint64_t seed) {
  ParamSet ps;
  Rng rng(seed);
  init_prox_params(ps, cfg.prox, rng);
  for (std::size_t i = 1; i <= cfg.unrolls; ++i) {
    Tensor mu({1}, {softplus_inverse(1.0)});
    mu.requires_grad = true;
    ps.add("mu_raw." + std::to_string(i), std::move(mu));
  }
  if (is_history_cognizant(cfg.algorithm)) init_combiner_params(ps, cfg.unrolls);
  if (cfg.algorithm == Algorithm::NESTEROV_PGD) {
    Tensor alpha({1}, {0.0});
    alpha.requires_grad = true;
    ps.add("alpha", std::move(alpha));
  }
  if (uses_cg(cfg.algorithm)) {
    Tensor beta({1}, {softplus_inverse(0.05)});
    beta.requires_grad = true;
    ps.add("beta_raw", std::move(beta));
  }
  if (is_admm(cfg.algorithm)) {
    Tensor eta({1}, {softplus_inverse(1.0)});
    eta.requires_grad = true;
    ps.add("eta_raw", std::move(eta));
  }
  return ps;
}

// Exact trainable-scalar count for a configuration.
inline std::size_t count_params(const UnrollConfig& cfg) {
  std::size_t n = prox_param_count(cfg.prox) + cfg.unrolls;  // weights + mu_i
  if (is_history_cognizant(cfg.algorithm))
    n += combiner_param_count(cfg.unrolls);
  if (cfg.algorithm == Algorithm::NESTEROV_PGD) n += 1;  // alpha
  if (uses_cg(cfg.algorithm)) n += 1;                    // beta
  if (is_admm(cfg.algorithm)) n += 1;                    // eta
  return n;
}

// The encoding operator bound into a graph: coil maps, mask and acquired
// data as constant leaves, A and A^H built from recorded primitives.
struct GraphEncoder {
  ad::Graph* g = nullptr;
  std::size_t h = 0, w = 0, nc = 0;
  std::vector<ad::NodeId> maps, conj_maps;
  ad::NodeId mask2 = ad::kNoNode;
  std::vector<ad::NodeId> y;

  static GraphEncoder build(ad::Graph& g, const Encoder& e,
                            const KspaceData& data) {
    if (data.n_coils != e.n_coils() || data.height != e.height() ||
        data.width != e.width())
      throw ShapeError("kspace/encoder shape mismatch");
    GraphEncoder ge;
    ge.g = &g;
    ge.h = e.height();
    ge.w = e.width();
    ge.nc = e.n_coils();
    Tensor m({2, ge.h, ge.w});
    for (std::size_t plane = 0; plane < 2; ++plane)
      for (std::size_t yy = 0; yy < ge.h; ++yy)
        for (std::size_t xx = 0; xx < ge.w; ++xx)
          m[(plane * ge.h + yy) * ge.w + xx] =
              e.mask.sampled[xx] ? 1.0 : 0.0;
    ge.mask2 = g.constant(std::move(m));
    for (std::size_t c = 0; c < ge.nc; ++c) {
      ge.maps.push_back(g.constant(e.coils.maps[c].to_tensor()));
      ComplexImage conj = e.coils.maps[c];
      double* im = conj.im();
      for (std::size_t i = 0; i < conj.pixels(); ++i) im[i] = -im[i];
      ge.conj_maps.push_back(g.constant(conj.to_tensor()));
      ge.y.push_back(g.constant(data.coils[c].to_tensor()));
    }
    return ge;
  }

  // y_c = M F (S_c x)
  std::vector<ad::NodeId> forward(ad::NodeId x) const {
    std::vector<ad::NodeId> out;
    out.reserve(nc);
    for (std::size_t c = 0; c < nc; ++c)
      out.push_back(g->mul(mask2, g->fft2(g->cmul(maps[c], x), -1)));
    return out;
  }

  // sum_c conj(S_c) F^-1 (M k_c)
  ad::NodeId adjoint(const std::vector<ad::NodeId>& k) const {
    ad::NodeId acc = ad::kNoNode;
    for (std::size_t c = 0; c < nc; ++c) {
      ad::NodeId t = g->cmul(conj_maps[c], g->fft2(g->mul(mask2, k[c]), +1));
      acc = (acc == ad::kNoNode) ? t : g->add(acc, t);
    }
    return acc;
  }

  // A^H (y - A x)
  ad::NodeId adjoint_residual(ad::NodeId x) const {
    auto ax = forward(x);
    std::vector<ad::NodeId> res;
    res.reserve(nc);
    for (std::size_t c = 0; c < nc; ++c) res.push_back(g->sub(y[c], ax[c]));
    return adjoint(res);
  }

  // (A^H A + beta I) x
  ad::NodeId normal(ad::NodeId x, ad::NodeId beta) const {
    return g->add(adjoint(forward(x)), g->smul(beta, x));
  }

  ad::NodeId zero_filled() const { return adjoint(y); }
};

// x = z + mu * A^H (y - A z)
inline ad::NodeId dc_gradient_step(ad::Graph& g, const GraphEncoder& ge,
                                   ad::NodeId z, ad::NodeId mu) {
  return g.add(z, g.smul(mu, ge.adjoint_residual(z)));
}

// CG on (A^H A + beta I) x = rhs from x0 = 0, `iters` recorded iterations.
// The real-plane inner product equals Re<.,.> of the complex system, which
// is Hermitian positive definite, so plain CG applies. Breakdown after
// exact convergence degenerates to 0/0, mapped to 0 (iterations become
// no-ops in both forward and backward).
inline ad::NodeId cg_solve_graph(ad::Graph& g, const GraphEncoder& ge,
                                 ad::NodeId beta, ad::NodeId rhs,
                                 std::size_t iters) {
  if (iters < 1) throw ContractError("cg_solve needs at least one iteration");
  if (g.val(beta)[0] <= 0.0)
    throw ContractError("cg_solve requires positive beta");
  ad::NodeId x = g.constant(Tensor({2, ge.h, ge.w}));
  ad::NodeId r = rhs;
  ad::NodeId p = rhs;
  ad::NodeId rs = g.dot(r, r);
  for (std::size_t it = 0; it < iters; ++it) {
    ad::NodeId ap = ge.normal(p, beta);
    ad::NodeId alpha = g.div(rs, g.dot(p, ap), /*safe=*/true);
    x = g.add(x, g.smul(alpha, p));
    r = g.sub(r, g.smul(alpha, ap));
    ad::NodeId rs_next = g.dot(r, r);
    ad::NodeId dir = g.div(rs_next, rs, /*safe=*/true);
    p = g.add(r, g.smul(dir, p));
    rs = rs_next;
  }
  return x;
}

// Plain (non-recorded) CG used by the classical baselines and test oracles.
inline ComplexImage cg_solve(const Encoder& e, double beta,
                             const ComplexImage& rhs, std::size_t iters) {
  if (beta <= 0.0) throw ContractError("cg_solve requires positive beta");
  if (iters < 1) throw ContractError("cg_solve needs at least one iteration");
  ComplexImage x(rhs.height, rhs.width);
  ComplexImage r = rhs;
  ComplexImage p = rhs;
  double rs = 0.0;
  for (double v : r.data) rs += v * v;
  for (std::size_t it = 0; it < iters && rs > 0.0; ++it) {
    const ComplexImage ap = normal_op(e, p, beta);
    double pap = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i)
      pap += p.data[i] * ap.data[i];
    if (pap == 0.0) break;
    const double alpha = rs / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    double rs_next = 0.0;
    for (double v : r.data) rs_next += v * v;
    const double dir = rs_next / rs;
    for (std::size_t i = 0; i < p.data.size(); ++i)
      p.data[i] = r.data[i] + dir * p.data[i];
    rs = rs_next;
  }
  return x;
}

// x = argmin ||y - A x||^2 + beta ||x - z||^2, solved by CG on
// (A^H A + beta I) x = A^H y + beta z. `ahy` is the A^H y node.
inline ad::NodeId vsqp_dc(ad::Graph& g, const GraphEncoder& ge, ad::NodeId z,
                          ad::NodeId beta, ad::NodeId ahy, std::size_t iters) {
  return cg_solve_graph(g, ge, beta, g.add(ahy, g.smul(beta, z)), iters);
}

struct UnrollState {
  ad::NodeId x = ad::kNoNode;              // current iterate
  std::vector<ad::NodeId> prox_history;    // z(1)..z(i)
  ad::NodeId dual = ad::kNoNode;           // ADMM scaled dual u
  ad::NodeId z_prev = ad::kNoNode;         // Nesterov memory
};

// One ADMM iteration in scaled-dual form:
//   z = Prox(x + u); v = z (or combined history);
//   x = cg((A^H A + beta I) x = A^H y + beta (v - u)); u += eta (x - v).
inline void admm_iterate(ad::Graph& g, const GraphEncoder& ge, UnrollState& st,
                         const UnrollConfig& cfg, const NodeMap& w,
                         ad::NodeId ahy, ad::NodeId beta, ad::NodeId eta,
                         std::size_t iteration) {
  ad::NodeId z = prox_forward(g, g.add(st.x, st.dual), cfg.prox, w);
  st.prox_history.push_back(z);
  ad::NodeId v = z;
  if (cfg.algorithm == Algorithm::HC_ADMM)
    v = combine_history(g, st.prox_history,
                        node_of(w, "combiner." + std::to_string(iteration)),
                        iteration);
  ad::NodeId rhs = g.add(ahy, g.smul(beta, g.sub(v, st.dual)));
  st.x = cg_solve_graph(g, ge, beta, rhs, cfg.cg_iters);
  st.dual = g.add(st.dual, g.smul(eta, g.sub(st.x, v)));
}

// Runs the configured variant for T iterations from x(0) = A^H y and returns
// the node of x(T).
inline ad::NodeId unroll_graph(ad::Graph& g, const GraphEncoder& ge,
                               const UnrollConfig& cfg, const NodeMap& w) {
  if (cfg.unrolls < 1) throw ContractError("unroll count must be >= 1");
  if (uses_cg(cfg.algorithm) && cfg.cg_iters < 1)
    throw ContractError("cg_iters must be >= 1 for CG-based variants");
  ad::NodeId ahy = ge.zero_filled();
  UnrollState st;
  st.x = ahy;

  ad::NodeId beta = ad::kNoNode, eta = ad::kNoNode, alpha = ad::kNoNode;
  if (uses_cg(cfg.algorithm)) beta = g.softplus(node_of(w, "beta_raw"));
  if (is_admm(cfg.algorithm)) {
    eta = g.softplus(node_of(w, "eta_raw"));
    st.dual = g.constant(Tensor({2, ge.h, ge.w}));
  }
  if (cfg.algorithm == Algorithm::NESTEROV_PGD) alpha = node_of(w, "alpha");

  for (std::size_t i = 1; i <= cfg.unrolls; ++i) {
    if (is_admm(cfg.algorithm)) {
      admm_iterate(g, ge, st, cfg, w, ahy, beta, eta, i);
      continue;
    }
    ad::NodeId z = prox_forward(g, st.x, cfg.prox, w);
    st.prox_history.push_back(z);
    ad::NodeId v = z;
    switch (cfg.algorithm) {
      case Algorithm::HC_PGD:
      case Algorithm::HC_VSQP:
        v = combine_history(g, st.prox_history,
                            node_of(w, "combiner." + std::to_string(i)), i);
        break;
      case Algorithm::NESTEROV_PGD:
        // First step has no previous prox output, so no extrapolation; the
        // momentum term kicks in from i = 2 (standard accelerated PGD).
        if (i > 1) v = g.add(z, g.smul(alpha, g.sub(z, st.z_prev)));
        st.z_prev = z;
        break;
      default:
        break;
    }
    if (uses_cg(cfg.algorithm)) {
      st.x = vsqp_dc(g, ge, v, beta, ahy, cfg.cg_iters);
    } else {
      ad::NodeId mu = g.softplus(node_of(w, "mu_raw." + std::to_string(i)));
      st.x = dc_gradient_step(g, ge, v, mu);
    }
  }
  return st.x;
}

// Forward-only reconstruction of one acquisition.
inline ComplexImage reconstruct(const Encoder& e, const KspaceData& y,
                                const UnrollConfig& cfg, const ParamSet& ps) {
  ad::Graph g;
  const NodeMap w = bind_params(g, ps, /*trainable=*/false);
  const GraphEncoder ge = GraphEncoder::build(g, e, y);
  const ad::NodeId out = unroll_graph(g, ge, cfg, w);
  return ComplexImage::from_tensor(g.val(out));
}

}  // namespace urecon
