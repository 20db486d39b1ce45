#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "urecon/dataset.hpp"
#include "urecon/graph.hpp"
#include "urecon/params.hpp"
#include "urecon/unroll.hpp"

namespace urecon {

// ||u1 - u2||_2 / ||u1||_2 + ||u1 - u2||_1 / ||u1||_1 over the 2-channel
// real representation; after normalization the terms contribute equally.
inline ad::NodeId normalized_l1l2_loss(ad::Graph& g, ad::NodeId ref,
                                       ad::NodeId out) {
  const Tensor& r = g.val(ref);
  double l2 = 0.0, l1 = 0.0;
  for (double v : r.data) {
    l2 += v * v;
    l1 += std::fabs(v);
  }
  l2 = std::sqrt(l2);
  if (l2 == 0.0)
    throw ContractError("loss reference must not be identically zero");
  ad::NodeId d = g.sub(ref, out);
  ad::NodeId term2 = g.scale(g.sqrt_(g.dot(d, d)), 1.0 / l2);
  ad::NodeId term1 = g.scale(g.sum_all(g.abs_(d)), 1.0 / l1);
  return g.add(term2, term1);
}

inline double normalized_l1l2_loss(const ComplexImage& ref,
                                   const ComplexImage& out) {
  ad::Graph g;
  return g.val(normalized_l1l2_loss(g, g.constant(ref.to_tensor()),
                                    g.constant(out.to_tensor())))[0];
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t t = 0;
  std::vector<Tensor> m, v;  // aligned with the ParamSet order

  void init(const ParamSet& ps, const AdamConfig& c) {
    cfg = c;
    t = 0;
    m.clear();
    v.clear();
    for (const auto& [name, p] : ps.items) {
      m.emplace_back(p.shape);
      v.emplace_back(p.shape);
    }
  }
};

// Standard bias-corrected Adam update. `grads` aligned with the ParamSet.
inline void adam_step(ParamSet& ps, const std::vector<Tensor>& grads,
                      AdamState& st) {
  if (grads.size() != ps.items.size() || st.m.size() != ps.items.size())
    throw ShapeError("adam_step parameter/gradient mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < ps.items.size(); ++k) {
    Tensor& p = ps.items[k].second;
    const Tensor& g = grads[k];
    if (!p.same_shape(g)) throw ShapeError("adam_step gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      st.m[k][i] = st.cfg.beta1 * st.m[k][i] + (1.0 - st.cfg.beta1) * g[i];
      st.v[k][i] =
          st.cfg.beta2 * st.v[k][i] + (1.0 - st.cfg.beta2) * g[i] * g[i];
      const double mhat = st.m[k][i] / bc1;
      const double vhat = st.v[k][i] / bc2;
      p[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
    }
    if (!p.all_finite()) throw NumericError("non-finite parameter after Adam");
  }
}

// Checks that the parameter set matches what the configuration expects
// (combiners iff history-cognizant, alpha iff Nesterov, and so on).
inline void validate_params(const UnrollConfig& cfg, const ParamSet& ps) {
  for (std::size_t i = 1; i <= cfg.unrolls; ++i) {
    if (!uses_cg(cfg.algorithm) && !ps.has("mu_raw." + std::to_string(i)))
      throw ContractError("missing step size mu_raw." + std::to_string(i));
    const bool has_comb = ps.has("combiner." + std::to_string(i));
    if (is_history_cognizant(cfg.algorithm) != has_comb)
      throw ContractError("combiner weights inconsistent with algorithm");
  }
  if ((cfg.algorithm == Algorithm::NESTEROV_PGD) != ps.has("alpha"))
    throw ContractError("alpha inconsistent with algorithm");
  if (uses_cg(cfg.algorithm) != ps.has("beta_raw"))
    throw ContractError("beta inconsistent with algorithm");
  if (is_admm(cfg.algorithm) != ps.has("eta_raw"))
    throw ContractError("eta inconsistent with algorithm");
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 1;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct TrainResult {
  ParamSet params;
  AdamState adam;
  std::vector<double> loss_history;  // mean loss per epoch
};

// Gradient of the loss for one item, aligned with the ParamSet order.
inline double example_gradient(const DatasetItem& item,
                               const UnrollConfig& cfg, const ParamSet& ps,
                               std::vector<Tensor>& grads_out) {
  ad::Graph g;
  const NodeMap w = bind_params(g, ps, /*trainable=*/true);
  const GraphEncoder ge = GraphEncoder::build(g, item.encoder, item.y);
  const ad::NodeId out = unroll_graph(g, ge, cfg, w);
  const ad::NodeId ref = g.constant(item.x_ref.to_tensor());
  const ad::NodeId loss = normalized_l1l2_loss(g, ref, out);
  const auto grads = g.backward(loss);
  grads_out.clear();
  grads_out.reserve(ps.items.size());
  for (const auto& [name, t] : ps.items)
    grads_out.push_back(grads[node_of(w, name)]);
  return g.val(loss)[0];
}

inline TrainResult train(
    const Dataset& ds, const UnrollConfig& cfg, const TrainConfig& tc,
    const std::function<void(std::size_t, double)>& on_epoch = nullptr) {
  if (ds.train_items.empty()) throw ContractError("training set is empty");
  TrainResult res;
  res.params = init_params(cfg, Rng(tc.seed).child(0xA11).next_u64());
  validate_params(cfg, res.params);
  res.adam.init(res.params, tc.adam);

  const std::size_t n = ds.train_items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> grads, batch_grads;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng = Rng(tc.seed).child(0x5E0 + epoch);
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const std::size_t take = std::min(tc.batch_size, n - pos);
      batch_grads.clear();
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < take; ++b) {
        batch_loss += example_gradient(ds.train_items[order[pos + b]], cfg,
                                       res.params, grads);
        if (batch_grads.empty()) {
          batch_grads = std::move(grads);
        } else {
          for (std::size_t k = 0; k < batch_grads.size(); ++k)
            for (std::size_t i = 0; i < batch_grads[k].size(); ++i)
              batch_grads[k][i] += grads[k][i];
        }
      }
      if (take > 1)
        for (auto& t : batch_grads)
          for (double& v : t.data) v /= static_cast<double>(take);
      adam_step(res.params, batch_grads, res.adam);
      epoch_loss += batch_loss;
      pos += take;
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch));
    res.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return res;
}

}  // namespace urecon
