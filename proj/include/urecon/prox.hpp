#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "urecon/graph.hpp"
#include "urecon/params.hpp"
#include "urecon/tensor.hpp"

// Learned proximal operators and the per-iteration history combiner.
// All networks take and return [2,H,W] nodes (real/imaginary channels) and
// share one set of weights across every unrolled iteration.

namespace urecon {

enum class ProxKind { ResNet, UNet, Identity };

struct ResNetConfig {
  std::size_t n_blocks = 5;
  std::size_t channels = 32;
  double residual_scale = 0.1;
};

struct UNetConfig {
  std::size_t channels = 8;
};

struct ProxConfig {
  ProxKind kind = ProxKind::ResNet;
  ResNetConfig resnet;
  UNetConfig unet;
};

namespace detail {

inline Tensor he_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                         Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  t.requires_grad = true;
  return t;
}

inline Tensor zero_bias(std::size_t n) {
  Tensor t({n});
  t.requires_grad = true;
  return t;
}

inline void add_conv(ParamSet& ps, const std::string& stem, std::size_t c_out,
                     std::size_t c_in, std::size_t k, Rng& rng) {
  ps.add(stem + ".k", he_uniform({c_out, c_in, k, k}, c_in * k * k, rng));
  ps.add(stem + ".b", zero_bias(c_out));
}

}  // namespace detail

inline void init_resnet_params(ParamSet& ps, const ResNetConfig& cfg,
                               Rng& rng) {
  const std::size_t c = cfg.channels;
  detail::add_conv(ps, "prox.in", c, 2, 3, rng);
  for (std::size_t j = 0; j < cfg.n_blocks; ++j) {
    const std::string stem = "prox.blk" + std::to_string(j);
    detail::add_conv(ps, stem + ".c1", c, c, 3, rng);
    detail::add_conv(ps, stem + ".c2", c, c, 3, rng);
  }
  detail::add_conv(ps, "prox.out", 2, c, 3, rng);
}

inline void init_unet_params(ParamSet& ps, const UNetConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.channels;
  detail::add_conv(ps, "prox.enc1a", c, 2, 3, rng);
  detail::add_conv(ps, "prox.enc1b", c, c, 3, rng);
  detail::add_conv(ps, "prox.enc2a", 2 * c, c, 3, rng);
  detail::add_conv(ps, "prox.enc2b", 2 * c, 2 * c, 3, rng);
  detail::add_conv(ps, "prox.dec1a", c, 3 * c, 3, rng);
  detail::add_conv(ps, "prox.dec1b", c, c, 3, rng);
  detail::add_conv(ps, "prox.final", 2, c, 1, rng);
}

inline void init_prox_params(ParamSet& ps, const ProxConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case ProxKind::ResNet:
      init_resnet_params(ps, cfg.resnet, rng);
      break;
    case ProxKind::UNet:
      init_unet_params(ps, cfg.unet, rng);
      break;
    case ProxKind::Identity:
      break;
  }
}

// One-hot on the most recent iterate: a freshly initialized history-cognizant
// network reproduces its conventional counterpart exactly.
inline Tensor one_hot_combiner(std::size_t iteration) {
  Tensor k({2, 2 * iteration, 1, 1});
  k[0 * (2 * iteration) + (2 * iteration - 2)] = 1.0;
  k[1 * (2 * iteration) + (2 * iteration - 1)] = 1.0;
  k.requires_grad = true;
  return k;
}

inline void init_combiner_params(ParamSet& ps, std::size_t unrolls) {
  for (std::size_t i = 1; i <= unrolls; ++i)
    ps.add("combiner." + std::to_string(i), one_hot_combiner(i));
}

inline ad::NodeId resnet_forward(ad::Graph& g, ad::NodeId x,
                                 const ResNetConfig& cfg, const NodeMap& w) {
  ad::NodeId h =
      g.conv2d(x, node_of(w, "prox.in.k"), node_of(w, "prox.in.b"));
  for (std::size_t j = 0; j < cfg.n_blocks; ++j) {
    const std::string stem = "prox.blk" + std::to_string(j);
    ad::NodeId t =
        g.conv2d(h, node_of(w, stem + ".c1.k"), node_of(w, stem + ".c1.b"));
    t = g.relu(t);
    t = g.conv2d(t, node_of(w, stem + ".c2.k"), node_of(w, stem + ".c2.b"));
    h = g.add(h, g.scale(t, cfg.residual_scale));
  }
  ad::NodeId out =
      g.conv2d(h, node_of(w, "prox.out.k"), node_of(w, "prox.out.b"));
  return g.add(out, x);  // global residual
}

inline ad::NodeId unet_forward(ad::Graph& g, ad::NodeId x,
                               const UNetConfig& cfg, const NodeMap& w) {
  (void)cfg;
  const auto& s = g.val(x).shape;
  if (s.size() != 3 || s[1] % 4 != 0 || s[2] % 4 != 0)
    throw ContractError("unet_forward needs H, W divisible by 4");
  auto conv_relu = [&](ad::NodeId in, const std::string& stem) {
    return g.relu(
        g.conv2d(in, node_of(w, stem + ".k"), node_of(w, stem + ".b")));
  };
  ad::NodeId e1 = conv_relu(conv_relu(x, "prox.enc1a"), "prox.enc1b");
  ad::NodeId e2 = conv_relu(conv_relu(g.avgpool2(e1), "prox.enc2a"),
                            "prox.enc2b");
  ad::NodeId cat = g.concat({e1, g.upsample2(e2)});
  ad::NodeId d1 = conv_relu(conv_relu(cat, "prox.dec1a"), "prox.dec1b");
  return g.conv2d(d1, node_of(w, "prox.final.k"),
                  node_of(w, "prox.final.b"));
}

inline ad::NodeId prox_forward(ad::Graph& g, ad::NodeId x,
                               const ProxConfig& cfg, const NodeMap& w) {
  switch (cfg.kind) {
    case ProxKind::ResNet:
      return resnet_forward(g, x, cfg.resnet, w);
    case ProxKind::UNet:
      return unet_forward(g, x, cfg.unet, w);
    case ProxKind::Identity:
      return x;
  }
  throw ContractError("unknown prox kind");
}

// v(i) = 1x1 conv over the channel-concatenated history z(1)..z(i).
inline ad::NodeId combine_history(ad::Graph& g,
                                  const std::vector<ad::NodeId>& history,
                                  ad::NodeId kernel, std::size_t iteration) {
  if (history.size() != iteration)
    throw ContractError("history length " + std::to_string(history.size()) +
                        " does not match iteration " +
                        std::to_string(iteration));
  const auto& ks = g.val(kernel).shape;
  if (ks.size() != 4 || ks[0] != 2 || ks[1] != 2 * iteration || ks[2] != 1 ||
      ks[3] != 1)
    throw ContractError("combiner kernel has wrong shape for iteration " +
                        std::to_string(iteration));
  return g.conv2d(g.concat(history), kernel);
}

inline std::size_t conv_param_count(std::size_t c_out, std::size_t c_in,
                                    std::size_t k) {
  return c_out * c_in * k * k + c_out;
}

inline std::size_t prox_param_count(const ProxConfig& cfg) {
  switch (cfg.kind) {
    case ProxKind::ResNet: {
      const std::size_t c = cfg.resnet.channels;
      return conv_param_count(c, 2, 3) +
             cfg.resnet.n_blocks * 2 * conv_param_count(c, c, 3) +
             conv_param_count(2, c, 3);
    }
    case ProxKind::UNet: {
      const std::size_t c = cfg.unet.channels;
      return conv_param_count(c, 2, 3) + conv_param_count(c, c, 3) +
             conv_param_count(2 * c, c, 3) +
             conv_param_count(2 * c, 2 * c, 3) +
             conv_param_count(c, 3 * c, 3) + conv_param_count(c, c, 3) +
             conv_param_count(2, c, 1);
    }
    case ProxKind::Identity:
      return 0;
  }
  throw ContractError("unknown prox kind");
}

// Total combiner weights for T unrolled iterations: sum_i 2*(2i) = 2T(T+1).
inline std::size_t combiner_param_count(std::size_t unrolls) {
  return 2 * unrolls * (unrolls + 1);
}

}  // namespace urecon
