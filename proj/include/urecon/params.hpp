#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "urecon/graph.hpp"
#include "urecon/tensor.hpp"

namespace urecon {

// Ordered, named collection of trainable tensors. Order is fixed at
// initialization and preserved through checkpoints so runs are reproducible.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  bool has(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return true;
    return false;
  }
  Tensor& at(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return t;
    throw ContractError("unknown parameter: " + name);
  }
  const Tensor& at(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return t;
    throw ContractError("unknown parameter: " + name);
  }
  void add(std::string name, Tensor t) {
    if (has(name)) throw ContractError("duplicate parameter: " + name);
    items.emplace_back(std::move(name), std::move(t));
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }
};

// Per-graph binding of parameter names to leaf nodes.
using NodeMap = std::unordered_map<std::string, ad::NodeId>;

inline NodeMap bind_params(ad::Graph& g, const ParamSet& ps,
                           bool trainable = true) {
  NodeMap m;
  for (const auto& [name, t] : ps.items) {
    Tensor copy = t;
    copy.requires_grad = trainable;
    m.emplace(name, g.leaf(std::move(copy)));
  }
  return m;
}

inline ad::NodeId node_of(const NodeMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw ContractError("parameter not bound: " + name);
  return it->second;
}

}  // namespace urecon
