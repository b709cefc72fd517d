// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace upret {

ad::NodeId ParamBinder::get(const std::string& name) {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  auto it = store_.find(name);
  if (it == store_.end()) throw std::out_of_range("missing parameter '" + name + "'");
  const ad::NodeId id = graph_.param(name, it->second);
  ids_[name] = id;
  return id;
}

ad::NodeId mlp(ParamBinder& params, ad::NodeId x, const std::string& prefix) {
  auto& g = params.graph();
  const auto h = g.gelu(g.add(g.matmul(x, params.get(prefix + ".fc1.w")), params.get(prefix + ".fc1.b")));
  return g.add(g.matmul(h, params.get(prefix + ".fc2.w")), params.get(prefix + ".fc2.b"));
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w = standard_normal(fan_in, fan_out, rng);
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.data()) v *= s;
  return w;
}

void init_mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, Rng& rng) {
  store[prefix + ".fc1.w"] = glorot(in, hidden, rng);
  store[prefix + ".fc1.b"] = Tensor(1, hidden);
  store[prefix + ".fc2.w"] = glorot(hidden, out, rng);
  store[prefix + ".fc2.b"] = Tensor(1, out);
}

}  // namespace upret
