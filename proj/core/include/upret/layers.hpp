// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "upret/autodiff.hpp"
#include "upret/rng.hpp"
#include "upret/tensor.hpp"

namespace upret {

// Named trainable tensors. Ordered by name so that iteration (checkpointing,
// optimizer updates) is deterministic.
using ParamStore = std::map<std::string, Tensor>;

// Creates graph param nodes from a store on first use and reuses them after.
class ParamBinder {
 public:
  ParamBinder(ad::Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}
  ad::NodeId get(const std::string& name);
  ad::Graph& graph() noexcept { return graph_; }

 private:
  ad::Graph& graph_;
  const ParamStore& store_;
  std::map<std::string, ad::NodeId> ids_;
};

// Two-layer perceptron x W1 + b1 -> GELU -> W2 + b2 with parameters
// <prefix>.fc1.w, <prefix>.fc1.b, <prefix>.fc2.w, <prefix>.fc2.b.
ad::NodeId mlp(ParamBinder& params, ad::NodeId x, const std::string& prefix);

void init_mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, Rng& rng);

// Glorot-normal weight matrix.
Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace upret
