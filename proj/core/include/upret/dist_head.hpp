// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "upret/autodiff.hpp"
#include "upret/layers.hpp"
#include "upret/rng.hpp"
#include "upret/segments.hpp"
#include "upret/tensor.hpp"

namespace upret::head {

// Geometry of one modality's distribution head. Each branch (mu, sigma) owns
// a joint QKV projection (half_width x 3*half_width, no bias) and a two-layer
// GELU MLP half_width -> mlp_hidden -> half_width.
struct HeadConfig {
  std::size_t half_width = 16;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 0;  // 0 means 4 * half_width
  double sigma_floor = 1e-4;

  std::size_t hidden() const noexcept { return mlp_hidden ? mlp_hidden : 4 * half_width; }
  void validate() const;
};

struct GaussianTokenField {
  Tensor mu;
  Tensor sigma;
};

// First D/2 columns and last D/2 columns of an N x D token matrix.
std::pair<Tensor, Tensor> split_feature(const Tensor& tokens);

// Fills <prefix>.mu.* and <prefix>.sigma.* with fresh weights. The sigma
// MLP's output bias starts at `sigma_bias` (pre-softplus).
void init_head_params(ParamStore& store, const std::string& prefix, const HeadConfig& config,
                      Rng& rng, double sigma_bias);

// mu = x + MLP(MHA(x W_qkv)), attention restricted to each segment.
ad::NodeId predict_mu(ParamBinder& params, ad::NodeId tokens_mu, const Segments& segments,
                      const std::string& prefix, const HeadConfig& config);

// sigma = softplus(MLP(MHA(x W_qkv))) + sigma_floor.
ad::NodeId predict_sigma(ParamBinder& params, ad::NodeId tokens_sigma, const Segments& segments,
                         const std::string& prefix, const HeadConfig& config);

// (x + sum_k (mu + eps_k * sigma)) / (K + 1) with eps_k drawn i.i.d. standard
// normal per token, per coordinate and per draw, in draw order from `rng`.
// The draws enter the graph as a constant, so gradients reach mu and sigma
// but not the noise. K = 0 returns `tokens` itself.
ad::NodeId sample_refine(ad::Graph& graph, ad::NodeId tokens, ad::NodeId mu, ad::NodeId sigma,
                         std::size_t k, Rng& rng);

// Same, with the summed draws sum_k eps_k supplied by the caller.
ad::NodeId sample_refine(ad::Graph& graph, ad::NodeId tokens, ad::NodeId mu, ad::NodeId sigma,
                         std::size_t k, const Tensor& noise_sum);

// Sum of K standard-normal draws of the given shape, consumed from `rng` in
// the same order as sample_refine.
Tensor draw_noise_sum(std::size_t rows, std::size_t cols, std::size_t k, Rng& rng);

// Graph-free conveniences for a single sequence.
GaussianTokenField predict(const Tensor& tokens_mu, const Tensor& tokens_sigma,
                           const ParamStore& store, const std::string& prefix,
                           const HeadConfig& config);
Tensor sample_refine(const Tensor& tokens, const GaussianTokenField& field, std::size_t k, Rng& rng);

}  // namespace upret::head
