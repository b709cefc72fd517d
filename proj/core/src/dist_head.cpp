// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/dist_head.hpp"

#include <stdexcept>

#include "upret/errors.hpp"

namespace upret::head {

void HeadConfig::validate() const {
  if (half_width == 0) throw std::invalid_argument("head: half width must be positive");
  if (heads == 0 || half_width % heads != 0) {
    throw std::invalid_argument("head: half width " + std::to_string(half_width) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  if (!(sigma_floor >= 0.0)) throw std::invalid_argument("head: sigma floor must be >= 0");
}

std::pair<Tensor, Tensor> split_feature(const Tensor& tokens) {
  const std::size_t d = tokens.cols();
  if (d % 2 != 0) {
    throw ShapeError("split_feature", "feature width " + std::to_string(d) + " is odd");
  }
  return {slice_cols(tokens, 0, d / 2), slice_cols(tokens, d / 2, d)};
}

void init_head_params(ParamStore& store, const std::string& prefix, const HeadConfig& config,
                      Rng& rng, double sigma_bias) {
  config.validate();
  const std::size_t w = config.half_width;
  for (const char* branch : {".mu", ".sigma"}) {
    const std::string p = prefix + branch;
    store[p + ".qkv"] = glorot(w, 3 * w, rng);
    init_mlp(store, p + ".mlp", w, config.hidden(), w, rng);
  }
  for (double& v : store[prefix + ".sigma.mlp.fc2.b"].data()) v = sigma_bias;
}

namespace {
ad::NodeId attend_then_mlp(ParamBinder& params, ad::NodeId x, const Segments& segments,
                           const std::string& branch, const HeadConfig& config) {
  auto& g = params.graph();
  const auto qkv = g.matmul(x, params.get(branch + ".qkv"));
  const auto att = g.segment_attention(qkv, segments, config.heads);
  return mlp(params, att, branch + ".mlp");
}
}  // namespace

ad::NodeId predict_mu(ParamBinder& params, ad::NodeId tokens_mu, const Segments& segments,
                      const std::string& prefix, const HeadConfig& config) {
  auto& g = params.graph();
  return g.add(tokens_mu, attend_then_mlp(params, tokens_mu, segments, prefix + ".mu", config));
}

ad::NodeId predict_sigma(ParamBinder& params, ad::NodeId tokens_sigma, const Segments& segments,
                         const std::string& prefix, const HeadConfig& config) {
  auto& g = params.graph();
  const auto raw = attend_then_mlp(params, tokens_sigma, segments, prefix + ".sigma", config);
  return g.add_scalar(g.softplus(raw), config.sigma_floor);
}

Tensor draw_noise_sum(std::size_t rows, std::size_t cols, std::size_t k, Rng& rng) {
  Tensor acc(rows, cols);
  for (std::size_t d = 0; d < k; ++d) {
    const Tensor eps = standard_normal(rows, cols, rng);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += eps[i];
  }
  return acc;
}

ad::NodeId sample_refine(ad::Graph& graph, ad::NodeId tokens, ad::NodeId mu, ad::NodeId sigma,
                         std::size_t k, Rng& rng) {
  if (k == 0) return tokens;
  const Tensor& m = graph.value(mu);
  return sample_refine(graph, tokens, mu, sigma, k, draw_noise_sum(m.rows(), m.cols(), k, rng));
}

ad::NodeId sample_refine(ad::Graph& graph, ad::NodeId tokens, ad::NodeId mu, ad::NodeId sigma,
                         std::size_t k, const Tensor& noise_sum) {
  if (k == 0) return tokens;
  const auto noise = graph.constant(noise_sum);
  const auto draws = graph.add(graph.scale(mu, static_cast<double>(k)), graph.mul(sigma, noise));
  return graph.scale(graph.add(tokens, draws), 1.0 / static_cast<double>(k + 1));
}

GaussianTokenField predict(const Tensor& tokens_mu, const Tensor& tokens_sigma,
                           const ParamStore& store, const std::string& prefix,
                           const HeadConfig& config) {
  config.validate();
  ad::Graph g;
  ParamBinder params(g, store);
  const Segments seg({tokens_mu.rows()});
  const auto mu = predict_mu(params, g.input("tokens_mu", tokens_mu), seg, prefix, config);
  const auto sigma =
      predict_sigma(params, g.input("tokens_sigma", tokens_sigma), Segments({tokens_sigma.rows()}),
                    prefix, config);
  return {g.value(mu), g.value(sigma)};
}

Tensor sample_refine(const Tensor& tokens, const GaussianTokenField& field, std::size_t k, Rng& rng) {
  if (!tokens.same_shape(field.mu) || !tokens.same_shape(field.sigma)) {
    throw ShapeError("sample_refine", "tokens " + shape_string(tokens.shape()) + ", mu " +
                                          shape_string(field.mu.shape()) + ", sigma " +
                                          shape_string(field.sigma.shape()));
  }
  if (k == 0) return tokens;
  const Tensor noise = draw_noise_sum(tokens.rows(), tokens.cols(), k, rng);
  Tensor out(tokens.rows(), tokens.cols());
  const double kk = static_cast<double>(k), inv = 1.0 / static_cast<double>(k + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (tokens[i] + (field.mu[i] * kk + field.sigma[i] * noise[i])) * inv;
  }
  return out;
}

}  // namespace upret::head
