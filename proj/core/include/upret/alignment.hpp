// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>

#include "upret/autodiff.hpp"
#include "upret/layers.hpp"
#include "upret/segments.hpp"
#include "upret/tensor.hpp"

namespace upret::align {

// Train mode adds lambda_ot * S_ot to the token-max score; inference mode
// never sees a transport term.
enum class SimilarityMode { Train, Inference };

// Cosine alignment A_ij = <v_i, t_j> after L2-normalizing every token.
// Throws std::invalid_argument naming the first zero-norm token.
Tensor token_alignment(const Tensor& video, const Tensor& text);

// Token scoring MLP width -> width -> 1 under <prefix>.fc*.
void init_token_weight_params(ParamStore& store, const std::string& prefix, std::size_t width,
                              Rng& rng);

// softmax over each segment's MLP scores; N x 1 column.
ad::NodeId token_weights(ParamBinder& params, ad::NodeId tokens, const Segments& segments,
                         const std::string& prefix);
std::vector<double> token_weights(const Tensor& tokens, const ParamStore& store,
                                  const std::string& prefix);

// 1/2 (sum_i w_v[i] max_j A_ij + sum_j w_t[j] max_i A_ij) (+ lambda_ot * s_ot
// in train mode, where s_ot is required; inference mode forbids it).
double fused_similarity(const Tensor& alignment, std::span<const double> w_video,
                        std::span<const double> w_text, std::optional<double> s_ot,
                        double lambda_ot, SimilarityMode mode);

// Symmetric InfoNCE over logits S / tau with positives on the diagonal:
// 1/2 (mean_i -log softmax_row(S/tau)_ii + mean_j -log softmax_col(S/tau)_jj).
double contrastive_loss(const Tensor& similarity, double tau);
// Same objective applied to the matrix of OT similarities.
double ot_loss(const Tensor& ot_similarities, double tau);
ad::NodeId contrastive_loss(ad::Graph& graph, ad::NodeId similarity, double tau);

// Batch assembly over stacked tokens. `alignment` is the (sum N_v) x (sum N_t)
// matrix of all video-token/text-token cosines; the result is B_v x B_t with
// entry (i, j) the token-max term of video i against text j.
ad::NodeId token_max_similarity(ad::Graph& graph, ad::NodeId alignment, const Segments& video,
                                const Segments& text, ad::NodeId w_video, ad::NodeId w_text);

// sum over each (i, j) block of plan .* alignment. `plans` is a constant with
// the transport plan of pair (i, j) stored in block (i, j); gradients reach
// the alignment only.
ad::NodeId plan_weighted_similarity(ad::Graph& graph, ad::NodeId alignment, ad::NodeId plans,
                                    const Segments& video, const Segments& text);

}  // namespace upret::align
