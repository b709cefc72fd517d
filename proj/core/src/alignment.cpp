// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "upret/errors.hpp"

namespace upret::align {

namespace {

Tensor normalized_rows(const Tensor& x, const char* which) {
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double n2 = 0.0;
    for (double v : x.row(r)) n2 += v * v;
    if (n2 == 0.0) {
      throw std::invalid_argument(std::string("token_alignment: ") + which + " token " +
                                  std::to_string(r) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : out.row(r)) v *= inv;
  }
  return out;
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature tau must be > 0");
}

}  // namespace

Tensor token_alignment(const Tensor& video, const Tensor& text) {
  if (video.cols() != text.cols()) {
    throw ShapeError("token_alignment", shape_string(video.shape()) + " vs " +
                                            shape_string(text.shape()));
  }
  return matmul(normalized_rows(video, "video"), transpose(normalized_rows(text, "text")));
}

void init_token_weight_params(ParamStore& store, const std::string& prefix, std::size_t width,
                              Rng& rng) {
  init_mlp(store, prefix, width, width, 1, rng);
}

ad::NodeId token_weights(ParamBinder& params, ad::NodeId tokens, const Segments& segments,
                         const std::string& prefix) {
  return params.graph().segment_softmax(mlp(params, tokens, prefix), segments);
}

std::vector<double> token_weights(const Tensor& tokens, const ParamStore& store,
                                  const std::string& prefix) {
  ad::Graph g;
  ParamBinder params(g, store);
  const auto w = token_weights(params, g.input("tokens", tokens), Segments({tokens.rows()}), prefix);
  return g.value(w).data();
}

double fused_similarity(const Tensor& alignment, std::span<const double> w_video,
                        std::span<const double> w_text, std::optional<double> s_ot,
                        double lambda_ot, SimilarityMode mode) {
  if (mode == SimilarityMode::Train && !s_ot) {
    throw std::invalid_argument("fused_similarity: train mode needs an OT similarity");
  }
  if (mode == SimilarityMode::Inference && s_ot) {
    throw std::invalid_argument("fused_similarity: OT similarity is train-only");
  }
  const std::size_t nv = alignment.rows(), nt = alignment.cols();
  if (w_video.size() != nv || w_text.size() != nt) {
    throw ShapeError("fused_similarity", "weights of length " + std::to_string(w_video.size()) +
                                             "/" + std::to_string(w_text.size()) +
                                             " for alignment " + shape_string(alignment.shape()));
  }
  double video_side = 0.0, text_side = 0.0;
  for (std::size_t i = 0; i < nv; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nt; ++j) m = std::max(m, alignment(i, j));
    video_side += w_video[i] * m;
  }
  for (std::size_t j = 0; j < nt; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nv; ++i) m = std::max(m, alignment(i, j));
    text_side += w_text[j] * m;
  }
  double s = 0.5 * (video_side + text_side);
  if (mode == SimilarityMode::Train) s += lambda_ot * *s_ot;
  return s;
}

double contrastive_loss(const Tensor& similarity, double tau) {
  check_tau(tau);
  const std::size_t b = similarity.rows();
  if (b == 0 || similarity.cols() != b) {
    throw ShapeError("contrastive_loss", "needs a nonempty square matrix, got " +
                                             shape_string(similarity.shape()));
  }
  double row_term = 0.0, col_term = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mr = -std::numeric_limits<double>::infinity(), mc = mr;
    for (std::size_t j = 0; j < b; ++j) {
      mr = std::max(mr, similarity(i, j) / tau);
      mc = std::max(mc, similarity(j, i) / tau);
    }
    double zr = 0.0, zc = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      zr += std::exp(similarity(i, j) / tau - mr);
      zc += std::exp(similarity(j, i) / tau - mc);
    }
    const double pos = similarity(i, i) / tau;
    row_term += (mr + std::log(zr)) - pos;
    col_term += (mc + std::log(zc)) - pos;
  }
  return 0.5 * (row_term + col_term) / static_cast<double>(b);
}

double ot_loss(const Tensor& ot_similarities, double tau) {
  return contrastive_loss(ot_similarities, tau);
}

ad::NodeId contrastive_loss(ad::Graph& g, ad::NodeId similarity, double tau) {
  check_tau(tau);
  const Tensor& s = g.value(similarity);
  const std::size_t b = s.rows();
  if (b == 0 || s.cols() != b) {
    throw ShapeError("contrastive_loss", "needs a nonempty square matrix, got " +
                                             shape_string(s.shape()));
  }
  const auto logits = g.scale(similarity, 1.0 / tau);
  const auto eye = g.constant(Tensor::identity(b));
  const auto rows = g.sum(g.mul(g.row_log_softmax(logits), eye), ad::Axis::All);
  const auto cols = g.sum(g.mul(g.row_log_softmax(g.transpose(logits)), eye), ad::Axis::All);
  return g.scale(g.add(rows, cols), -0.5 / static_cast<double>(b));
}

ad::NodeId token_max_similarity(ad::Graph& g, ad::NodeId alignment, const Segments& video,
                                const Segments& text, ad::NodeId w_video, ad::NodeId w_text) {
  // (sum N_v) x B_t: best text token of sample j for every video token.
  const auto video_best = g.segment_max(alignment, ad::Axis::Cols, text);
  const auto video_side = g.segment_sum(g.mul(video_best, w_video), ad::Axis::Rows, video);
  // B_v x (sum N_t): best video token of sample i for every text token.
  const auto text_best = g.segment_max(alignment, ad::Axis::Rows, video);
  const auto text_side =
      g.segment_sum(g.mul(text_best, g.transpose(w_text)), ad::Axis::Cols, text);
  return g.scale(g.add(video_side, text_side), 0.5);
}

ad::NodeId plan_weighted_similarity(ad::Graph& g, ad::NodeId alignment, ad::NodeId plans,
                                    const Segments& video, const Segments& text) {
  const auto weighted = g.mul(alignment, plans);
  return g.segment_sum(g.segment_sum(weighted, ad::Axis::Rows, video), ad::Axis::Cols, text);
}

}  // namespace upret::align
