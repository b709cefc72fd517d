// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

// Gradient-check cases covering every differentiable autodiff op, shared by
// the unit tests and the acceptance suite.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "upret/autodiff.hpp"

namespace testing {

using upret::Segments;
using upret::Tensor;
using upret::ad::Axis;
using upret::ad::Graph;
using upret::ad::NodeId;

// Contract a non-scalar node with a fixed random tensor so that every entry
// of the Jacobian contributes to the checked scalar.
inline NodeId contract(Graph& g, NodeId y, std::uint64_t seed) {
  const Tensor& v = g.value(y);
  return g.sum(g.mul(y, g.constant(random_tensor(v.rows(), v.cols(), seed))), Axis::All);
}

struct OpCase {
  std::string name;
  std::size_t rows, cols;
  double lo, hi;
  std::function<NodeId(Graph&, NodeId)> build;
};

inline const Segments kRowSegs({2, 1, 3});  // over 6 rows
inline const Segments kColSegs({1, 3});     // over 4 cols

inline std::vector<OpCase> op_cases() {
  const Tensor w = random_tensor(4, 3, 901);
  const Tensor row_b = random_tensor(1, 4, 902);
  const Tensor other = random_tensor(6, 4, 904);
  return {
      {"matmul_left", 6, 4, -1, 1, [=](Graph& g, NodeId x) { return g.matmul(x, g.constant(w)); }},
      {"matmul_right", 4, 3, -1, 1,
       [=](Graph& g, NodeId x) { return g.matmul(g.constant(other), x); }},
      {"transpose", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.transpose(x); }},
      {"add", 6, 4, -1, 1, [=](Graph& g, NodeId x) { return g.add(x, g.constant(other)); }},
      {"add_self", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.add(x, x); }},
      {"add_broadcast_row", 1, 4, -1, 1,
       [=](Graph& g, NodeId x) { return g.add(g.constant(other), x); }},
      {"add_broadcast_col", 6, 1, -1, 1,
       [=](Graph& g, NodeId x) { return g.add(g.constant(other), x); }},
      {"add_broadcast_scalar", 1, 1, -1, 1,
       [=](Graph& g, NodeId x) { return g.add(g.constant(other), x); }},
      {"sub", 6, 4, -1, 1, [=](Graph& g, NodeId x) { return g.sub(g.constant(other), x); }},
      {"sub_broadcast_row", 1, 4, -1, 1,
       [=](Graph& g, NodeId x) { return g.sub(g.constant(other), x); }},
      {"mul", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.mul(x, x); }},
      {"mul_broadcast_col", 6, 1, -1, 1,
       [=](Graph& g, NodeId x) { return g.mul(g.constant(other), x); }},
      {"mul_broadcast_row_lhs", 6, 4, -1, 1,
       [=](Graph& g, NodeId x) { return g.mul(x, g.constant(row_b)); }},
      {"scale", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.scale(x, -2.5); }},
      {"add_scalar", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.add_scalar(x, 0.75); }},
      {"row_softmax", 6, 4, -2, 2, [](Graph& g, NodeId x) { return g.row_softmax(x); }},
      {"row_log_softmax", 6, 4, -2, 2, [](Graph& g, NodeId x) { return g.row_log_softmax(x); }},
      {"exp", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.exp(x); }},
      {"log", 6, 4, 0.5, 2, [](Graph& g, NodeId x) { return g.log(x); }},
      {"sqrt", 6, 4, 0.5, 2, [](Graph& g, NodeId x) { return g.sqrt(x); }},
      {"softplus", 6, 4, -3, 3, [](Graph& g, NodeId x) { return g.softplus(x); }},
      {"gelu", 6, 4, -3, 3, [](Graph& g, NodeId x) { return g.gelu(x); }},
      {"sum_rows", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.sum(x, Axis::Rows); }},
      {"sum_cols", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.sum(x, Axis::Cols); }},
      {"sum_all", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.sum(x, Axis::All); }},
      {"mean_rows", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.mean(x, Axis::Rows); }},
      {"mean_cols", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.mean(x, Axis::Cols); }},
      {"mean_all", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.mean(x, Axis::All); }},
      {"concat_cols", 6, 4, -1, 1,
       [=](Graph& g, NodeId x) { return g.concat_cols(x, g.mul(x, g.constant(other))); }},
      {"slice_cols", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.slice_cols(x, 1, 3); }},
      {"l2_normalize_rows", 6, 4, -1, 1, [](Graph& g, NodeId x) { return g.l2_normalize_rows(x); }},
      {"segment_max_rows", 6, 4, -1, 1,
       [](Graph& g, NodeId x) { return g.segment_max(x, Axis::Rows, kRowSegs); }},
      {"segment_max_cols", 6, 4, -1, 1,
       [](Graph& g, NodeId x) { return g.segment_max(x, Axis::Cols, kColSegs); }},
      {"segment_sum_rows", 6, 4, -1, 1,
       [](Graph& g, NodeId x) { return g.segment_sum(x, Axis::Rows, kRowSegs); }},
      {"segment_sum_cols", 6, 4, -1, 1,
       [](Graph& g, NodeId x) { return g.segment_sum(x, Axis::Cols, kColSegs); }},
      {"segment_softmax", 6, 1, -2, 2,
       [](Graph& g, NodeId x) { return g.segment_softmax(x, kRowSegs); }},
      {"segment_attention", 6, 12, -1, 1,
       [](Graph& g, NodeId x) { return g.segment_attention(x, kRowSegs, 2); }},
  };
}

}  // namespace testing
