// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "upret/segments.hpp"
#include "upret/tensor.hpp"

namespace upret::ad {

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor>;

// The dimension an operation collapses or partitions. For sum/mean,
// Axis::Rows reduces over rows (result 1 x C). For segment ops, Axis::Cols
// means the segments partition the columns (result R x S).
enum class Axis { Rows, Cols, All };

enum class Op {
  Input,
  Param,
  Constant,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  RowSoftmax,
  RowLogSoftmax,
  Exp,
  Log,
  Sqrt,
  Softplus,
  Gelu,
  Sum,
  Mean,
  ConcatCols,
  SliceCols,
  L2NormalizeRows,
  SegmentMax,
  SegmentSum,
  SegmentSoftmax,
  SegmentAttention,
};

const char* op_name(Op op) noexcept;

// Define-by-run computation graph over a fixed operation set.
//
// Every builder call evaluates its node immediately, so values are available
// while the graph is still being built (the trainer needs the alignment values
// to solve transport plans before the loss exists). The recorded node list can
// then be replayed with new bindings through forward(), and differentiated
// through backward(). Nodes are appended in topological order by
// construction.
class Graph {
 public:
  NodeId input(std::string name, Tensor value, bool requires_grad = false);
  NodeId param(std::string name, Tensor value);
  // Gradients never flow into a constant.
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  // `b` may broadcast against `a` as 1 x C, R x 1 or 1 x 1.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  NodeId row_softmax(NodeId a);
  NodeId row_log_softmax(NodeId a);
  NodeId exp(NodeId a);
  // Domain x > 0.
  NodeId log(NodeId a);
  // Domain x > 0 (the derivative is unbounded at 0).
  NodeId sqrt(NodeId a);
  NodeId softplus(NodeId a);
  NodeId gelu(NodeId a);
  NodeId sum(NodeId a, Axis axis);
  NodeId mean(NodeId a, Axis axis);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
  // A zero row maps to a zero row and is reported by degenerate_rows().
  NodeId l2_normalize_rows(NodeId a);
  NodeId segment_max(NodeId a, Axis axis, const Segments& segments);
  NodeId segment_sum(NodeId a, Axis axis, const Segments& segments);
  // Softmax of an R x 1 column within each row segment.
  NodeId segment_softmax(NodeId a, const Segments& segments);
  // Multi-head scaled dot-product self-attention restricted to each row
  // segment. Input columns are [Q | K | V], each of width 3*W/3; output is
  // N x W with heads concatenated along columns.
  NodeId segment_attention(NodeId qkv, const Segments& segments, std::size_t heads);

  const Tensor& value(NodeId id) const;
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& degenerate_rows(NodeId id) const { return nodes_.at(id).flagged; }

  void mark_output(std::string name, NodeId id);

  // Current values of every input and param node, keyed by name.
  Bindings bindings() const;

  // Re-evaluates every node with the given input/param values. All input and
  // param names must be bound and keep their recorded shapes.
  std::map<std::string, Tensor> forward(const Bindings& bindings);

  // Reverse-mode sweep from a scalar node. Returns gradients of every param
  // node and every input created with requires_grad, keyed by name.
  std::map<std::string, Tensor> backward(NodeId loss);

  // Gradient of any node from the last backward(); zeros where nothing
  // flowed (constants always).
  Tensor gradient(NodeId id) const;

 private:
  struct Node {
    Op op = Op::Constant;
    std::vector<NodeId> in;
    double scalar = 0.0;
    std::size_t lo = 0, hi = 0;
    Axis axis = Axis::All;
    std::shared_ptr<const Segments> segments;
    std::string name;
    bool needs_grad = false;
    Tensor value;
    std::vector<std::size_t> argmax;
    std::vector<std::size_t> flagged;
  };

  NodeId push(Node node);
  void evaluate(Node& node);
  void propagate(const Node& node, const Tensor& g);
  void accumulate(NodeId id, const Tensor& g);
  std::string where(const Node& node, NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, NodeId> named_;
  std::map<std::string, NodeId> outputs_;
};

// Max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|), comparing
// backward() against central differences of `loss` with respect to the named
// input or param. eps must lie in (0, 1e-2]. The graph is restored to its
// original bindings afterwards.
double grad_check(Graph& graph, NodeId loss, const std::string& wrt, double eps);

// Builds a fresh graph with a single differentiable input "x" bound to
// `point`, calls `fn` to construct a scalar, and grad-checks it.
double grad_check(const std::function<NodeId(Graph&, NodeId)>& fn, const Tensor& point,
                  double eps);

}  // namespace upret::ad
