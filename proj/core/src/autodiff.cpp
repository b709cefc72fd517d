// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "upret/errors.hpp"

namespace upret::ad {

namespace {

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  throw std::invalid_argument("incompatible shapes " + shape_string(a.shape()) + " and " +
                              shape_string(b.shape()));
}

inline double bvalue(const Tensor& b, Broadcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Broadcast::Same: return b(r, c);
    case Broadcast::Row: return b(0, c);
    case Broadcast::Col: return b(r, 0);
    case Broadcast::Scalar: return b[0];
  }
  return 0.0;
}

// Sums a full-shape gradient down to the broadcast operand's shape.
Tensor reduce_to(const Tensor& g, Broadcast k, const Tensor& like) {
  if (k == Broadcast::Same) return g;
  Tensor out(like.rows(), like.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) {
      switch (k) {
        case Broadcast::Row: out(0, c) += g(r, c); break;
        case Broadcast::Col: out(r, 0) += g(r, c); break;
        case Broadcast::Scalar: out[0] += g(r, c); break;
        case Broadcast::Same: break;
      }
    }
  return out;
}

double softplus_value(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double m = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double& v : row) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : row) v /= z;
}

struct HeadLayout {
  std::size_t width, dk;
};

// Attention probabilities of one head within rows [b, e).
Tensor attention_probs(const Tensor& qkv, std::size_t b, std::size_t e, std::size_t head,
                       const HeadLayout& L) {
  const std::size_t n = e - b;
  const double inv = 1.0 / std::sqrt(static_cast<double>(L.dk));
  Tensor p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* q = &qkv(b + i, head * L.dk);
    for (std::size_t j = 0; j < n; ++j) {
      const double* k = &qkv(b + j, L.width + head * L.dk);
      double s = 0.0;
      for (std::size_t c = 0; c < L.dk; ++c) s += q[c] * k[c];
      p(i, j) = s * inv;
    }
    softmax_inplace(p.row(i));
  }
  return p;
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::RowSoftmax: return "row_softmax";
    case Op::RowLogSoftmax: return "row_log_softmax";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Softplus: return "softplus";
    case Op::Gelu: return "gelu";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::L2NormalizeRows: return "l2_normalize_rows";
    case Op::SegmentMax: return "segment_max";
    case Op::SegmentSum: return "segment_sum";
    case Op::SegmentSoftmax: return "segment_softmax";
    case Op::SegmentAttention: return "segment_attention";
  }
  return "?";
}

std::string Graph::where(const Node& node, NodeId id) const {
  std::string s = "node #" + std::to_string(id) + " (" + op_name(node.op);
  if (!node.name.empty()) s += " '" + node.name + "'";
  return s + ")";
}

NodeId Graph::push(Node node) {
  for (NodeId i : node.in) {
    if (i >= nodes_.size()) throw std::out_of_range("graph node id " + std::to_string(i));
    node.needs_grad = node.needs_grad || nodes_[i].needs_grad;
  }
  const NodeId id = nodes_.size();
  nodes_.push_back(std::move(node));
  try {
    evaluate(nodes_[id]);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return id;
}

NodeId Graph::input(std::string name, Tensor value, bool requires_grad) {
  if (named_.count(name)) throw std::invalid_argument("duplicate graph input '" + name + "'");
  if (value.rank() != 2) throw ShapeError("input '" + name + "'", "expected rank 2");
  Node n;
  n.op = Op::Input;
  n.name = name;
  n.needs_grad = requires_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  named_[name] = nodes_.size() - 1;
  return nodes_.size() - 1;
}

NodeId Graph::param(std::string name, Tensor value) {
  const NodeId id = input(std::move(name), std::move(value), true);
  nodes_[id].op = Op::Param;
  return id;
}

NodeId Graph::constant(Tensor value) {
  if (value.rank() != 2) throw ShapeError("constant", "expected rank 2");
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

#define UPRET_UNARY(fn, OPC)      \
  NodeId Graph::fn(NodeId a) {    \
    Node n;                       \
    n.op = Op::OPC;               \
    n.in = {a};                   \
    return push(std::move(n));    \
  }

#define UPRET_BINARY(fn, OPC)             \
  NodeId Graph::fn(NodeId a, NodeId b) {  \
    Node n;                               \
    n.op = Op::OPC;                       \
    n.in = {a, b};                        \
    return push(std::move(n));            \
  }

UPRET_BINARY(matmul, MatMul)
UPRET_UNARY(transpose, Transpose)
UPRET_BINARY(add, Add)
UPRET_BINARY(sub, Sub)
UPRET_BINARY(mul, Mul)
UPRET_UNARY(row_softmax, RowSoftmax)
UPRET_UNARY(row_log_softmax, RowLogSoftmax)
UPRET_UNARY(exp, Exp)
UPRET_UNARY(log, Log)
UPRET_UNARY(sqrt, Sqrt)
UPRET_UNARY(softplus, Softplus)
UPRET_UNARY(gelu, Gelu)
UPRET_BINARY(concat_cols, ConcatCols)
UPRET_UNARY(l2_normalize_rows, L2NormalizeRows)

#undef UPRET_UNARY
#undef UPRET_BINARY

NodeId Graph::scale(NodeId a, double factor) {
  Node n;
  n.op = Op::Scale;
  n.in = {a};
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId a, double offset) {
  Node n;
  n.op = Op::AddScalar;
  n.in = {a};
  n.scalar = offset;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a, Axis axis) {
  Node n;
  n.op = Op::Sum;
  n.in = {a};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a, Axis axis) {
  Node n;
  n.op = Op::Mean;
  n.in = {a};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
  Node n;
  n.op = Op::SliceCols;
  n.in = {a};
  n.lo = begin;
  n.hi = end;
  return push(std::move(n));
}

NodeId Graph::segment_max(NodeId a, Axis axis, const Segments& segments) {
  Node n;
  n.op = Op::SegmentMax;
  n.in = {a};
  n.axis = axis;
  n.segments = std::make_shared<const Segments>(segments);
  return push(std::move(n));
}

NodeId Graph::segment_sum(NodeId a, Axis axis, const Segments& segments) {
  Node n;
  n.op = Op::SegmentSum;
  n.in = {a};
  n.axis = axis;
  n.segments = std::make_shared<const Segments>(segments);
  return push(std::move(n));
}

NodeId Graph::segment_softmax(NodeId a, const Segments& segments) {
  Node n;
  n.op = Op::SegmentSoftmax;
  n.in = {a};
  n.axis = Axis::Rows;
  n.segments = std::make_shared<const Segments>(segments);
  return push(std::move(n));
}

NodeId Graph::segment_attention(NodeId qkv, const Segments& segments, std::size_t heads) {
  Node n;
  n.op = Op::SegmentAttention;
  n.in = {qkv};
  n.lo = heads;
  n.axis = Axis::Rows;
  n.segments = std::make_shared<const Segments>(segments);
  return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const { return nodes_.at(id).value; }

void Graph::mark_output(std::string name, NodeId id) {
  if (id >= nodes_.size()) throw std::out_of_range("graph node id " + std::to_string(id));
  outputs_[std::move(name)] = id;
}

Bindings Graph::bindings() const {
  Bindings b;
  for (const auto& [name, id] : named_) b[name] = nodes_[id].value;
  return b;
}

void Graph::evaluate(Node& node) {
  const NodeId id = static_cast<NodeId>(&node - nodes_.data());
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.in[k]].value; };
  auto fail = [&](const std::string& what) { throw ShapeError(where(node, id), what); };
  Tensor& out = node.value;

  switch (node.op) {
    case Op::Input:
    case Op::Param:
    case Op::Constant:
      return;

    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.cols() != b.rows()) {
        fail("matmul of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
      }
      out = upret::matmul(a, b);
      return;
    }
    case Op::Transpose:
      out = upret::transpose(in(0));
      return;

    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Broadcast k{};
      try {
        k = broadcast_kind(a, b);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
      out = Tensor(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) {
          const double x = a(r, c), y = bvalue(b, k, r, c);
          out(r, c) = node.op == Op::Add ? x + y : node.op == Op::Sub ? x - y : x * y;
        }
      return;
    }
    case Op::Scale:
      out = in(0);
      for (double& v : out.data()) v *= node.scalar;
      return;
    case Op::AddScalar:
      out = in(0);
      for (double& v : out.data()) v += node.scalar;
      return;

    case Op::RowSoftmax:
      out = in(0);
      for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
      return;
    case Op::RowLogSoftmax: {
      out = in(0);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        if (row.empty()) continue;
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - m);
        const double lse = m + std::log(z);
        for (double& v : row) v -= lse;
      }
      return;
    }

    case Op::Exp:
      out = in(0);
      for (double& v : out.data()) v = std::exp(v);
      return;
    case Op::Log:
      out = in(0);
      for (double& v : out.data()) v = std::log(v);
      return;
    case Op::Sqrt:
      out = in(0);
      for (double& v : out.data()) v = std::sqrt(v);
      return;
    case Op::Softplus:
      out = in(0);
      for (double& v : out.data()) v = softplus_value(v);
      return;
    case Op::Gelu:
      out = in(0);
      for (double& v : out.data()) v = gelu_value(v);
      return;

    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0);
      const bool avg = node.op == Op::Mean;
      if (node.axis == Axis::All) {
        double s = 0.0;
        for (double v : a.data()) s += v;
        if (avg) {
          if (a.empty()) fail("mean of an empty tensor");
          s /= static_cast<double>(a.size());
        }
        out = Tensor::scalar(s);
      } else if (node.axis == Axis::Rows) {
        if (avg && a.rows() == 0) fail("mean over zero rows");
        out = Tensor(1, a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
        if (avg) for (double& v : out.data()) v /= static_cast<double>(a.rows());
      } else {
        if (avg && a.cols() == 0) fail("mean over zero columns");
        out = Tensor(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(r, 0) += a(r, c);
        if (avg) for (double& v : out.data()) v /= static_cast<double>(a.cols());
      }
      return;
    }

    case Op::ConcatCols:
      if (in(0).rows() != in(1).rows()) {
        fail("concat of " + shape_string(in(0).shape()) + " and " + shape_string(in(1).shape()));
      }
      out = upret::concat_cols(in(0), in(1));
      return;
    case Op::SliceCols:
      if (node.lo > node.hi || node.hi > in(0).cols()) {
        fail("column slice [" + std::to_string(node.lo) + "," + std::to_string(node.hi) +
             ") of " + shape_string(in(0).shape()));
      }
      out = upret::slice_cols(in(0), node.lo, node.hi);
      return;

    case Op::L2NormalizeRows: {
      out = in(0);
      node.flagged.clear();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double n2 = 0.0;
        for (double v : row) n2 += v * v;
        if (n2 == 0.0) {
          node.flagged.push_back(r);
          continue;
        }
        const double inv = 1.0 / std::sqrt(n2);
        for (double& v : row) v *= inv;
      }
      return;
    }

    case Op::SegmentMax:
    case Op::SegmentSum: {
      const Tensor& a = in(0);
      const Segments& seg = *node.segments;
      const bool over_cols = node.axis == Axis::Cols;
      if (node.axis == Axis::All) fail("segment ops need Axis::Rows or Axis::Cols");
      if (seg.total() != (over_cols ? a.cols() : a.rows())) {
        fail("segments cover " + std::to_string(seg.total()) + " entries, input is " +
             shape_string(a.shape()));
      }
      const bool is_max = node.op == Op::SegmentMax;
      if (is_max && seg.count() > 0 && seg.min_length() == 0) fail("empty segment in max");
      const std::size_t S = seg.count();
      if (over_cols) {
        out = Tensor(a.rows(), S);
        if (is_max) node.argmax.assign(a.rows() * S, 0);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t s = 0; s < S; ++s) {
            if (is_max) {
              std::size_t best = seg.begin(s);
              for (std::size_t c = seg.begin(s) + 1; c < seg.end(s); ++c)
                if (a(r, c) > a(r, best)) best = c;
              out(r, s) = a(r, best);
              node.argmax[r * S + s] = best;
            } else {
              double acc = 0.0;
              for (std::size_t c = seg.begin(s); c < seg.end(s); ++c) acc += a(r, c);
              out(r, s) = acc;
            }
          }
      } else {
        out = Tensor(S, a.cols());
        if (is_max) node.argmax.assign(S * a.cols(), 0);
        for (std::size_t s = 0; s < S; ++s) {
          if (is_max) {
            for (std::size_t c = 0; c < a.cols(); ++c) {
              std::size_t best = seg.begin(s);
              for (std::size_t r = seg.begin(s) + 1; r < seg.end(s); ++r)
                if (a(r, c) > a(best, c)) best = r;
              out(s, c) = a(best, c);
              node.argmax[s * a.cols() + c] = best;
            }
          } else {
            for (std::size_t r = seg.begin(s); r < seg.end(s); ++r)
              for (std::size_t c = 0; c < a.cols(); ++c) out(s, c) += a(r, c);
          }
        }
      }
      return;
    }

    case Op::SegmentSoftmax: {
      const Tensor& a = in(0);
      const Segments& seg = *node.segments;
      if (a.cols() != 1 || seg.total() != a.rows()) {
        fail("segment_softmax needs an N x 1 column matching segments, got " +
             shape_string(a.shape()));
      }
      out = a;
      for (std::size_t s = 0; s < seg.count(); ++s)
        softmax_inplace(std::span<double>(out.data().data() + seg.begin(s), seg.length(s)));
      return;
    }

    case Op::SegmentAttention: {
      const Tensor& qkv = in(0);
      const Segments& seg = *node.segments;
      const std::size_t h = node.lo;
      if (qkv.cols() % 3 != 0) fail("qkv width must be a multiple of 3");
      const std::size_t w = qkv.cols() / 3;
      if (h == 0 || w % h != 0) {
        fail("width " + std::to_string(w) + " not divisible by " + std::to_string(h) + " heads");
      }
      if (seg.total() != qkv.rows()) {
        fail("segments cover " + std::to_string(seg.total()) + " rows, input is " +
             shape_string(qkv.shape()));
      }
      const HeadLayout L{w, w / h};
      out = Tensor(qkv.rows(), w);
      for (std::size_t s = 0; s < seg.count(); ++s) {
        const std::size_t b = seg.begin(s), e = seg.end(s), n = e - b;
        for (std::size_t head = 0; head < h; ++head) {
          const Tensor p = attention_probs(qkv, b, e, head, L);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double pij = p(i, j);
              const double* v = &qkv(b + j, 2 * w + head * L.dk);
              double* o = &out(b + i, head * L.dk);
              for (std::size_t c = 0; c < L.dk; ++c) o[c] += pij * v[c];
            }
        }
      }
      return;
    }
  }
}

std::map<std::string, Tensor> Graph::forward(const Bindings& bindings) {
  for (const auto& [name, id] : named_) {
    auto it = bindings.find(name);
    Node& n = nodes_[id];
    if (it == bindings.end()) {
      throw std::invalid_argument("forward: input '" + name + "' is not bound");
    }
    if (it->second.shape() != n.value.shape()) {
      throw ShapeError(where(n, id), "bound shape " + shape_string(it->second.shape()) +
                                         " differs from recorded " + shape_string(n.value.shape()));
    }
    n.value = it->second;
  }
  for (Node& n : nodes_) evaluate(n);
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out[name] = nodes_[id].value;
  return out;
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor& acc = grads_[id];
  if (acc.rank() == 0) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::out_of_range("graph node id " + std::to_string(loss));
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError(where(nodes_[loss], loss),
                     "backward needs a scalar loss, got " + shape_string(nodes_[loss].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss] = Tensor::scalar(1.0);
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || grads_[id].rank() == 0) continue;
    propagate(n, grads_[id]);
  }
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : named_) {
    if (!nodes_[id].needs_grad) continue;
    out[name] = gradient(id);
  }
  return out;
}

Tensor Graph::gradient(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (id < grads_.size() && grads_[id].rank() != 0) return grads_[id];
  return Tensor(n.value.rows(), n.value.cols());
}

void Graph::propagate(const Node& node, const Tensor& g) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.in[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[node.in[k]].needs_grad; };
  const Tensor& y = node.value;

  switch (node.op) {
    case Op::Input:
    case Op::Param:
    case Op::Constant:
      return;

    case Op::MatMul:
      if (wants(0)) accumulate(node.in[0], upret::matmul(g, upret::transpose(in(1))));
      if (wants(1)) accumulate(node.in[1], upret::matmul(upret::transpose(in(0)), g));
      return;
    case Op::Transpose:
      accumulate(node.in[0], upret::transpose(g));
      return;

    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Broadcast k = broadcast_kind(a, b);
      if (wants(0)) {
        if (node.op == Op::Mul) {
          Tensor ga(a.rows(), a.cols());
          for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) ga(r, c) = g(r, c) * bvalue(b, k, r, c);
          accumulate(node.in[0], ga);
        } else {
          accumulate(node.in[0], g);
        }
      }
      if (wants(1)) {
        Tensor gb = g;
        if (node.op == Op::Sub) {
          for (double& v : gb.data()) v = -v;
        } else if (node.op == Op::Mul) {
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a[i];
        }
        accumulate(node.in[1], reduce_to(gb, k, b));
      }
      return;
    }
    case Op::Scale: {
      Tensor ga = g;
      for (double& v : ga.data()) v *= node.scalar;
      accumulate(node.in[0], ga);
      return;
    }
    case Op::AddScalar:
      accumulate(node.in[0], g);
      return;

    case Op::RowSoftmax: {
      Tensor ga(y.rows(), y.cols());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) = y(r, c) * (g(r, c) - dot);
      }
      accumulate(node.in[0], ga);
      return;
    }
    case Op::RowLogSoftmax: {
      Tensor ga(y.rows(), y.cols());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) gs += g(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) = g(r, c) - std::exp(y(r, c)) * gs;
      }
      accumulate(node.in[0], ga);
      return;
    }

    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
    case Op::Softplus:
    case Op::Gelu: {
      const Tensor& x = in(0);
      Tensor ga(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.size(); ++i) {
        double d = 0.0;
        switch (node.op) {
          case Op::Exp: d = y[i]; break;
          case Op::Log: d = 1.0 / x[i]; break;
          case Op::Sqrt: d = 0.5 / y[i]; break;
          case Op::Softplus: d = sigmoid(x[i]); break;
          case Op::Gelu: d = gelu_grad(x[i]); break;
          default: break;
        }
        ga[i] = g[i] * d;
      }
      accumulate(node.in[0], ga);
      return;
    }

    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0);
      Tensor ga(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) {
          double v = node.axis == Axis::All ? g[0] : node.axis == Axis::Rows ? g(0, c) : g(r, 0);
          if (node.op == Op::Mean) {
            v /= node.axis == Axis::All    ? static_cast<double>(a.size())
                 : node.axis == Axis::Rows ? static_cast<double>(a.rows())
                                           : static_cast<double>(a.cols());
          }
          ga(r, c) = v;
        }
      accumulate(node.in[0], ga);
      return;
    }

    case Op::ConcatCols: {
      const std::size_t ca = in(0).cols();
      if (wants(0)) accumulate(node.in[0], upret::slice_cols(g, 0, ca));
      if (wants(1)) accumulate(node.in[1], upret::slice_cols(g, ca, g.cols()));
      return;
    }
    case Op::SliceCols: {
      const Tensor& a = in(0);
      Tensor ga(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = node.lo; c < node.hi; ++c) ga(r, c) = g(r, c - node.lo);
      accumulate(node.in[0], ga);
      return;
    }

    case Op::L2NormalizeRows: {
      const Tensor& x = in(0);
      Tensor ga(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double n2 = 0.0, dot = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
          n2 += x(r, c) * x(r, c);
          dot += y(r, c) * g(r, c);
        }
        if (n2 == 0.0) continue;
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = (g(r, c) - y(r, c) * dot) * inv;
      }
      accumulate(node.in[0], ga);
      return;
    }

    case Op::SegmentMax: {
      const Tensor& a = in(0);
      Tensor ga(a.rows(), a.cols());
      if (node.axis == Axis::Cols) {
        const std::size_t S = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r)
          for (std::size_t s = 0; s < S; ++s) ga(r, node.argmax[r * S + s]) += g(r, s);
      } else {
        const std::size_t C = y.cols();
        for (std::size_t s = 0; s < y.rows(); ++s)
          for (std::size_t c = 0; c < C; ++c) ga(node.argmax[s * C + c], c) += g(s, c);
      }
      accumulate(node.in[0], ga);
      return;
    }
    case Op::SegmentSum: {
      const Tensor& a = in(0);
      const Segments& seg = *node.segments;
      Tensor ga(a.rows(), a.cols());
      for (std::size_t s = 0; s < seg.count(); ++s) {
        if (node.axis == Axis::Cols) {
          for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = seg.begin(s); c < seg.end(s); ++c) ga(r, c) = g(r, s);
        } else {
          for (std::size_t r = seg.begin(s); r < seg.end(s); ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) ga(r, c) = g(s, c);
        }
      }
      accumulate(node.in[0], ga);
      return;
    }
    case Op::SegmentSoftmax: {
      const Segments& seg = *node.segments;
      Tensor ga(y.rows(), 1);
      for (std::size_t s = 0; s < seg.count(); ++s) {
        double dot = 0.0;
        for (std::size_t r = seg.begin(s); r < seg.end(s); ++r) dot += g[r] * y[r];
        for (std::size_t r = seg.begin(s); r < seg.end(s); ++r) ga[r] = y[r] * (g[r] - dot);
      }
      accumulate(node.in[0], ga);
      return;
    }

    case Op::SegmentAttention: {
      const Tensor& qkv = in(0);
      const Segments& seg = *node.segments;
      const std::size_t h = node.lo;
      const std::size_t w = qkv.cols() / 3;
      const HeadLayout L{w, w / h};
      const double inv = 1.0 / std::sqrt(static_cast<double>(L.dk));
      Tensor ga(qkv.rows(), qkv.cols());
      for (std::size_t s = 0; s < seg.count(); ++s) {
        const std::size_t b = seg.begin(s), e = seg.end(s), n = e - b;
        for (std::size_t head = 0; head < h; ++head) {
          const std::size_t qo = head * L.dk, ko = w + head * L.dk, vo = 2 * w + head * L.dk;
          const Tensor p = attention_probs(qkv, b, e, head, L);
          Tensor dp(n, n);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < L.dk; ++c) {
                const double gic = g(b + i, qo + c);
                acc += gic * qkv(b + j, vo + c);
                ga(b + j, vo + c) += p(i, j) * gic;
              }
              dp(i, j) = acc;
            }
          for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += p(i, j) * dp(i, j);
            for (std::size_t j = 0; j < n; ++j) {
              const double ds = p(i, j) * (dp(i, j) - dot) * inv;
              if (ds == 0.0) continue;
              for (std::size_t c = 0; c < L.dk; ++c) {
                ga(b + i, qo + c) += ds * qkv(b + j, ko + c);
                ga(b + j, ko + c) += ds * qkv(b + i, qo + c);
              }
            }
          }
        }
      }
      accumulate(node.in[0], ga);
      return;
    }
  }
}

double grad_check(Graph& graph, NodeId loss, const std::string& wrt, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
  }
  const Bindings original = graph.bindings();
  auto it = original.find(wrt);
  if (it == original.end()) throw std::invalid_argument("grad_check: no input named '" + wrt + "'");
  graph.forward(original);
  const auto grads = graph.backward(loss);
  auto git = grads.find(wrt);
  if (git == grads.end()) {
    throw std::invalid_argument("grad_check: '" + wrt + "' does not require gradients");
  }
  const Tensor& analytic = git->second;

  Bindings probe = original;
  Tensor& x = probe[wrt];
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    graph.forward(probe);
    const double up = graph.value(loss).item();
    x[i] = saved - eps;
    graph.forward(probe);
    const double down = graph.value(loss).item();
    x[i] = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double ga = analytic[i];
    const double denom = std::max({1.0, std::abs(ga), std::abs(fd)});
    worst = std::max(worst, std::abs(ga - fd) / denom);
  }
  graph.forward(original);
  return worst;
}

double grad_check(const std::function<NodeId(Graph&, NodeId)>& fn, const Tensor& point,
                  double eps) {
  Graph g;
  const NodeId x = g.input("x", point, true);
  const NodeId loss = fn(g, x);
  return grad_check(g, loss, "x", eps);
}

}  // namespace upret::ad
