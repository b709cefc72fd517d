// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/ot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "upret/errors.hpp"

namespace upret::ot {

namespace {

constexpr double kAlignmentSlack = 1e-9;

double log_sum_exp(const double* x, std::size_t n, std::size_t stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i * stride]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - m);
  return m + std::log(s);
}

bool is_uniform(const std::vector<double>& p) {
  const double u = 1.0 / static_cast<double>(p.size());
  return std::all_of(p.begin(), p.end(), [u](double v) { return std::abs(v - u) <= 1e-12; });
}

// Solves the square system M x = rhs in place; false if (numerically) singular.
bool solve(std::vector<double> m, std::vector<double> rhs, std::size_t n, std::vector<double>& x) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
    if (std::abs(m[piv * n + col]) < 1e-12) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m[piv * n + c], m[col * n + c]);
      std::swap(rhs[piv], rhs[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r * n + col] / m[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m[r * n + c] -= f * m[col * n + c];
      rhs[r] -= f * rhs[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double s = rhs[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= m[r * n + c] * x[c];
    x[r] = s / m[r * n + r];
  }
  return true;
}

double assignment_bruteforce(const Tensor& c) {
  const std::size_t n = c.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

double vertex_enumeration(const Tensor& c, const Marginals& m) {
  const std::size_t R = c.rows(), C = c.cols(), cells = R * C;
  const std::size_t basis = R + C - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chosen;
  std::vector<double> x;
  for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != basis) continue;
    chosen.clear();
    for (std::size_t k = 0; k < cells; ++k)
      if (mask & (1u << k)) chosen.push_back(k);
    // Row constraints, then all but the last column constraint (redundant).
    std::vector<double> mat(basis * basis, 0.0), rhs(basis, 0.0);
    for (std::size_t v = 0; v < basis; ++v) {
      const std::size_t i = chosen[v] / C, j = chosen[v] % C;
      mat[i * basis + v] = 1.0;
      if (j + 1 < C) mat[(R + j) * basis + v] = 1.0;
    }
    for (std::size_t i = 0; i < R; ++i) rhs[i] = m.rows[i];
    for (std::size_t j = 0; j + 1 < C; ++j) rhs[R + j] = m.cols[j];
    if (!solve(mat, rhs, basis, x)) continue;
    if (std::any_of(x.begin(), x.end(), [](double v) { return v < -1e-12; })) continue;
    double cost = 0.0;
    for (std::size_t v = 0; v < basis; ++v) cost += std::max(x[v], 0.0) * c[chosen[v]];
    best = std::min(best, cost);
  }
  return best;
}


// Largest (max C - min C) / eta for which the scaling iterations run on the
// kernel exp(-C / eta) directly. Entries then stay above e^-200, far from
// underflow, and each iteration needs no exp.
constexpr double kKernelDomainRange = 200.0;

bool record(TransportPlan& plan, std::size_t it, double viol, double tol) {
  plan.violation_history.push_back(viol);
  plan.iterations_used = it + 1;
  plan.marginal_violation = viol;
  plan.converged = viol <= tol;
  return plan.converged;
}

// Same f-then-g updates as the log-domain loop, in terms of u = e^f, v = e^g.
TransportPlan sinkhorn_kernel(const Tensor& C, double c_min, const Marginals& m,
                              const SinkhornOptions& options) {
  const std::size_t R = C.rows(), K = C.cols();
  Tensor kern(R, K);
  for (std::size_t i = 0; i < C.size(); ++i) kern[i] = std::exp(-(C[i] - c_min) / options.eta);
  std::vector<double> u(R, 1.0), v(K, 1.0), kv(R), ktu(K);
  auto mul_kv = [&] {
    for (std::size_t i = 0; i < R; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < K; ++j) s += kern(i, j) * v[j];
      kv[i] = s;
    }
  };
  mul_kv();
  TransportPlan plan;
  plan.marginal_violation = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < R; ++i) u[i] = m.rows[i] / kv[i];
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < K; ++j) ktu[j] += kern(i, j) * u[i];
    for (std::size_t j = 0; j < K; ++j) v[j] = m.cols[j] / ktu[j];
    mul_kv();
    double viol = 0.0;
    for (std::size_t i = 0; i < R; ++i) viol = std::max(viol, std::abs(u[i] * kv[i] - m.rows[i]));
    for (std::size_t j = 0; j < K; ++j) viol = std::max(viol, std::abs(v[j] * ktu[j] - m.cols[j]));
    if (record(plan, it, viol, options.tol)) break;
  }
  plan.values = Tensor(R, K);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < K; ++j) plan.values(i, j) = u[i] * kern(i, j) * v[j];
  return plan;
}

}  // namespace

Marginals Marginals::uniform(std::size_t n_rows, std::size_t n_cols) {
  if (n_rows == 0 || n_cols == 0) throw std::invalid_argument("uniform marginals need N >= 1");
  return {std::vector<double>(n_rows, 1.0 / static_cast<double>(n_rows)),
          std::vector<double>(n_cols, 1.0 / static_cast<double>(n_cols))};
}

void Marginals::validate() const {
  for (const auto* p : {&rows, &cols}) {
    if (p->empty()) throw std::invalid_argument("marginal vector is empty");
    double s = 0.0;
    for (double v : *p) {
      if (!(v > 0.0)) throw std::invalid_argument("marginal entries must be positive");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("marginal does not sum to 1");
  }
}

CostMatrix cost_from_alignment(const Tensor& alignment) {
  CostMatrix c{Tensor(alignment.rows(), alignment.cols()), CostSource::FromAlignment};
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    const double a = alignment[i];
    if (!(a >= -1.0 - kAlignmentSlack && a <= 1.0 + kAlignmentSlack)) {
      throw std::domain_error("alignment entry " + std::to_string(a) + " at index " +
                              std::to_string(i) + " outside [-1, 1]; features not normalized?");
    }
    c.values[i] = 1.0 - std::clamp(a, -1.0, 1.0);
  }
  return c;
}

TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marginals,
                       const SinkhornOptions& options) {
  if (!(options.eta > 0.0)) throw std::invalid_argument("sinkhorn: eta must be > 0");
  if (!(options.tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be > 0");
  const Tensor& C = cost.values;
  const std::size_t R = C.rows(), K = C.cols();
  if (marginals.rows.size() != R || marginals.cols.size() != K) {
    throw ShapeError("sinkhorn", "cost " + shape_string(C.shape()) + " vs marginals of length " +
                                     std::to_string(marginals.rows.size()) + "/" +
                                     std::to_string(marginals.cols.size()));
  }
  marginals.validate();
  if (!C.all_finite()) throw std::domain_error("sinkhorn: non-finite cost entry");

  double c_min = std::numeric_limits<double>::infinity(), c_max = -c_min;
  for (double c : C.data()) {
    c_min = std::min(c_min, c);
    c_max = std::max(c_max, c);
  }
  if ((c_max - c_min) / options.eta <= kKernelDomainRange) {
    return sinkhorn_kernel(C, c_min, marginals, options);
  }

  Tensor logk(R, K);
  for (std::size_t i = 0; i < C.size(); ++i) logk[i] = -C[i] / options.eta;
  std::vector<double> log_a(R), log_b(K), f(R, 0.0), g(K, 0.0), buf(std::max(R, K));
  for (std::size_t i = 0; i < R; ++i) log_a[i] = std::log(marginals.rows[i]);
  for (std::size_t j = 0; j < K; ++j) log_b[j] = std::log(marginals.cols[j]);

  TransportPlan plan;
  plan.marginal_violation = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < K; ++j) buf[j] = logk(i, j) + g[j];
      f[i] = log_a[i] - log_sum_exp(buf.data(), K, 1);
    }
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < R; ++i) buf[i] = logk(i, j) + f[i];
      g[j] = log_b[j] - log_sum_exp(buf.data(), R, 1);
    }
    // Columns are exact after the g-update up to roundoff; measure both.
    double viol = 0.0;
    std::vector<double> colsum(K, 0.0);
    for (std::size_t i = 0; i < R; ++i) {
      double rs = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        const double t = std::exp(logk(i, j) + f[i] + g[j]);
        rs += t;
        colsum[j] += t;
      }
      viol = std::max(viol, std::abs(rs - marginals.rows[i]));
    }
    for (std::size_t j = 0; j < K; ++j) viol = std::max(viol, std::abs(colsum[j] - marginals.cols[j]));
    if (record(plan, it, viol, options.tol)) break;
  }
  plan.values = Tensor(R, K);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < K; ++j) plan.values(i, j) = std::exp(logk(i, j) + f[i] + g[j]);
  return plan;
}

double ot_similarity(const Tensor& plan, const Tensor& alignment) {
  if (!plan.same_shape(alignment)) {
    throw ShapeError("ot_similarity", shape_string(plan.shape()) + " vs " +
                                          shape_string(alignment.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) s += plan[i] * alignment[i];
  return s;
}

double transport_cost(const Tensor& plan, const CostMatrix& cost) {
  if (!plan.same_shape(cost.values)) {
    throw ShapeError("transport_cost", shape_string(plan.shape()) + " vs " +
                                           shape_string(cost.values.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) s += plan[i] * cost.values[i];
  return s;
}

double exact_ot_bruteforce(const CostMatrix& cost, const Marginals& marginals) {
  const Tensor& C = cost.values;
  if (marginals.rows.size() != C.rows() || marginals.cols.size() != C.cols()) {
    throw ShapeError("exact_ot_bruteforce", "marginals do not match cost " + shape_string(C.shape()));
  }
  marginals.validate();
  if (C.rows() == C.cols() && is_uniform(marginals.rows) && is_uniform(marginals.cols)) {
    if (C.rows() > 8) throw std::length_error("exact_ot_bruteforce: assignment size exceeds 8");
    return assignment_bruteforce(C);
  }
  if (C.rows() * C.cols() > 12) {
    throw std::length_error("exact_ot_bruteforce: general instance exceeds 12 cells");
  }
  return vertex_enumeration(C, marginals);
}

}  // namespace upret::ot
