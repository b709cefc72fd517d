// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "upret/tensor.hpp"

namespace upret::ot {

enum class CostSource { FromAlignment, Raw };

struct CostMatrix {
  Tensor values;
  CostSource source = CostSource::Raw;
};

// Row (video token) and column (text token) masses. Each vector is positive
// and sums to one.
struct Marginals {
  std::vector<double> rows;
  std::vector<double> cols;

  static Marginals uniform(std::size_t n_rows, std::size_t n_cols);
  void validate() const;
};

struct SinkhornOptions {
  double eta = 0.1;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

struct TransportPlan {
  Tensor values;
  std::size_t iterations_used = 0;
  // L-infinity violation of the row/column marginals after the last sweep.
  double marginal_violation = 0.0;
  bool converged = false;
  std::vector<double> violation_history;
};

// C = 1 - A for a cosine alignment matrix. Entries of A must lie in [-1, 1]
// up to 1e-9; values inside the slack are clamped.
CostMatrix cost_from_alignment(const Tensor& alignment);

// Entropic OT by Sinkhorn-Knopp scaling in the log domain. Stops once the
// marginal violation drops to tol or after max_iters sweeps; a plan that did
// not converge is still returned, with converged = false.
TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marginals,
                       const SinkhornOptions& options = {});

// Plan-weighted alignment, sum_ij T_ij A_ij (equivalently sum T_ij (1 - C_ij)).
double ot_similarity(const Tensor& plan, const Tensor& alignment);
inline double ot_similarity(const TransportPlan& plan, const Tensor& alignment) {
  return ot_similarity(plan.values, alignment);
}

double transport_cost(const Tensor& plan, const CostMatrix& cost);

// Exact (unregularized) optimal transport cost for small instances: square
// problems with uniform marginals and N <= 8 by enumerating permutations,
// anything else with rows*cols <= 12 by enumerating the vertices of the
// transportation polytope. Larger instances throw.
double exact_ot_bruteforce(const CostMatrix& cost, const Marginals& marginals);

}  // namespace upret::ot
