// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "upret/errors.hpp"
#include "upret/ot.hpp"

using upret::Tensor;
using namespace upret::ot;
using testing::random_tensor;

namespace {

CostMatrix raw(Tensor t) { return {std::move(t), CostSource::Raw}; }

double row_col_violation(const Tensor& t, const Marginals& m) {
  double v = 0.0;
  std::vector<double> cs(t.cols(), 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      rs += t(i, j);
      cs[j] += t(i, j);
    }
    v = std::max(v, std::abs(rs - m.rows[i]));
  }
  for (std::size_t j = 0; j < t.cols(); ++j) v = std::max(v, std::abs(cs[j] - m.cols[j]));
  return v;
}

// Textbook Sinkhorn on the kernel, run to a fixed point with long double.
Tensor reference_plan(const Tensor& c, const Marginals& m, double eta) {
  const std::size_t R = c.rows(), K = c.cols();
  std::vector<long double> u(R, 1), v(K, 1);
  std::vector<long double> kv(R * K);
  for (std::size_t i = 0; i < R * K; ++i) kv[i] = std::exp(-static_cast<long double>(c[i]) / eta);
  auto kern = [&](std::size_t i, std::size_t j) { return kv[i * K + j]; };
  for (int it = 0; it < 200000; ++it) {
    long double worst = 0;
    for (std::size_t i = 0; i < R; ++i) {
      long double s = 0;
      for (std::size_t j = 0; j < K; ++j) s += kern(i, j) * v[j];
      worst = std::max(worst, std::abs(u[i] * s - m.rows[i]));
      u[i] = m.rows[i] / s;
    }
    if (worst < 1e-17L) break;
    for (std::size_t j = 0; j < K; ++j) {
      long double s = 0;
      for (std::size_t i = 0; i < R; ++i) s += kern(i, j) * u[i];
      v[j] = m.cols[j] / s;
    }
  }
  Tensor t(R, K);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < K; ++j) t(i, j) = static_cast<double>(u[i] * kern(i, j) * v[j]);
  return t;
}

std::vector<double> normalized(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  std::vector<double> out;
  for (double v : t.data()) out.push_back(v / s);
  return out;
}

double min_over_permutations(const Tensor& c) {
  std::vector<std::size_t> p(c.rows());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += c(i, p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best / static_cast<double>(c.rows());
}

// Exact OT for rational marginals k_i / n: split row i into rows_mult[i]
// copies and column j into cols_mult[j] copies, then solve the uniform
// assignment on the expanded square matrix.
double expanded_assignment(const Tensor& c, const std::vector<std::size_t>& rows_mult,
                           const std::vector<std::size_t>& cols_mult) {
  std::vector<std::size_t> ri, cj;
  for (std::size_t i = 0; i < rows_mult.size(); ++i) ri.insert(ri.end(), rows_mult[i], i);
  for (std::size_t j = 0; j < cols_mult.size(); ++j) cj.insert(cj.end(), cols_mult[j], j);
  REQUIRE(ri.size() == cj.size());
  Tensor big(ri.size(), cj.size());
  for (std::size_t a = 0; a < ri.size(); ++a)
    for (std::size_t b = 0; b < cj.size(); ++b) big(a, b) = c(ri[a], cj[b]);
  return min_over_permutations(big);
}

}  // namespace

TEST_CASE("cost_from_alignment") {
  CHECK(cost_from_alignment(Tensor::from_rows({{1}})).values == Tensor::from_rows({{0}}));
  CHECK(cost_from_alignment(Tensor::from_rows({{-1}})).values == Tensor::from_rows({{2}}));
  const auto c = cost_from_alignment(Tensor::from_rows({{0.5, -0.5}}));
  CHECK(c.values == Tensor::from_rows({{0.5, 1.5}}));
  CHECK(c.source == CostSource::FromAlignment);
  // Slack of 1e-9 is tolerated and clamped; beyond it is an error.
  CHECK(cost_from_alignment(Tensor::from_rows({{1.0 + 5e-10}})).values(0, 0) == 0.0);
  CHECK_THROWS_AS(cost_from_alignment(Tensor::from_rows({{1.0 + 1e-8}})), std::domain_error);
  CHECK_THROWS_AS(cost_from_alignment(Tensor::from_rows({{-1.1}})), std::domain_error);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const CostMatrix c = cost_from_alignment(random_tensor(5, 4, s));
    for (double v : c.values.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
}

TEST_CASE("sinkhorn examples") {
  SUBCASE("1x1") {
    const auto p = sinkhorn(raw(Tensor::from_rows({{3.7}})), Marginals::uniform(1, 1));
    CHECK(p.values(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.converged);
  }
  SUBCASE("constant cost gives the uniform plan for any eta") {
    for (double eta : {0.01, 0.1, 1.0, 50.0}) {
      const auto p = sinkhorn(raw(Tensor(2, 2, 0.3)), Marginals::uniform(2, 2), {eta, 100, 1e-12});
      for (double v : p.values.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
  SUBCASE("anti-diagonal cost at eta 0.05") {
    const CostMatrix c = raw(Tensor::from_rows({{0, 1}, {1, 0}}));
    const auto p = sinkhorn(c, Marginals::uniform(2, 2), {0.05, 100, 1e-6});
    CHECK(p.values(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(p.values(1, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(p.values(0, 1) < 1e-6);
    CHECK(p.values(1, 0) < 1e-6);
    CHECK(exact_ot_bruteforce(c, Marginals::uniform(2, 2)) == 0.0);
    CHECK(ot_similarity(p, Tensor::from_rows({{1, -1}, {-1, 1}})) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("sinkhorn errors") {
  const CostMatrix c = raw(Tensor(2, 3, 1.0));
  CHECK_THROWS_AS(sinkhorn(c, Marginals::uniform(2, 3), {0.0, 100, 1e-6}), std::invalid_argument);
  CHECK_THROWS_AS(sinkhorn(c, Marginals::uniform(2, 3), {-1.0, 100, 1e-6}), std::invalid_argument);
  CHECK_THROWS_AS(sinkhorn(c, Marginals::uniform(2, 3), {0.1, 100, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(sinkhorn(c, Marginals::uniform(3, 2)), upret::ShapeError);
  Tensor bad(2, 3, 1.0);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sinkhorn(raw(bad), Marginals::uniform(2, 3)), std::domain_error);
  CHECK_THROWS_AS(sinkhorn(c, Marginals{{0.5, 0.4}, {0.2, 0.3, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(sinkhorn(c, Marginals{{1.0, 0.0}, {0.2, 0.3, 0.5}}), std::invalid_argument);
}

TEST_CASE("non-convergence is reported, not thrown") {
  const CostMatrix c = raw(random_tensor(20, 10, 3, 0.0, 2.0));
  const auto p = sinkhorn(c, Marginals::uniform(20, 10), {0.005, 2, 1e-12});
  CHECK_FALSE(p.converged);
  CHECK(p.iterations_used == 2);
  CHECK(p.violation_history.size() == 2);
  CHECK(p.marginal_violation > 1e-12);
  CHECK(p.values.all_finite());
}

TEST_CASE("plans match a long-double reference in both numeric regimes") {
  // Ranges chosen on both sides of the point where the solver stops using the
  // kernel directly.
  for (double eta : {0.012, 0.05, 0.1, 1.0}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      CAPTURE(eta);
      CAPTURE(s);
      const Tensor c = random_tensor(7, 5, 40 + s, 0.0, 3.0);
      // Generic marginals; rational ones with matching partial sums make the
      // problem degenerate and convergence sublinear.
      const Marginals m{normalized(random_tensor(1, 7, 50 + s, 0.5, 1.5)),
                        normalized(random_tensor(1, 5, 60 + s, 0.5, 1.5))};
      const auto p = sinkhorn(raw(c), m, {eta, 100000, 1e-13});
      CAPTURE(p.marginal_violation);
      CAPTURE(p.iterations_used);
      REQUIRE(p.converged);
      CHECK(max_abs_diff(p.values, reference_plan(c, m, eta)) <= 1e-10);
    }
  }
}

TEST_CASE("plan invariants on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> nr(1, 64), nc(1, 32);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t r = nr(rng), k = nc(rng);
    const CostMatrix c = cost_from_alignment(random_tensor(r, k, 100 + trial));
    const auto m = Marginals::uniform(r, k);
    const auto p = sinkhorn(c, m, {0.1, 1000, 1e-9});
    REQUIRE(p.converged);
    double mass = 0.0;
    for (double v : p.values.data()) {
      CHECK(v >= 0.0);
      mass += v;
    }
    CHECK(std::abs(mass - 1.0) <= 1e-9);
    CHECK(row_col_violation(p.values, m) <= 1e-9);
    CHECK(std::abs(row_col_violation(p.values, m) - p.marginal_violation) <= 1e-14);
    // Violation history is non-increasing over windows of 5 sweeps.
    for (std::size_t i = 5; i < p.violation_history.size(); ++i) {
      CHECK(p.violation_history[i] <= p.violation_history[i - 5] + 1e-15);
    }
    // ot_similarity lies within [min A, max A].
    const Tensor a = random_tensor(r, k, 200 + trial);
    const double s = ot_similarity(p, a);
    const auto [lo, hi] = std::minmax_element(a.data().begin(), a.data().end());
    CHECK(s >= *lo - 1e-12);
    CHECK(s <= *hi + 1e-12);
  }
}

TEST_CASE("permuting rows of the cost permutes the plan") {
  const Tensor c = random_tensor(6, 4, 8, 0.0, 2.0);
  const Marginals m{{0.1, 0.2, 0.3, 0.1, 0.2, 0.1}, {0.25, 0.25, 0.25, 0.25}};
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor cp(6, 4);
  Marginals mp{std::vector<double>(6), m.cols};
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 4; ++j) cp(i, j) = c(perm[i], j);
    mp.rows[i] = m.rows[perm[i]];
  }
  const auto p = sinkhorn(raw(c), m, {0.1, 1000, 1e-12});
  const auto pp = sinkhorn(raw(cp), mp, {0.1, 1000, 1e-12});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(pp.values(i, j) == doctest::Approx(p.values(perm[i], j)).epsilon(1e-10));
}

TEST_CASE("ot_similarity examples") {
  CHECK(ot_similarity(Tensor::from_rows({{1}}), Tensor::from_rows({{0.7}})) == 0.7);
  CHECK(ot_similarity(Tensor(2, 2, 0.25), Tensor::identity(2)) == 0.5);
  CHECK_THROWS_AS(ot_similarity(Tensor(2, 2), Tensor(2, 3)), upret::ShapeError);
}

TEST_CASE("exact_ot_bruteforce") {
  CHECK(exact_ot_bruteforce(raw(Tensor::from_rows({{0, 1}, {1, 0}})), Marginals::uniform(2, 2)) == 0.0);
  CHECK(exact_ot_bruteforce(raw(Tensor::from_rows({{3}})), Marginals::uniform(1, 1)) == 3.0);

  SUBCASE("uniform square instances equal the permutation minimum") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Tensor c = random_tensor(4, 4, s, 0.0, 2.0);
      CHECK(exact_ot_bruteforce(raw(c), Marginals::uniform(4, 4)) ==
            doctest::Approx(min_over_permutations(c)).epsilon(1e-14));
    }
  }
  SUBCASE("rectangular and non-uniform instances match the expanded assignment") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Tensor c23 = random_tensor(2, 3, 300 + s, 0.0, 2.0);
      CHECK(exact_ot_bruteforce(raw(c23), Marginals::uniform(2, 3)) ==
            doctest::Approx(expanded_assignment(c23, {3, 3}, {2, 2, 2})).epsilon(1e-12));
      const Tensor c24 = random_tensor(2, 4, 400 + s, 0.0, 2.0);
      CHECK(exact_ot_bruteforce(raw(c24), Marginals::uniform(2, 4)) ==
            doctest::Approx(expanded_assignment(c24, {4, 4}, {2, 2, 2, 2})).epsilon(1e-12));
      const Tensor c32 = random_tensor(3, 2, 500 + s, 0.0, 2.0);
      const Marginals m{{1.0 / 6, 2.0 / 6, 3.0 / 6}, {0.5, 0.5}};
      CHECK(exact_ot_bruteforce(raw(c32), m) ==
            doctest::Approx(expanded_assignment(c32, {1, 2, 3}, {3, 3})).epsilon(1e-12));
    }
  }
  SUBCASE("entropic cost approaches the exact cost as eta shrinks") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const CostMatrix c = raw(random_tensor(3, 4, 600 + s, 0.0, 2.0));
      const auto m = Marginals::uniform(3, 4);
      const double exact = exact_ot_bruteforce(c, m);
      const auto p = sinkhorn(c, m, {0.005, 100000, 1e-10});
      CHECK(transport_cost(p.values, c) >= exact - 1e-9);
      CHECK(transport_cost(p.values, c) - exact <= 0.02);
    }
  }
  SUBCASE("too large") {
    CHECK_THROWS_AS(exact_ot_bruteforce(raw(Tensor(9, 9)), Marginals::uniform(9, 9)), std::length_error);
    CHECK_THROWS_AS(exact_ot_bruteforce(raw(Tensor(3, 5)), Marginals::uniform(3, 5)), std::length_error);
  }
}
