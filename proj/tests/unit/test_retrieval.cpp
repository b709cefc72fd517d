// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "upret/retrieval.hpp"

using upret::Tensor;
using namespace upret::eval;
using testing::random_tensor;

namespace {

// Sort candidates by descending score with the true match placed first among
// equals, then read off its 1-based position.
std::vector<std::size_t> oracle_ranks(const Tensor& s, Direction d) {
  const std::size_t q = s.rows();
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < q; ++i) {
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), 0);
    auto score = [&](std::size_t j) { return d == Direction::T2V ? s(i, j) : s(j, i); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score(a) != score(b)) return score(a) > score(b);
      if ((a == i) != (b == i)) return a == i;
      return a < b;
    });
    ranks.push_back(static_cast<std::size_t>(std::find(order.begin(), order.end(), i) - order.begin()) + 1);
  }
  return ranks;
}

struct OracleReport {
  double r1, r5, r10, medr, mnr;
};

OracleReport oracle_metrics(std::vector<std::size_t> ranks) {
  OracleReport o{};
  const double q = static_cast<double>(ranks.size());
  o.r1 = 100.0 * static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [](auto r) { return r <= 1; })) / q;
  o.r5 = 100.0 * static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [](auto r) { return r <= 5; })) / q;
  o.r10 = 100.0 * static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [](auto r) { return r <= 10; })) / q;
  o.mnr = std::accumulate(ranks.begin(), ranks.end(), 0.0) / q;
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  o.medr = n % 2 == 1 ? static_cast<double>(ranks[n / 2]) : (ranks[n / 2 - 1] + ranks[n / 2]) / 2.0;
  return o;
}

}  // namespace

TEST_CASE("rank examples") {
  CHECK(rank_matrix(Tensor::identity(3), Direction::T2V) == RankVector{1, 1, 1});
  CHECK(rank_matrix(Tensor::identity(3), Direction::V2T) == RankVector{1, 1, 1});
  const Tensor s = Tensor::from_rows({{0.2, 0.9, 0.5}, {0, 1, 0}, {0, 0, 1}});
  CHECK(rank_matrix(s, Direction::T2V)[0] == 3);
  CHECK(rank_matrix(Tensor(4, 4, 0.5), Direction::T2V) == RankVector{1, 1, 1, 1});
  CHECK(rank_matrix(Tensor(4, 4, 0.5), Direction::V2T) == RankVector{1, 1, 1, 1});
}

TEST_CASE("directions read rows and columns") {
  // Rows are texts, columns videos. Text 0 prefers video 1, so video 1 sees
  // text 0 above its own caption.
  const Tensor s = Tensor::from_rows({{0.5, 0.9}, {0.1, 0.2}});
  CHECK(rank_matrix(s, Direction::T2V) == RankVector{2, 1});
  CHECK(rank_matrix(s, Direction::V2T) == RankVector{1, 2});
}

TEST_CASE("NaN is rejected") {
  Tensor s = Tensor::identity(3);
  s(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(rank_matrix(s, Direction::T2V), std::domain_error);
}

TEST_CASE("metrics examples") {
  auto r = metrics({1, 1, 1}, Direction::T2V);
  CHECK(r.r1 == 100.0);
  CHECK(r.medr == 1.0);
  CHECK(r.mnr == 1.0);
  r = metrics({1, 2, 11, 3}, Direction::V2T);
  CHECK(r.r1 == 25.0);
  CHECK(r.r5 == 75.0);
  CHECK(r.r10 == 75.0);
  CHECK(r.medr == 2.5);
  CHECK(r.mnr == 4.25);
  CHECK(r.queries == 4);
  CHECK(r.direction == Direction::V2T);
  CHECK_THROWS(metrics({}, Direction::T2V));
}

TEST_CASE("metrics agree with brute-force re-ranking") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tensor s = random_tensor(100, 100, seed);
    // Quantize some matrices so ties actually occur.
    if (seed % 3 == 0)
      for (auto& v : s.data()) v = std::round(v * 4.0) / 4.0;
    for (Direction d : {Direction::T2V, Direction::V2T}) {
      const auto ranks = rank_matrix(s, d);
      const auto expect = oracle_ranks(s, d);
      CHECK(ranks == expect);
      const auto rep = metrics(ranks, d);
      const auto o = oracle_metrics(expect);
      CHECK(rep.r1 == o.r1);
      CHECK(rep.r5 == o.r5);
      CHECK(rep.r10 == o.r10);
      CHECK(rep.medr == o.medr);
      CHECK(rep.mnr == o.mnr);
      CHECK(rep.r1 <= rep.r5);
      CHECK(rep.r5 <= rep.r10);
      CHECK(rep.medr >= 1.0);
    }
  }
}

TEST_CASE("ranks are invariant to increasing transforms and relabeling") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor s = random_tensor(30, 30, seed);
    Tensor t = s;
    for (auto& v : t.data()) v = std::exp(3.0 * v) - 7.0;
    CHECK(rank_matrix(t, Direction::T2V) == rank_matrix(s, Direction::T2V));
    CHECK(rank_matrix(t, Direction::V2T) == rank_matrix(s, Direction::V2T));

    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    Tensor p(30, 30);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j) p(i, j) = s(perm[i], perm[j]);
    for (Direction d : {Direction::T2V, Direction::V2T}) {
      const auto a = metrics(rank_matrix(s, d), d), b = metrics(rank_matrix(p, d), d);
      CHECK(a.r1 == b.r1);
      CHECK(a.r5 == b.r5);
      CHECK(a.medr == b.medr);
      CHECK(a.mnr == b.mnr);
    }
  }
}

TEST_CASE("serialization") {
  const auto r = metrics({1, 2, 11, 3}, Direction::T2V);
  CHECK(to_tsv(r) == "t2v\t25\t75\t75\t2.5\t4.25\t4");
  CHECK(to_key_values(r) == "t2v.r1=25\nt2v.r5=75\nt2v.r10=75\nt2v.medr=2.5\nt2v.mnr=4.25\nt2v.q=4\n");
}
