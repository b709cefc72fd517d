// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "upret/errors.hpp"

namespace upret::eval {

const char* direction_name(Direction d) noexcept { return d == Direction::T2V ? "t2v" : "v2t"; }

RankVector rank_matrix(const Tensor& s, Direction direction) {
  const std::size_t q = s.rows();
  if (s.cols() != q) throw ShapeError("rank_matrix", "needs a square matrix, got " + shape_string(s.shape()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isnan(s[i])) {
      throw std::domain_error("rank_matrix: NaN at (" + std::to_string(i / q) + ", " +
                              std::to_string(i % q) + ")");
    }
  }
  RankVector ranks(q, 1);
  for (std::size_t i = 0; i < q; ++i) {
    const double truth = s(i, i);
    std::size_t above = 0;
    for (std::size_t j = 0; j < q; ++j) {
      const double v = direction == Direction::T2V ? s(i, j) : s(j, i);
      if (v > truth) ++above;
    }
    ranks[i] = above + 1;
  }
  return ranks;
}

RetrievalReport metrics(const RankVector& ranks, Direction direction) {
  if (ranks.empty()) throw std::invalid_argument("metrics: no queries");
  RetrievalReport r;
  r.direction = direction;
  r.queries = ranks.size();
  const double q = static_cast<double>(ranks.size());
  std::size_t at1 = 0, at5 = 0, at10 = 0;
  double total = 0.0;
  for (std::size_t k : ranks) {
    at1 += k <= 1;
    at5 += k <= 5;
    at10 += k <= 10;
    total += static_cast<double>(k);
  }
  r.r1 = 100.0 * static_cast<double>(at1) / q;
  r.r5 = 100.0 * static_cast<double>(at5) / q;
  r.r10 = 100.0 * static_cast<double>(at10) / q;
  r.mnr = total / q;
  RankVector sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.medr = n % 2 ? static_cast<double>(sorted[n / 2])
                 : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
  return r;
}

std::string to_tsv(const RetrievalReport& r) {
  std::ostringstream os;
  os << direction_name(r.direction) << '\t' << r.r1 << '\t' << r.r5 << '\t' << r.r10 << '\t'
     << r.medr << '\t' << r.mnr << '\t' << r.queries;
  return os.str();
}

std::string to_key_values(const RetrievalReport& r) {
  const std::string p = direction_name(r.direction);
  std::ostringstream os;
  os << p << ".r1=" << r.r1 << '\n'
     << p << ".r5=" << r.r5 << '\n'
     << p << ".r10=" << r.r10 << '\n'
     << p << ".medr=" << r.medr << '\n'
     << p << ".mnr=" << r.mnr << '\n'
     << p << ".q=" << r.queries << '\n';
  return os.str();
}

}  // namespace upret::eval
