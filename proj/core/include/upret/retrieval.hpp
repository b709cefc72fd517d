// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "upret/tensor.hpp"

namespace upret::eval {

// T2V: text queries rank videos. V2T: video queries rank texts.
enum class Direction { T2V, V2T };

const char* direction_name(Direction d) noexcept;  // "t2v" / "v2t"

// 1-based rank of the true match for every query.
using RankVector = std::vector<std::size_t>;

struct RetrievalReport {
  Direction direction = Direction::T2V;
  double r1 = 0, r5 = 0, r10 = 0;  // percent
  double medr = 0, mnr = 0;
  std::size_t queries = 0;
};

// `text_by_video` is square with rows indexed by text and columns by video;
// entry (t, v) scores text t against video v, and the diagonal holds the true
// pairs. T2V ranks along rows, V2T along columns. A query's rank counts the
// candidates scoring strictly higher than its true match, so ties never hurt
// the true match. Throws on NaN.
RankVector rank_matrix(const Tensor& text_by_video, Direction direction);

RetrievalReport metrics(const RankVector& ranks, Direction direction);

inline RetrievalReport evaluate(const Tensor& text_by_video, Direction direction) {
  return metrics(rank_matrix(text_by_video, direction), direction);
}

// "t2v\t<r1>\t<r5>\t<r10>\t<medr>\t<mnr>\t<q>"
std::string to_tsv(const RetrievalReport& report);
// "t2v.r1=...\nt2v.r5=...\n..." one key per line, trailing newline.
std::string to_key_values(const RetrievalReport& report);

}  // namespace upret::eval
