// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/segments.hpp"

#include <algorithm>

namespace upret {

Segments::Segments(const std::vector<std::size_t>& lengths) : offsets_{0} {
  offsets_.reserve(lengths.size() + 1);
  for (std::size_t n : lengths) offsets_.push_back(offsets_.back() + n);
}

std::size_t Segments::min_length() const noexcept {
  std::size_t m = count() == 0 ? 0 : length(0);
  for (std::size_t s = 1; s < count(); ++s) m = std::min(m, length(s));
  return m;
}

}  // namespace upret
