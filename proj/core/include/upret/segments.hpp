// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace upret {

// Partition of a stacked token axis into consecutive per-sample runs.
// A batch of B sequences with lengths N_1..N_B is stored as one
// (sum N_b) x D matrix plus a Segments describing the boundaries.
class Segments {
 public:
  Segments() : offsets_{0} {}
  explicit Segments(const std::vector<std::size_t>& lengths);

  std::size_t count() const noexcept { return offsets_.size() - 1; }
  std::size_t total() const noexcept { return offsets_.back(); }
  std::size_t begin(std::size_t s) const { return offsets_[s]; }
  std::size_t end(std::size_t s) const { return offsets_[s + 1]; }
  std::size_t length(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
  std::size_t min_length() const noexcept;

  friend bool operator==(const Segments&, const Segments&) = default;

 private:
  std::vector<std::size_t> offsets_;
};

}  // namespace upret
