// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "upret/tensor.hpp"

namespace upret {

using Rng = std::mt19937_64;

// Mixes a base seed with stream coordinates (splitmix64 finalizer), so that
// independent streams can be derived from (seed, epoch, sample, ...) without
// carrying generator state around.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> stream) {
  return Rng(derive_seed(base, stream));
}

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace upret
