// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/rng.hpp"

namespace upret {

namespace {
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream) {
  std::uint64_t h = splitmix(base);
  for (std::uint64_t s : stream) h = splitmix(h ^ splitmix(s + 0x632be59bd9b4e019ULL));
  return h;
}

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

}  // namespace upret
