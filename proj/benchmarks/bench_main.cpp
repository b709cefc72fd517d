// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "upret/corpus.hpp"
#include "upret/ot.hpp"
#include "upret/retrieval.hpp"
#include "upret/rng.hpp"
#include "upret/trainer.hpp"

namespace {

upret::Tensor unit_rows(std::size_t n, std::size_t d, upret::Rng& rng) {
  upret::Tensor t = upret::standard_normal(n, d, rng);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += t(r, c) * t(r, c);
    for (std::size_t c = 0; c < d; ++c) t(r, c) /= std::sqrt(s);
  }
  return t;
}

// Args: rows, cols, 1000 * eta.
void BM_Sinkhorn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const double eta = static_cast<double>(state.range(2)) / 1000.0;
  upret::Rng rng(1);
  const auto cost = upret::ot::cost_from_alignment(upret::matmul(unit_rows(n, 16, rng), upret::transpose(unit_rows(m, 16, rng))));
  const auto marg = upret::ot::Marginals::uniform(n, m);
  std::size_t iters = 0;
  for (auto _ : state) {
    auto plan = upret::ot::sinkhorn(cost, marg, {eta, 100, 1e-6});
    iters = plan.iterations_used;
    benchmark::DoNotOptimize(plan);
  }
  state.counters["sweeps"] = static_cast<double>(iters);
}
BENCHMARK(BM_Sinkhorn)
    ->Args({16, 8, 100})
    ->Args({64, 32, 100})
    ->Args({64, 32, 500})
    ->Args({64, 32, 5});  // below the kernel-domain range, log domain

void BM_TrainStep(benchmark::State& state) {
  upret::data::CorpusSpec spec;
  spec.pairs = 200;
  const auto corpus = upret::data::generate_corpus(spec);
  upret::train::TrainConfig config;
  config.lr = 1e-3;
  if (state.range(0) == 0) {
    config.k = 0;
    config.lambda_ot = 0.0;
    config.lambda_d = 0.0;
  }
  upret::train::Trainer trainer(config, corpus.dim);
  std::vector<const upret::data::PairedSample*> batch;
  for (std::size_t i = 0; i < 64; ++i) batch.push_back(&corpus.train[i]);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
  state.SetLabel(state.range(0) ? "full" : "baseline");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RankMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  upret::Rng rng(2);
  const upret::Tensor s = upret::standard_normal(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(upret::eval::rank_matrix(s, upret::eval::Direction::T2V));
}
BENCHMARK(BM_RankMatrix)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
