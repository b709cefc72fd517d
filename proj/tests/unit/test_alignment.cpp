// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "upret/alignment.hpp"
#include "upret/errors.hpp"
#include "upret/rng.hpp"

using upret::Segments;
using upret::Tensor;
using namespace upret::align;
using testing::random_tensor;

namespace {

// Direct symmetric InfoNCE with long double accumulation.
double oracle_infonce(const Tensor& s, double tau) {
  const std::size_t b = s.rows();
  long double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    long double zr = 0, zc = 0;
    for (std::size_t j = 0; j < b; ++j) {
      zr += std::exp(static_cast<long double>(s(i, j) - s(i, i)) / tau);
      zc += std::exp(static_cast<long double>(s(j, i) - s(i, i)) / tau);
    }
    total += 0.5L * (std::log(zr) + std::log(zc));
  }
  return static_cast<double>(total / b);
}

}  // namespace

TEST_CASE("token_alignment") {
  CHECK(token_alignment(Tensor::from_rows({{0.3, 0.4}}), Tensor::from_rows({{0.3, 0.4}}))(0, 0) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(token_alignment(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0, 2}}))(0, 0) == 0.0);
  const Tensor a = token_alignment(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{1, 0}, {0.6, 0.8}}));
  CHECK(a(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a(0, 1) == doctest::Approx(0.6).epsilon(1e-15));
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (double v : token_alignment(random_tensor(4, 6, s), random_tensor(3, 6, s + 50)).data()) {
      CHECK(v >= -1.0 - 1e-9);
      CHECK(v <= 1.0 + 1e-9);
    }
  }
  CHECK_THROWS_WITH_AS(token_alignment(Tensor::from_rows({{1, 0}, {0, 0}}), Tensor::from_rows({{1, 0}})),
                       doctest::Contains("token 1"), std::invalid_argument);
  CHECK_THROWS_AS(token_alignment(Tensor(2, 3, 1.0), Tensor(2, 4, 1.0)), upret::ShapeError);
}

TEST_CASE("token_weights") {
  upret::ParamStore p;
  upret::Rng rng(3);
  init_token_weight_params(p, "w", 4, rng);
  const Tensor x = random_tensor(5, 4, 1);

  auto w = token_weights(x, p, "w");
  double s = 0.0;
  for (double v : w) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
  CHECK(token_weights(random_tensor(1, 4, 2), p, "w") == std::vector<double>{1.0});

  SUBCASE("zero MLP gives uniform weights") {
    for (auto& [name, t] : p) t = Tensor(t.rows(), t.cols(), 0.0);
    for (double v : token_weights(x, p, "w")) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("scores [1, 0] give the two-way softmax") {
    // Zero hidden layer, output bias 0, scores routed through fc1 only:
    // choose weights so the score equals the first coordinate.
    for (auto& [name, t] : p) t = Tensor(t.rows(), t.cols(), 0.0);
    p["w.fc1.w"](0, 0) = 1.0;
    p["w.fc1.b"](0, 0) = 50.0;  // far into GELU's linear range
    p["w.fc2.w"](0, 0) = 1.0;
    const auto two = token_weights(Tensor::from_rows({{1, 0, 0, 0}, {0, 0, 0, 0}}), p, "w");
    CHECK(two[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(two[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(two[1] == doctest::Approx(0.2689).epsilon(1e-3));
  }
}

TEST_CASE("fused_similarity") {
  const std::vector<double> half{0.5, 0.5};
  const Tensor eye = Tensor::identity(2);
  CHECK(fused_similarity(eye, half, half, std::nullopt, 1.0, SimilarityMode::Inference) == 1.0);
  CHECK(fused_similarity(eye, half, half, 0.5, 1.0, SimilarityMode::Train) == 1.5);
  const Tensor a = Tensor::from_rows({{0.2, 0.8}, {0.4, 0.6}});
  CHECK(fused_similarity(a, half, half, std::nullopt, 1.0, SimilarityMode::Inference) ==
        doctest::Approx(0.65).epsilon(1e-15));
  CHECK_THROWS_AS(fused_similarity(eye, half, half, std::nullopt, 1.0, SimilarityMode::Train),
                  std::invalid_argument);
  CHECK_THROWS_AS(fused_similarity(eye, half, half, 0.5, 1.0, SimilarityMode::Inference),
                  std::invalid_argument);
  // Inference values stay inside [-1, 1] for cosine inputs and convex weights.
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor al = token_alignment(random_tensor(3, 5, s), random_tensor(4, 5, s + 9));
    const double v = fused_similarity(al, {{0.2, 0.3, 0.5}}, {{0.1, 0.2, 0.3, 0.4}}, std::nullopt, 1.0,
                                      SimilarityMode::Inference);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("batched token-max similarity agrees with the per-pair form") {
  const Segments sv({2, 3, 1}), st({3, 1, 2});
  const Tensor a = token_alignment(random_tensor(6, 4, 1), random_tensor(6, 4, 2));
  const Tensor wv = Tensor::column_vector(std::vector<double>{0.3, 0.7, 0.2, 0.5, 0.3, 1.0});
  const Tensor wt = Tensor::column_vector(std::vector<double>{0.2, 0.2, 0.6, 1.0, 0.5, 0.5});
  upret::ad::Graph g;
  const Tensor& s = g.value(token_max_similarity(g, g.constant(a), sv, st, g.constant(wv), g.constant(wt)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      Tensor block(sv.length(i), st.length(j));
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c) block(r, c) = a(sv.begin(i) + r, st.begin(j) + c);
      const std::vector<double> wvi(wv.data().begin() + sv.begin(i), wv.data().begin() + sv.end(i));
      const std::vector<double> wtj(wt.data().begin() + st.begin(j), wt.data().begin() + st.end(j));
      CHECK(s(i, j) == doctest::Approx(fused_similarity(block, wvi, wtj, std::nullopt, 0,
                                                        SimilarityMode::Inference)).epsilon(1e-14));
    }
}

TEST_CASE("contrastive loss closed forms") {
  CHECK(contrastive_loss(Tensor::from_rows({{0.37}}), 0.07) == 0.0);
  CHECK(ot_loss(Tensor::from_rows({{-2.0}}), 0.07) == 0.0);
  const double closed = std::log1p(std::exp(-1.0));
  CHECK(contrastive_loss(Tensor::identity(2), 1.0) == doctest::Approx(closed).epsilon(1e-14));
  CHECK(std::abs(contrastive_loss(Tensor::identity(2), 1.0) - 0.31326) <= 1e-4);
  CHECK(ot_loss(Tensor::identity(2), 1.0) == doctest::Approx(closed).epsilon(1e-14));
  CHECK_THROWS_AS(contrastive_loss(Tensor::identity(2), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ot_loss(Tensor::identity(2), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss(Tensor(2, 3), 1.0), upret::ShapeError);
}

TEST_CASE("contrastive loss properties") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor m = random_tensor(6, 6, s);
    const double base = contrastive_loss(m, 0.07);
    CHECK(base >= 0.0);
    CHECK(base == doctest::Approx(oracle_infonce(m, 0.07)).epsilon(1e-12));
    Tensor shifted = m;
    for (auto& v : shifted.data()) v += 3.25;
    CHECK(contrastive_loss(shifted, 0.07) == doctest::Approx(base).epsilon(1e-12));
    CHECK(ot_loss(shifted, 0.07) == doctest::Approx(base).epsilon(1e-12));

    // Graph version equals the plain version.
    upret::ad::Graph g;
    CHECK(g.value(contrastive_loss(g, g.constant(m), 0.07)).item() == doctest::Approx(base).epsilon(1e-13));
  }
  // Scaled identity: loss decreases toward zero as s / tau grows.
  double prev = contrastive_loss(Tensor::identity(4), 1.0);
  for (double sc : {2.0, 4.0, 8.0, 16.0, 32.0}) {
    Tensor m = Tensor::identity(4);
    for (auto& v : m.data()) v *= sc;
    const double l = contrastive_loss(m, 1.0);
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-12);
}

TEST_CASE("contrastive loss on uninformative logits is about ln B") {
  // Random unit features in a high dimension give near-zero similarities.
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    upret::Rng rng(seed);
    const Tensor v = upret::standard_normal(256, 512, rng), t = upret::standard_normal(256, 512, rng);
    mean += contrastive_loss(token_alignment(v, t), 1.0) / 20.0;
  }
  CHECK(std::abs(mean - std::log(256.0)) <= 0.1);
}

TEST_CASE("graph loss gradient passes grad_check") {
  upret::ad::Graph g;
  const auto s = g.input("s", random_tensor(4, 4, 3), true);
  const auto loss = contrastive_loss(g, s, 0.5);
  CHECK(upret::ad::grad_check(g, loss, "s", 1e-5) <= 1e-4);
}

TEST_CASE("plan weighted similarity equals per-pair ot_similarity") {
  const Segments sv({2, 1}), st({1, 3});
  const Tensor a = random_tensor(3, 4, 5);
  const Tensor plans = random_tensor(3, 4, 6, 0.0, 1.0);
  upret::ad::Graph g;
  const Tensor& s = g.value(plan_weighted_similarity(g, g.constant(a), g.constant(plans), sv, st));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double expect = 0.0;
      for (std::size_t r = sv.begin(i); r < sv.end(i); ++r)
        for (std::size_t c = st.begin(j); c < st.end(j); ++c) expect += a(r, c) * plans(r, c);
      CHECK(s(i, j) == doctest::Approx(expect).epsilon(1e-14));
    }
}
