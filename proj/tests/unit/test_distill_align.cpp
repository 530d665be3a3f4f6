// Copyright 2026 ld-detr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <torch/torch.h>

#include "ld_detr/distill_align.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ld_detr;

namespace {

// Rows with a single nonzero entry of magnitude 2^e normalize exactly to
// +-1, so queue contents can be compared bitwise against the oracle.
std::vector<std::vector<double>> exact_rows(std::mt19937_64& rng, std::int64_t k, std::int64_t dim) {
  std::uniform_int_distribution<std::int64_t> pos(0, dim - 1);
  std::uniform_int_distribution<int> expo(-3, 3);
  std::bernoulli_distribution neg(0.5);
  std::vector<std::vector<double>> rows;
  for (std::int64_t i = 0; i < k; ++i) {
    std::vector<double> r(static_cast<std::size_t>(dim), 0.0);
    r[static_cast<std::size_t>(pos(rng))] = (neg(rng) ? -1.0 : 1.0) * std::ldexp(1.0, expo(rng));
    rows.push_back(r);
  }
  return rows;
}

torch::Tensor to_tensor(const std::vector<std::vector<double>>& rows, std::int64_t dim) {
  auto t = torch::zeros({static_cast<std::int64_t>(rows.size()), dim}, torch::kFloat32);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::int64_t j = 0; j < dim; ++j) t[static_cast<std::int64_t>(i)][j] = rows[i][static_cast<std::size_t>(j)];
  }
  return t;
}

bool matches_oracle(const FeatureQueue& q, const oracle::RingQueue& ref) {
  const auto c = q.contents();
  if (c.size(0) != static_cast<std::int64_t>(ref.rows().size())) return false;
  for (std::size_t i = 0; i < ref.rows().size(); ++i) {
    const auto& r = ref.rows()[i];
    double norm = 0.0;
    for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (c[static_cast<std::int64_t>(i)][static_cast<std::int64_t>(j)].item<double>() != r[j] / norm) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("feature queue agrees with a ring buffer simulation") {
  std::mt19937_64 rng(17);
  const std::int64_t dim = 16;
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t cap = std::uniform_int_distribution<std::int64_t>(1, 64)(rng);
    FeatureQueue q(cap, dim);
    oracle::RingQueue ref(static_cast<std::size_t>(cap));
    const int pushes = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int p = 0; p < pushes; ++p) {
      const std::int64_t k = std::uniform_int_distribution<std::int64_t>(0, cap)(rng);
      const auto rows = exact_rows(rng, k, dim);
      q.push(to_tensor(rows, dim));
      ref.push(rows);
      if (!matches_oracle(q, ref) || q.fill() != static_cast<std::int64_t>(ref.rows().size())) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("feature queue rejects oversized pushes and zero rows") {
  FeatureQueue q(3, 2);
  CHECK_THROWS_AS(q.push(torch::ones({4, 2})), std::invalid_argument);
  CHECK_THROWS_AS(q.push(torch::zeros({1, 2})), std::invalid_argument);
  CHECK(q.fill() == 0);
  CHECK_THROWS_AS(q.restore(3, 1), std::invalid_argument);
  CHECK_THROWS_AS(q.restore(0, 4), std::invalid_argument);
}

TEST_CASE("distill targets are distributions and reduce to one-hot at alpha 0") {
  std::mt19937_64 rng(23);
  int bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::int64_t b = std::uniform_int_distribution<std::int64_t>(1, 8)(rng);
    const std::int64_t l = b + std::uniform_int_distribution<std::int64_t>(0, 24)(rng);
    double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (trial % 5 == 0) alpha = 0.0;
    const double tau = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
    torch::manual_seed(static_cast<std::uint64_t>(trial));
    const auto sim = torch::rand({b, l}) * 2.0 - 1.0;
    const auto t = distill_targets(sim, alpha, tau);
    if ((t < 0).any().item<bool>()) ++bad;
    if (((t.sum(1) - 1.0).abs() > 1e-6).any().item<bool>()) ++bad;
    if (alpha == 0.0) {
      for (std::int64_t i = 0; i < b; ++i) {
        for (std::int64_t j = 0; j < l; ++j) {
          if (t[i][j].item<double>() != (i == j ? 1.0 : 0.0)) ++bad;
        }
      }
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("alignment loss equals a scalar cross entropy") {
  torch::manual_seed(5);
  const auto sim = torch::rand({3, 5}, torch::kFloat64) * 2 - 1;
  const auto tgt = distill_targets(torch::rand({3, 5}, torch::kFloat64), 0.4, 0.07);
  const double tau = 0.07;
  double total = 0.0;
  for (std::int64_t i = 0; i < 3; ++i) {
    double lse_max = -1e300;
    for (std::int64_t j = 0; j < 5; ++j) lse_max = std::max(lse_max, sim[i][j].item<double>() / tau);
    double z = 0.0;
    for (std::int64_t j = 0; j < 5; ++j) z += std::exp(sim[i][j].item<double>() / tau - lse_max);
    for (std::int64_t j = 0; j < 5; ++j) {
      const double logp = sim[i][j].item<double>() / tau - lse_max - std::log(z);
      total -= tgt[i][j].item<double>() * logp;
    }
  }
  CHECK(alignment_loss(sim, tgt, tau).item<double>() == doctest::Approx(total / 3.0).epsilon(1e-12));
}

TEST_CASE("alignment loss passes a finite-difference check") {
  torch::manual_seed(6);
  auto g = torch::randn({3, 6}, torch::kFloat64).requires_grad_(true);
  auto bank = torch::randn({7, 6}, torch::kFloat64);
  auto g_m = torch::randn({3, 6}, torch::kFloat64);
  const auto targets = distill_targets(similarity_matrix(g_m, bank), 0.4, 0.07);
  auto f = [&] { return alignment_loss(similarity_matrix(g, bank), targets, 0.07); };
  const auto r = fixtures::gradcheck(f, {g}, 18);
  CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("full alignment module passes a finite-difference check") {
  torch::manual_seed(7);
  AlignConfig cfg;
  cfg.queue_len = 5;
  DistillAlign da(6, cfg);
  da->to(torch::kFloat64);
  da->push(torch::randn({4, 6}, torch::kFloat64), torch::randn({4, 6}, torch::kFloat64));
  auto g_v = torch::randn({3, 6}, torch::kFloat64).requires_grad_(true);
  auto g_t = torch::randn({3, 6}, torch::kFloat64).requires_grad_(true);
  const auto g_mv = torch::randn({3, 6}, torch::kFloat64);
  const auto g_mt = torch::randn({3, 6}, torch::kFloat64);
  auto f = [&] { return da->forward(g_v, g_t, g_mv, g_mt).total; };
  std::vector<torch::Tensor> inputs{g_v, g_t};
  for (auto& p : da->parameters()) inputs.push_back(p);
  const auto r = fixtures::gradcheck(f, inputs, 8);
  CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("forward reads the queues without writing them") {
  torch::manual_seed(8);
  AlignConfig cfg;
  cfg.queue_len = 6;
  DistillAlign da(4, cfg);
  da->push(torch::randn({4, 4}), torch::randn({4, 4}));
  const auto before_v = da->video_queue().storage().clone();
  const auto before_ptr = da->video_queue().write_ptr();
  (void)da->forward(torch::randn({2, 4}), torch::randn({2, 4}), torch::randn({2, 4}), torch::randn({2, 4}));
  CHECK(torch::equal(before_v, da->video_queue().storage()));
  CHECK(before_ptr == da->video_queue().write_ptr());
  // Bank = batch followed by queue rows.
  CHECK(da->video_bank(torch::randn({2, 4})).size(0) == 6);
}

TEST_CASE("oversized batches keep their most recent rows and empty queues are inert") {
  AlignConfig cfg;
  cfg.queue_len = 2;
  DistillAlign da(2, cfg);
  auto rows = torch::tensor({{1.0f, 0.0f}, {0.0f, 1.0f}, {-1.0f, 0.0f}});
  da->push(rows, rows);
  CHECK(torch::equal(da->video_queue().contents(), rows.narrow(0, 1, 2)));
  cfg.queue_len = 0;
  DistillAlign empty(2, cfg);
  empty->push(rows, rows);
  CHECK(empty->video_queue().fill() == 0);
  CHECK(empty->text_bank(rows).size(0) == 3);
}

TEST_CASE("align config validation") {
  AlignConfig c;
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AlignConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
