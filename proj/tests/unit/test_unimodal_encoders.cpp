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

#include <torch/torch.h>

#include "ld_detr/unimodal_encoders.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ld_detr;

namespace {

torch::Tensor mask_from(std::vector<std::vector<int>> rows) {
  auto m = torch::zeros({static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(rows[0].size())}, torch::kBool);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m[i][j] = rows[i][j] != 0;
  }
  return m;
}

}  // namespace

TEST_CASE("unimodal encoder shape, masking and normalization") {
  torch::manual_seed(0);
  UnimodalEncoder enc(6, 8, 0.5);
  enc->eval();
  auto x = torch::randn({2, 4, 6});
  auto mask = mask_from({{1, 1, 1, 0}, {1, 0, 1, 1}});
  auto y = enc->forward(x, mask);
  CHECK(y.sizes() == torch::IntArrayRef({2, 4, 8}));
  CHECK(y[0][3].abs().sum().item<double>() == 0.0);
  CHECK(y[1][1].abs().sum().item<double>() == 0.0);
  // Valid rows are layer-normalized (unit gain, zero bias at init).
  CHECK(y[0][0].mean().abs().item<double>() < 1e-5);
  CHECK(std::abs(y[0][0].var(false).item<double>() - 1.0) < 1e-3);
  CHECK_THROWS_AS(enc->forward(torch::randn({2, 4, 5}), mask), std::invalid_argument);
}

TEST_CASE("dropout acts in training mode only") {
  torch::manual_seed(1);
  UnimodalEncoder enc(6, 8, 0.5);
  auto x = torch::randn({1, 3, 6});
  auto mask = torch::ones({1, 3}, torch::kBool);
  enc->eval();
  auto a = enc->forward(x, mask);
  auto b = enc->forward(x, mask);
  CHECK(torch::equal(a, b));
  enc->train();
  auto c = enc->forward(x, mask);
  CHECK_FALSE(torch::equal(a, c));
}

TEST_CASE("global_pool is the masked mean") {
  auto latent = torch::arange(12, torch::kFloat64).view({1, 4, 3});
  auto mask = mask_from({{1, 0, 1, 0}});
  auto g = global_pool(latent, mask);
  // Rows 0 and 2: (0,1,2) and (6,7,8).
  CHECK(fixtures::values(g) == std::vector<double>{3.0, 4.0, 5.0});
  CHECK_THROWS_AS(global_pool(latent, mask_from({{0, 0, 0, 0}})), std::invalid_argument);
}

TEST_CASE("momentum encoder twin setup") {
  torch::manual_seed(2);
  MomentumEncoder enc(5, 4, 0.9, 0.5);
  auto main = enc->main()->parameters();
  auto shadow = enc->shadow()->parameters();
  REQUIRE(main.size() == shadow.size());
  for (std::size_t i = 0; i < main.size(); ++i) {
    CHECK(torch::equal(main[i], shadow[i]));
    CHECK(main[i].requires_grad());
    CHECK_FALSE(shadow[i].requires_grad());
  }
  CHECK_THROWS_AS(enc->set_momentum(1.0), std::invalid_argument);
  CHECK_THROWS_AS(enc->set_momentum(-0.1), std::invalid_argument);
  CHECK_NOTHROW(enc->set_momentum(0.0));
}

TEST_CASE("momentum update matches the closed form with a frozen main encoder") {
  for (double m : {0.0, 0.5, 0.995}) {
    torch::manual_seed(3);
    MomentumEncoder enc(5, 4, m, 0.5);
    enc->to(torch::kFloat64);
    // Start the shadow away from the main weights.
    {
      torch::NoGradGuard g;
      for (auto& p : enc->shadow()->parameters()) p.copy_(torch::randn_like(p));
    }
    const auto theta0 = enc->shadow()->parameters();
    std::vector<std::vector<double>> start;
    for (const auto& p : theta0) start.push_back(fixtures::values(p));
    std::vector<std::vector<double>> target;
    for (const auto& p : enc->main()->parameters()) target.push_back(fixtures::values(p));
    for (int k = 1; k <= 50; ++k) {
      enc->update();
      if (k % 10 != 0 && k > 3) continue;
      auto now = enc->shadow()->parameters();
      double worst = 0.0;
      for (std::size_t i = 0; i < now.size(); ++i) {
        const auto v = fixtures::values(now[i]);
        for (std::size_t j = 0; j < v.size(); ++j) {
          worst = std::max(worst, std::abs(v[j] - oracle::ema_closed_form(start[i][j], target[i][j], m, k)));
        }
      }
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("shadow forward ignores dropout and builds no graph") {
  torch::manual_seed(4);
  MomentumEncoder enc(5, 4, 0.9, 0.5);
  enc->train();
  auto x = torch::randn({2, 3, 5});
  auto mask = torch::ones({2, 3}, torch::kBool);
  auto a = enc->forward_shadow(x, mask);
  auto b = enc->forward_shadow(x, mask);
  CHECK(torch::equal(a, b));
  CHECK_FALSE(a.requires_grad());
  CHECK(enc->shadow()->is_training());
}
