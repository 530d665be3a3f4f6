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

#include "ld_detr/convolutional_fuser.hpp"
#include "support/fixtures.hpp"

using namespace ld_detr;

namespace {

FuserOptions small_fuser(std::int64_t conv_blocks = 2) {
  FuserOptions o;
  o.dim = 8;
  o.heads = 2;
  o.ffn_dim = 16;
  o.encoder_layers = 1;
  o.conv_blocks = conv_blocks;
  return o;
}

std::int64_t count_params(torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

torch::Tensor lengths_mask(std::vector<std::int64_t> lengths, std::int64_t t) {
  auto m = torch::zeros({static_cast<std::int64_t>(lengths.size()), t}, torch::kBool);
  for (std::size_t i = 0; i < lengths.size(); ++i) m[static_cast<std::int64_t>(i)].narrow(0, 0, lengths[i]).fill_(true);
  return m;
}

}  // namespace

TEST_CASE("masked batch norm uses only valid positions") {
  torch::manual_seed(1);
  MaskedBatchNorm bn(3);
  auto x = torch::randn({2, 5, 3}, torch::kFloat64);
  bn->to(torch::kFloat64);
  const auto valid = lengths_mask({3, 4}, 5);
  const auto y = bn->forward(x, valid);
  for (std::int64_t c = 0; c < 3; ++c) {
    std::vector<double> vals;
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t t = 0; t < 5; ++t) {
        if (valid[b][t].item<bool>()) vals.push_back(x[b][t][c].item<double>());
      }
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t t = 0; t < 5; ++t) {
        const double expect = valid[b][t].item<bool>() ? (x[b][t][c].item<double>() - mean) / std::sqrt(var + 1e-5) : 0.0;
        CHECK(y[b][t][c].item<double>() == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  // Running statistics moved toward the batch statistics.
  CHECK(bn->running_mean.abs().sum().item<double>() > 0.0);
}

TEST_CASE("conv block parameter count grows strictly with the block count") {
  std::int64_t prev = -1;
  for (std::int64_t n : {0, 1, 2, 5}) {
    ConvolutionalFuser f(small_fuser(n));
    const auto c = count_params(*f);
    CHECK(c > prev);
    prev = c;
  }
  CHECK_THROWS(ResidualConvBlock(8, 2));
}

TEST_CASE("fuser output ignores masked inputs for every conv placement") {
  for (auto placement : {ConvPlacement::kAfterV2T, ConvPlacement::kAfterT2V, ConvPlacement::kBetweenEncoders,
                         ConvPlacement::kAfterEncoder2}) {
    torch::manual_seed(2);
    auto opt = small_fuser();
    opt.placement = placement;
    ConvolutionalFuser f(opt);
    f->to(torch::kFloat64);
    for (bool training : {true, false}) {
      f->train(training);
      const auto vmask = lengths_mask({6, 4}, 7);
      const auto tmask = lengths_mask({3, 2}, 4);
      auto video = torch::randn({2, 7, 8}, torch::kFloat64) * vmask.unsqueeze(-1);
      auto text = torch::randn({2, 4, 8}, torch::kFloat64) * tmask.unsqueeze(-1);
      auto noisy_video = video + torch::randn_like(video) * 50.0 * (~vmask).unsqueeze(-1);
      auto noisy_text = text + torch::randn_like(text) * 50.0 * (~tmask).unsqueeze(-1);
      // Dropout must draw the same mask in both passes.
      torch::manual_seed(9);
      const auto a = f->forward(video, text, vmask, tmask);
      torch::manual_seed(9);
      const auto b = f->forward(noisy_video, noisy_text, vmask, tmask);
      CHECK(fixtures::max_abs_diff(a * vmask.unsqueeze(-1), b * vmask.unsqueeze(-1)) <= 1e-6);
      CHECK(a.sizes() == torch::IntArrayRef({2, 7, 8}));
    }
  }
}

TEST_CASE("conv placement names round trip") {
  for (auto p : {ConvPlacement::kAfterV2T, ConvPlacement::kAfterT2V, ConvPlacement::kBetweenEncoders,
                 ConvPlacement::kAfterEncoder2}) {
    CHECK(parse_conv_placement(to_string(p)) == p);
  }
  CHECK_THROWS(parse_conv_placement("sideways"));
}

TEST_CASE("V2T correlation normalizes over valid entries only") {
  torch::manual_seed(3);
  V2TExtractor v(8);
  v->to(torch::kFloat64);
  const auto vmask = lengths_mask({5}, 6);
  const auto tmask = lengths_mask({2}, 4);
  const auto c = v->correlate(torch::randn({1, 6, 8}, torch::kFloat64), torch::randn({1, 4, 8}, torch::kFloat64),
                              vmask, tmask);
  // Token softmax per valid clip sums to one over the valid tokens.
  for (std::int64_t t = 0; t < 5; ++t) {
    CHECK(c.by_token[0][t].narrow(0, 0, 2).sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.by_token[0][t].narrow(0, 2, 2).abs().sum().item<double>() == 0.0);
  }
  for (std::int64_t n = 0; n < 2; ++n) {
    CHECK(c.by_clip[0].select(1, n).narrow(0, 0, 5).sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
}
