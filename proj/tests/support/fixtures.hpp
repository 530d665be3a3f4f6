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

// Small models, toy data and a central finite-difference checker.

#ifndef LD_DETR_TESTS_FIXTURES_HPP_
#define LD_DETR_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ld_detr/batch.hpp"
#include "ld_detr/config.hpp"
#include "ld_detr/data_model.hpp"
#include "ld_detr/model.hpp"

namespace fixtures {

inline ld_detr::SynthConfig tiny_synth(std::int64_t samples = 4, std::uint64_t seed = 11) {
  ld_detr::SynthConfig s;
  s.num_samples = samples;
  s.min_clips = 6;
  s.max_clips = 10;
  s.min_tokens = 3;
  s.max_tokens = 5;
  s.video_dim = 8;
  s.text_dim = 6;
  s.pattern_bank_size = 4;
  s.seed = seed;
  return s;
}

inline ld_detr::ModelOptions tiny_model() {
  ld_detr::ModelOptions m;
  m.video_dim = 8;
  m.text_dim = 6;
  m.dim = 16;
  m.heads = 2;
  m.ffn_dim = 32;
  m.conv_blocks = 2;
  m.num_queries = 4;
  m.loops = 2;
  m.align.queue_len = 8;
  return m;
}

inline ld_detr::RunConfig tiny_run(std::uint64_t seed = 3) {
  ld_detr::RunConfig c;
  c.preset = "tiny";
  c.seed = seed;
  c.model = tiny_model();
  c.synth = tiny_synth(8);
  c.synth_val_samples = 4;
  c.batch_size = 4;
  c.epochs = 3;
  c.lr = 1e-3;
  c.eval_every = 0;
  return c;
}

/// Every element of `t` as doubles.
inline std::vector<double> values(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.detach().to(torch::kFloat64) - b.detach().to(torch::kFloat64)).abs().max().item<double>();
}

struct GradCheckResult {
  bool ok = true;
  std::int64_t checked = 0;
  double worst_ratio = 0.0;  // max |a - n| / (rtol * max(|a|, |n|, floor))
  std::string detail;
};

/// Central differences on up to `per_tensor` random coordinates of every
/// tensor in `inputs` (float64 leaves). Passes when
/// |analytic - numeric| <= rtol * max(|analytic|, |numeric|, floor).
inline GradCheckResult gradcheck(const std::function<torch::Tensor()>& f, std::vector<torch::Tensor> inputs,
                                 std::int64_t per_tensor, double rtol = 1e-4, double eps = 1e-6,
                                 double floor = 1e-4, std::uint64_t seed = 5) {
  for (auto& p : inputs) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  f().backward();
  std::vector<torch::Tensor> analytic;
  for (auto& p : inputs) analytic.push_back(p.grad().defined() ? p.grad().clone() : torch::zeros_like(p));

  std::mt19937_64 rng(seed);
  GradCheckResult r;
  std::ostringstream detail;
  torch::NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto flat = inputs[k].view({-1});
    auto grad_flat = analytic[k].view({-1});
    const auto n = flat.numel();
    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), std::int64_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(std::min<std::int64_t>(n, per_tensor)));
    for (auto c : coords) {
      const double orig = flat[c].item<double>();
      flat[c].fill_(orig + eps);
      const double up = f().item<double>();
      flat[c].fill_(orig - eps);
      const double down = f().item<double>();
      flat[c].fill_(orig);
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad_flat[c].item<double>();
      const double scale = rtol * std::max({std::abs(a), std::abs(numeric), floor});
      const double ratio = std::abs(a - numeric) / scale;
      r.worst_ratio = std::max(r.worst_ratio, ratio);
      ++r.checked;
      if (ratio > 1.0) {
        r.ok = false;
        detail << "tensor " << k << " coord " << c << ": analytic " << a << " numeric " << numeric << "\n";
      }
    }
  }
  r.detail = detail.str();
  return r;
}

}  // namespace fixtures

#endif  // LD_DETR_TESTS_FIXTURES_HPP_
