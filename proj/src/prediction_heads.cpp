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

#include "ld_detr/prediction_heads.hpp"

#include <algorithm>
#include <limits>

namespace ld_detr {

namespace nn = torch::nn;

torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps) {
  auto c = x.clamp(eps, 1.0 - eps);
  return torch::log(c / (1.0 - c));
}

MomentHeadImpl::MomentHeadImpl(std::int64_t dim) {
  span_mlp_ = register_module("span_mlp",
                              nn::Sequential(nn::Linear(dim, dim), nn::ReLU(), nn::Linear(dim, dim),
                                             nn::ReLU(), nn::Linear(dim, 2)));
  conf_a_ = register_module("conf_a", nn::Sequential(nn::Linear(dim, dim), nn::ReLU(), nn::Linear(dim, 1)));
  conf_b_ = register_module("conf_b", nn::Sequential(nn::Linear(dim, dim), nn::ReLU(), nn::Linear(dim, 1)));
}

MomentPrediction MomentHeadImpl::forward(const torch::Tensor& decoded) {
  MomentPrediction out;
  out.spans = torch::sigmoid(span_mlp_->forward(decoded));
  out.logits = conf_a_->forward(decoded).squeeze(-1) +
               inverse_sigmoid(torch::sigmoid(conf_b_->forward(decoded).squeeze(-1)));
  return out;
}

std::vector<std::int64_t> clips_in_union(std::span<const std::pair<double, double>> spans,
                                         std::int64_t num_clips) {
  std::vector<std::int64_t> clips;
  for (std::int64_t c = 0; c < num_clips; ++c) {
    const double center = (static_cast<double>(c) + 0.5) / static_cast<double>(num_clips);
    const bool inside = std::any_of(spans.begin(), spans.end(), [&](const auto& s) {
      return center >= s.first && center <= s.second;
    });
    if (inside) clips.push_back(c);
  }
  return clips;
}

SaliencyHeadImpl::SaliencyHeadImpl(std::int64_t dim) : dim_(dim) {
  gru_ = register_module("gru", nn::GRU(nn::GRUOptions(dim, dim).num_layers(1).batch_first(true)));
  modulation_ = register_module("modulation", nn::Linear(dim, dim));
}

std::vector<std::int64_t> SaliencyHeadImpl::selected_clips(const torch::Tensor& spans,
                                                           const torch::Tensor& logits,
                                                           std::int64_t num_clips) {
  auto s = spans.detach().to(torch::kFloat64).contiguous();
  auto l = logits.detach().to(torch::kFloat64).contiguous();
  auto sa = s.accessor<double, 2>();
  auto la = l.accessor<double, 1>();
  const auto q = s.size(0);
  std::vector<std::pair<double, double>> chosen;
  std::int64_t best = 0;
  for (std::int64_t k = 0; k < q; ++k) {
    if (la[k] > la[best]) best = k;
    if (la[k] >= 0.0) chosen.emplace_back(sa[k][0] - sa[k][1] / 2.0, sa[k][0] + sa[k][1] / 2.0);
  }
  if (chosen.empty()) chosen.emplace_back(sa[best][0] - sa[best][1] / 2.0, sa[best][0] + sa[best][1] / 2.0);
  auto clips = clips_in_union(chosen, num_clips);
  if (clips.empty()) {
    for (std::int64_t c = 0; c < num_clips; ++c) clips.push_back(c);
  }
  return clips;
}

SaliencyPrediction SaliencyHeadImpl::forward(const torch::Tensor& memory, const torch::Tensor& video,
                                             const MomentPrediction& moments,
                                             const std::vector<std::int64_t>& num_clips,
                                             const torch::Tensor& video_valid) {
  const auto b = memory.size(0);
  std::vector<torch::Tensor> summaries;
  summaries.reserve(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    const auto clips = selected_clips(moments.spans[i], moments.logits[i], num_clips[static_cast<std::size_t>(i)]);
    auto index = torch::tensor(clips, torch::kInt64);
    auto seq = memory[i].index_select(0, index).unsqueeze(0);  // 1 x t' x d
    auto h_n = std::get<1>(gru_->forward(seq));                // 1 x 1 x d
    summaries.push_back(h_n.reshape({dim_}));
  }
  SaliencyPrediction out;
  out.summary = torch::stack(summaries);                                      // b x d
  auto similarity = video.matmul(out.summary.unsqueeze(-1));                  // b x t x 1
  auto modulated = modulation_->forward(memory * similarity + memory);        // b x t x d
  auto scores = modulated.sum(-1) / static_cast<double>(dim_);
  out.scores = scores * video_valid.to(scores.dtype());
  out.ranking = scores.masked_fill(video_valid.logical_not(), -std::numeric_limits<double>::infinity());
  return out;
}

}  // namespace ld_detr
