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

#include "ld_detr/batch.hpp"

#include <algorithm>
#include <cstring>

namespace ld_detr {

namespace {

void copy_rows(const Matrix& m, torch::Tensor& dst, std::int64_t b) {
  // dst is contiguous b x rows_max x cols float32.
  float* base = dst.data_ptr<float>() + b * dst.size(1) * dst.size(2);
  std::memcpy(base, m.values.data(), m.values.size() * sizeof(float));
}

Batch build(std::span<const Sample* const> samples, std::int64_t min_clips, std::int64_t min_tokens) {
  if (samples.empty()) throw DataError("pad_batch: empty sample list");
  const auto b = static_cast<std::int64_t>(samples.size());
  std::int64_t t_max = std::max<std::int64_t>(min_clips, 0);
  std::int64_t n_max = std::max<std::int64_t>(min_tokens, 0);
  const std::int64_t d_v = samples.front()->features.video_feats.cols;
  const std::int64_t d_t = samples.front()->features.text_feats.cols;
  for (const Sample* s : samples) {
    t_max = std::max(t_max, s->features.num_clips());
    n_max = std::max(n_max, s->features.num_tokens());
    if (s->features.video_feats.cols != d_v || s->features.text_feats.cols != d_t) {
      throw DataError("pad_batch: sample '" + s->id + "' has mismatched feature dims");
    }
  }

  Batch batch;
  batch.video = torch::zeros({b, t_max, d_v}, torch::kFloat32);
  batch.text = torch::zeros({b, n_max, d_t}, torch::kFloat32);
  batch.video_mask = torch::zeros({b, t_max}, torch::kBool);
  batch.text_mask = torch::zeros({b, n_max}, torch::kBool);
  auto vmask = batch.video_mask.accessor<bool, 2>();
  auto tmask = batch.text_mask.accessor<bool, 2>();
  for (std::int64_t i = 0; i < b; ++i) {
    const Sample& s = *samples[static_cast<std::size_t>(i)];
    copy_rows(s.features.video_feats, batch.video, i);
    copy_rows(s.features.text_feats, batch.text, i);
    for (std::int64_t c = 0; c < s.features.num_clips(); ++c) {
      vmask[i][c] = s.features.video_mask[static_cast<std::size_t>(c)] != 0;
    }
    for (std::int64_t k = 0; k < s.features.num_tokens(); ++k) {
      tmask[i][k] = s.features.text_mask[static_cast<std::size_t>(k)] != 0;
    }
    batch.num_clips.push_back(s.features.num_clips());
    batch.annotations.push_back(s.annotation);
    batch.ids.push_back(s.id);
  }
  // Features under a false mask entry are zeroed too, not just padding.
  batch.video.mul_(batch.video_mask.unsqueeze(-1));
  batch.text.mul_(batch.text_mask.unsqueeze(-1));
  return batch;
}

}  // namespace

Batch Batch::to(torch::Dtype dtype) const {
  Batch out = *this;
  out.video = video.to(dtype);
  out.text = text.to(dtype);
  return out;
}

Batch pad_batch(std::span<const Sample> samples, std::int64_t min_clips, std::int64_t min_tokens) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return build(ptrs, min_clips, min_tokens);
}

Batch pad_batch(const Dataset& dataset, std::span<const std::size_t> indices, std::int64_t min_clips,
                std::int64_t min_tokens) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&dataset.sample(i));
  return build(ptrs, min_clips, min_tokens);
}

}  // namespace ld_detr
