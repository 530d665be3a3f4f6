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

#ifndef LD_DETR_BATCH_HPP_
#define LD_DETR_BATCH_HPP_

#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ld_detr/data_model.hpp"

namespace ld_detr {

/// Samples padded to a common clip / token count. Padded rows are zero and
/// mask-false.
struct Batch {
  torch::Tensor video;       // b x t_max x d_v
  torch::Tensor video_mask;  // b x t_max, bool
  torch::Tensor text;        // b x n_max x d_t
  torch::Tensor text_mask;   // b x n_max, bool
  std::vector<std::int64_t> num_clips;
  std::vector<Annotation> annotations;
  std::vector<std::string> ids;

  std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
  std::int64_t max_clips() const { return video.size(1); }

  /// Same batch with float tensors cast to `dtype`.
  Batch to(torch::Dtype dtype) const;
};

/// Pads to the longest sample, or to min_clips / min_tokens if larger.
Batch pad_batch(std::span<const Sample> samples, std::int64_t min_clips = 0, std::int64_t min_tokens = 0);
Batch pad_batch(const Dataset& dataset, std::span<const std::size_t> indices, std::int64_t min_clips = 0,
                std::int64_t min_tokens = 0);

}  // namespace ld_detr

#endif  // LD_DETR_BATCH_HPP_
