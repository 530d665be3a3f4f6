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

#ifndef LD_DETR_PREDICTION_HEADS_HPP_
#define LD_DETR_PREDICTION_HEADS_HPP_

#include <span>
#include <vector>

#include <torch/torch.h>

namespace ld_detr {

/// log(x / (1 - x)) after clamping x to [eps, 1 - eps].
torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps = 1e-4);

struct MomentPrediction {
  torch::Tensor spans;   // b x q x 2, (center, width) in (0,1)
  torch::Tensor logits;  // b x q, foreground confidence logit
};

class MomentHeadImpl : public torch::nn::Module {
 public:
  explicit MomentHeadImpl(std::int64_t dim);

  /// confidence = mlp_a(x) + inverse_sigmoid(sigmoid(mlp_b(x))).
  MomentPrediction forward(const torch::Tensor& decoded);

 private:
  torch::nn::Sequential span_mlp_{nullptr};
  torch::nn::Sequential conf_a_{nullptr};
  torch::nn::Sequential conf_b_{nullptr};
};
TORCH_MODULE(MomentHead);

/// Clip indices (ascending) whose centers fall inside any of `spans`, on a
/// grid of num_clips clips.
std::vector<std::int64_t> clips_in_union(std::span<const std::pair<double, double>> spans,
                                         std::int64_t num_clips);

struct SaliencyPrediction {
  torch::Tensor scores;   // b x t, zero at masked clips
  torch::Tensor ranking;  // b x t, -inf at masked clips
  torch::Tensor summary;  // b x d, GRU final hidden state per sample
};

/// GRU over the fused features of the clips covered by the predicted
/// moments, then a clip-wise similarity modulating the memory.
class SaliencyHeadImpl : public torch::nn::Module {
 public:
  explicit SaliencyHeadImpl(std::int64_t dim);

  SaliencyPrediction forward(const torch::Tensor& memory, const torch::Tensor& video,
                             const MomentPrediction& moments,
                             const std::vector<std::int64_t>& num_clips,
                             const torch::Tensor& video_valid);

  /// Clips fed to the GRU for one sample: the union of spans whose
  /// foreground probability is at least 0.5 (top-1 if none), falling back
  /// to every valid clip when the union is empty.
  static std::vector<std::int64_t> selected_clips(const torch::Tensor& spans,
                                                  const torch::Tensor& logits,
                                                  std::int64_t num_clips);

 private:
  std::int64_t dim_;
  torch::nn::GRU gru_{nullptr};
  torch::nn::Linear modulation_{nullptr};
};
TORCH_MODULE(SaliencyHead);

}  // namespace ld_detr

#endif  // LD_DETR_PREDICTION_HEADS_HPP_
