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

#ifndef LD_DETR_MODEL_HPP_
#define LD_DETR_MODEL_HPP_

#include <vector>

#include <torch/torch.h>

#include "ld_detr/batch.hpp"
#include "ld_detr/convolutional_fuser.hpp"
#include "ld_detr/data_model.hpp"
#include "ld_detr/distill_align.hpp"
#include "ld_detr/loop_decoder.hpp"
#include "ld_detr/losses.hpp"
#include "ld_detr/prediction_heads.hpp"
#include "ld_detr/unimodal_encoders.hpp"

namespace ld_detr {

struct ModelOptions {
  std::int64_t video_dim = 64;
  std::int64_t text_dim = 64;
  std::int64_t dim = 256;
  std::int64_t heads = 8;
  std::int64_t ffn_dim = 1024;
  double dropout = 0.1;
  double input_dropout = 0.5;
  std::int64_t encoder_layers = 2;
  std::int64_t decoder_layers = 2;
  std::int64_t conv_blocks = 5;
  std::int64_t conv_kernel = 3;
  std::int64_t num_queries = 10;
  std::int64_t loops = 3;
  double momentum = 0.995;
  AttentionScale scale = AttentionScale::kSqrtDim;
  ConvPlacement placement = ConvPlacement::kBetweenEncoders;
  bool positional = true;
  AlignConfig align;

  FuserOptions fuser_options() const;
  DecoderOptions decoder_options() const;
};

struct ForwardOptions {
  bool align = true;      // compute the distill-align losses
  bool per_loop = false;  // apply the moment head to every loop output
};

struct ModelOutput {
  MomentPrediction moments;
  SaliencyPrediction saliency;
  AlignLosses align;                        // undefined tensors unless requested
  std::vector<MomentPrediction> per_loop;   // Q^1 .. Q^N when requested
  torch::Tensor video_latent;               // V', b x t x d
  torch::Tensor text_latent;                // T', b x n x d
  torch::Tensor memory;                     // R, b x t x d
  torch::Tensor momentum_video_global;      // b x d, detached
  torch::Tensor momentum_text_global;       // b x d, detached
};

class LdDetrImpl : public torch::nn::Module {
 public:
  explicit LdDetrImpl(const ModelOptions& opt);

  ModelOutput forward(const Batch& batch, const ForwardOptions& fwd = {});

  /// Shadow encoders <- EMA of the main encoders.
  void momentum_update();
  /// Pushes the momentum global features of `out` into the queues.
  void queue_push(const ModelOutput& out);

  /// Parameters that receive gradients; shadow copies are excluded.
  std::int64_t trainable_parameter_count() const;

  const ModelOptions& options() const { return opt_; }

  MomentumEncoder& video_encoder() { return video_encoder_; }
  MomentumEncoder& text_encoder() { return text_encoder_; }
  DistillAlign& distill_align() { return align_; }
  ConvolutionalFuser& fuser() { return fuser_; }
  LoopDecoder& decoder() { return decoder_; }
  MomentHead& moment_head() { return moment_head_; }
  SaliencyHead& saliency_head() { return saliency_head_; }

 private:
  ModelOptions opt_;
  MomentumEncoder video_encoder_{nullptr};
  MomentumEncoder text_encoder_{nullptr};
  DistillAlign align_{nullptr};
  ConvolutionalFuser fuser_{nullptr};
  LoopDecoder decoder_{nullptr};
  MomentHead moment_head_{nullptr};
  SaliencyHead saliency_head_{nullptr};
};
TORCH_MODULE(LdDetr);

/// Hungarian matches of the final predictions, one per sample.
std::vector<MatchResult> match_batch(const MomentPrediction& pred, const Batch& batch,
                                     const LossConfig& cfg);

/// L_mr + L_hd + L_align for one forward pass. Align terms are zero when
/// the output carries none.
LossBreakdown compute_losses(const ModelOutput& out, const Batch& batch, const LossConfig& cfg);

/// Interchange predictions for every sample of `batch`: q spans sorted by
/// confidence (sigmoid of the logit), saliency over the sample's clips.
std::vector<QueryPrediction> to_predictions(const ModelOutput& out, const Batch& batch);

}  // namespace ld_detr

#endif  // LD_DETR_MODEL_HPP_
