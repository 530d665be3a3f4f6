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

#ifndef LD_DETR_CONVOLUTIONAL_FUSER_HPP_
#define LD_DETR_CONVOLUTIONAL_FUSER_HPP_

#include <string>

#include <torch/torch.h>

#include "ld_detr/attention.hpp"

namespace ld_detr {

/// Where the residual conv stack sits inside the fuser pipeline
/// V2T -> T2V -> encoder 1 -> encoder 2.
enum class ConvPlacement {
  kAfterV2T,         // between V2T extractor and T2V encoder
  kAfterT2V,         // between T2V encoder and encoder 1
  kBetweenEncoders,  // between encoder 1 and encoder 2 (default)
  kAfterEncoder2,
};

ConvPlacement parse_conv_placement(const std::string& s);
std::string to_string(ConvPlacement p);

struct FuserOptions {
  std::int64_t dim = 256;
  std::int64_t heads = 8;
  std::int64_t ffn_dim = 1024;
  double dropout = 0.1;
  std::int64_t encoder_layers = 2;
  std::int64_t conv_blocks = 5;
  std::int64_t conv_kernel = 3;
  AttentionScale scale = AttentionScale::kSqrtDim;
  ConvPlacement placement = ConvPlacement::kBetweenEncoders;
  bool positional = true;

  TransformerOptions encoder_options() const;
};

/// Intermediate correlation tensors of the V2T extractor, b x t x n each.
struct V2TCorrelation {
  torch::Tensor scores;    // A = A1 + A2^T + A3
  torch::Tensor by_token;  // A_r, softmax over valid tokens
  torch::Tensor by_clip;   // A_c, softmax over valid clips
};

/// Text-to-video-feature refinement: correlation between clips and tokens,
/// token-attended text per clip, clip-to-clip mixing through the tokens,
/// a pooled query vector, and two projections back to d channels.
class V2TExtractorImpl : public torch::nn::Module {
 public:
  explicit V2TExtractorImpl(std::int64_t dim);

  V2TCorrelation correlate(const torch::Tensor& video, const torch::Tensor& text,
                           const torch::Tensor& video_valid, const torch::Tensor& text_valid);
  torch::Tensor forward(const torch::Tensor& video, const torch::Tensor& text,
                        const torch::Tensor& video_valid, const torch::Tensor& text_valid);

 private:
  torch::nn::Linear clip_score_{nullptr};   // d -> 1
  torch::nn::Linear token_score_{nullptr};  // d -> 1
  torch::nn::Linear bilinear_{nullptr};     // d -> d, paired with T'^T
  torch::nn::Linear cat_proj_{nullptr};     // 4d -> d
  torch::nn::Linear pool_score_{nullptr};   // d -> 1
  torch::nn::Linear out_proj_{nullptr};     // 2d -> d
};
TORCH_MODULE(V2TExtractor);

/// Single-head cross-attention from clips to tokens, then residual + norm,
/// FFN, residual + norm.
class T2VEncoderImpl : public torch::nn::Module {
 public:
  T2VEncoderImpl(std::int64_t dim, std::int64_t ffn_dim, double dropout, AttentionScale scale);

  AttentionOutput attend(const torch::Tensor& video, const torch::Tensor& text,
                         const torch::Tensor& text_valid);
  torch::Tensor forward(const torch::Tensor& video, const torch::Tensor& text,
                        const torch::Tensor& video_valid, const torch::Tensor& text_valid);

 private:
  MultiheadAttention attn_{nullptr};
  FeedForward ffn_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Dropout drop1_{nullptr}, drop2_{nullptr};
};
TORCH_MODULE(T2VEncoder);

/// Batch normalization over channels of b x t x d input where statistics
/// only count mask-true positions. Eval mode uses running statistics.
class MaskedBatchNormImpl : public torch::nn::Module {
 public:
  explicit MaskedBatchNormImpl(std::int64_t channels, double momentum = 0.1, double eps = 1e-5);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& valid);

  torch::Tensor weight, bias, running_mean, running_var;

 private:
  double momentum_;
  double eps_;
};
TORCH_MODULE(MaskedBatchNorm);

/// x -> relu(x + BN(Conv(relu(BN(Conv(x)))))) over the time axis.
class ResidualConvBlockImpl : public torch::nn::Module {
 public:
  ResidualConvBlockImpl(std::int64_t dim, std::int64_t kernel);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& valid);

  torch::nn::Conv1d& conv1() { return conv1_; }
  torch::nn::Conv1d& conv2() { return conv2_; }

 private:
  torch::nn::Conv1d conv1_{nullptr}, conv2_{nullptr};
  MaskedBatchNorm bn1_{nullptr}, bn2_{nullptr};
};
TORCH_MODULE(ResidualConvBlock);

class ConvBlocksImpl : public torch::nn::Module {
 public:
  ConvBlocksImpl(std::int64_t dim, std::int64_t count, std::int64_t kernel);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& valid);
  std::size_t size() const { return blocks_->size(); }
  ResidualConvBlock block(std::size_t i) { return blocks_->ptr<ResidualConvBlockImpl>(i); }

 private:
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(ConvBlocks);

/// V2T extractor, T2V encoder, encoder 1, conv blocks, encoder 2 -> R.
class ConvolutionalFuserImpl : public torch::nn::Module {
 public:
  explicit ConvolutionalFuserImpl(const FuserOptions& opt);

  torch::Tensor forward(const torch::Tensor& video, const torch::Tensor& text,
                        const torch::Tensor& video_valid, const torch::Tensor& text_valid);

  const FuserOptions& options() const { return opt_; }
  V2TExtractor& v2t() { return v2t_; }
  T2VEncoder& t2v() { return t2v_; }
  TransformerEncoder& encoder1() { return encoder1_; }
  TransformerEncoder& encoder2() { return encoder2_; }
  ConvBlocks& conv_blocks() { return conv_; }

 private:
  FuserOptions opt_;
  V2TExtractor v2t_{nullptr};
  T2VEncoder t2v_{nullptr};
  TransformerEncoder encoder1_{nullptr};
  ConvBlocks conv_{nullptr};
  TransformerEncoder encoder2_{nullptr};
};
TORCH_MODULE(ConvolutionalFuser);

}  // namespace ld_detr

#endif  // LD_DETR_CONVOLUTIONAL_FUSER_HPP_
