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

#include "ld_detr/convolutional_fuser.hpp"

#include <stdexcept>

namespace ld_detr {

namespace {

torch::Tensor as_weights(const torch::Tensor& valid, const torch::Tensor& like) {
  return valid.unsqueeze(-1).to(like.dtype());
}

}  // namespace

ConvPlacement parse_conv_placement(const std::string& s) {
  if (s == "v2t_t2v") return ConvPlacement::kAfterV2T;
  if (s == "t2v_enc1") return ConvPlacement::kAfterT2V;
  if (s == "enc1_enc2") return ConvPlacement::kBetweenEncoders;
  if (s == "after_enc2") return ConvPlacement::kAfterEncoder2;
  throw std::invalid_argument("fuser_placement must be one of v2t_t2v, t2v_enc1, enc1_enc2, "
                              "after_enc2; got '" + s + "'");
}

std::string to_string(ConvPlacement p) {
  switch (p) {
    case ConvPlacement::kAfterV2T: return "v2t_t2v";
    case ConvPlacement::kAfterT2V: return "t2v_enc1";
    case ConvPlacement::kBetweenEncoders: return "enc1_enc2";
    case ConvPlacement::kAfterEncoder2: return "after_enc2";
  }
  return "enc1_enc2";
}

TransformerOptions FuserOptions::encoder_options() const {
  TransformerOptions o;
  o.dim = dim;
  o.heads = heads;
  o.ffn_dim = ffn_dim;
  o.dropout = dropout;
  o.layers = encoder_layers;
  o.scale = scale;
  o.positional = positional;
  return o;
}

// ---------------------------------------------------------------------------
// V2T extractor

V2TExtractorImpl::V2TExtractorImpl(std::int64_t dim) {
  clip_score_ = register_module("clip_score", torch::nn::Linear(dim, 1));
  token_score_ = register_module("token_score", torch::nn::Linear(dim, 1));
  bilinear_ = register_module("bilinear", torch::nn::Linear(dim, dim));
  cat_proj_ = register_module("cat_proj", torch::nn::Linear(4 * dim, dim));
  pool_score_ = register_module("pool_score", torch::nn::Linear(dim, 1));
  out_proj_ = register_module("out_proj", torch::nn::Linear(2 * dim, dim));
}

V2TCorrelation V2TExtractorImpl::correlate(const torch::Tensor& video, const torch::Tensor& text,
                                           const torch::Tensor& video_valid,
                                           const torch::Tensor& text_valid) {
  auto a1 = clip_score_->forward(video);                    // b x t x 1
  auto a2 = token_score_->forward(text).transpose(1, 2);    // b x 1 x n
  auto a3 = bilinear_->forward(video).matmul(text.transpose(1, 2));  // b x t x n
  V2TCorrelation c;
  c.scores = a1 + a2 + a3;
  c.by_token = masked_softmax(c.scores, text_valid.unsqueeze(1), 2);
  c.by_clip = masked_softmax(c.scores, video_valid.unsqueeze(2), 1);
  return c;
}

torch::Tensor V2TExtractorImpl::forward(const torch::Tensor& video, const torch::Tensor& text,
                                        const torch::Tensor& video_valid,
                                        const torch::Tensor& text_valid) {
  const auto c = correlate(video, text, video_valid, text_valid);
  auto text_per_clip = c.by_token.matmul(text);                                        // T_v
  auto video_per_clip = c.by_token.matmul(c.by_clip.transpose(1, 2)).matmul(video);    // V_t
  auto cat = torch::cat({video, text_per_clip, video * text_per_clip, video * video_per_clip}, -1);
  auto fused = cat_proj_->forward(cat);

  auto pool = masked_softmax(pool_score_->forward(text), text_valid.unsqueeze(2), 1);  // b x n x 1
  auto pooled_text = (text * pool).sum(1, /*keepdim=*/true).expand_as(fused);          // T_p

  auto out = out_proj_->forward(torch::cat({fused, pooled_text}, -1));
  return out * as_weights(video_valid, out);
}

// ---------------------------------------------------------------------------
// T2V encoder

T2VEncoderImpl::T2VEncoderImpl(std::int64_t dim, std::int64_t ffn_dim, double dropout,
                               AttentionScale scale) {
  attn_ = register_module("attn", MultiheadAttention(dim, 1, dropout, scale));
  ffn_ = register_module("ffn", FeedForward(dim, ffn_dim, dropout));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  drop1_ = register_module("drop1", torch::nn::Dropout(dropout));
  drop2_ = register_module("drop2", torch::nn::Dropout(dropout));
}

AttentionOutput T2VEncoderImpl::attend(const torch::Tensor& video, const torch::Tensor& text,
                                       const torch::Tensor& text_valid) {
  return attn_->attend(video, text, text, text_valid);
}

torch::Tensor T2VEncoderImpl::forward(const torch::Tensor& video, const torch::Tensor& text,
                                      const torch::Tensor& video_valid,
                                      const torch::Tensor& text_valid) {
  auto x = norm1_->forward(video + drop1_->forward(attend(video, text, text_valid).values));
  auto out = norm2_->forward(x + drop2_->forward(ffn_->forward(x)));
  return out * as_weights(video_valid, out);
}

// ---------------------------------------------------------------------------
// Conv blocks

MaskedBatchNormImpl::MaskedBatchNormImpl(std::int64_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
  running_mean = register_buffer("running_mean", torch::zeros({channels}));
  running_var = register_buffer("running_var", torch::ones({channels}));
}

torch::Tensor MaskedBatchNormImpl::forward(const torch::Tensor& x, const torch::Tensor& valid) {
  auto m = as_weights(valid, x);  // b x t x 1
  torch::Tensor mean, var;
  if (is_training()) {
    auto count = m.sum();
    mean = (x * m).sum({0, 1}) / count;
    var = ((x - mean).pow(2) * m).sum({0, 1}) / count;
    torch::NoGradGuard no_grad;
    const double n = count.item<double>();
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    running_mean.mul_(1.0 - momentum_).add_(mean.detach(), momentum_);
    running_var.mul_(1.0 - momentum_).add_(var.detach() * unbias, momentum_);
  } else {
    mean = running_mean;
    var = running_var;
  }
  auto y = (x - mean) / torch::sqrt(var + eps_) * weight + bias;
  return y * m;
}

ResidualConvBlockImpl::ResidualConvBlockImpl(std::int64_t dim, std::int64_t kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
  auto opts = torch::nn::Conv1dOptions(dim, dim, kernel).padding(kernel / 2).bias(false);
  conv1_ = register_module("conv1", torch::nn::Conv1d(opts));
  conv2_ = register_module("conv2", torch::nn::Conv1d(opts));
  bn1_ = register_module("bn1", MaskedBatchNorm(dim));
  bn2_ = register_module("bn2", MaskedBatchNorm(dim));
}

torch::Tensor ResidualConvBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& valid) {
  auto m = as_weights(valid, x);
  // Conv1d wants b x d x t. Inputs are zero outside the mask, so the padded
  // tail acts exactly like the zero same-padding of a shorter sequence.
  auto conv = [](torch::nn::Conv1d& c, const torch::Tensor& h) {
    return c->forward(h.transpose(1, 2)).transpose(1, 2);
  };
  auto h = torch::relu(bn1_->forward(conv(conv1_, x * m), valid)) * m;
  h = bn2_->forward(conv(conv2_, h), valid);
  return torch::relu(x + h) * m;
}

ConvBlocksImpl::ConvBlocksImpl(std::int64_t dim, std::int64_t count, std::int64_t kernel) {
  if (count < 0) throw std::invalid_argument("conv block count must be >= 0");
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < count; ++i) blocks_->push_back(ResidualConvBlock(dim, kernel));
}

torch::Tensor ConvBlocksImpl::forward(const torch::Tensor& x, const torch::Tensor& valid) {
  auto h = x;
  for (const auto& block : *blocks_) h = block->as<ResidualConvBlock>()->forward(h, valid);
  return h;
}

// ---------------------------------------------------------------------------

ConvolutionalFuserImpl::ConvolutionalFuserImpl(const FuserOptions& opt) : opt_(opt) {
  v2t_ = register_module("v2t", V2TExtractor(opt.dim));
  t2v_ = register_module("t2v", T2VEncoder(opt.dim, opt.ffn_dim, opt.dropout, opt.scale));
  encoder1_ = register_module("encoder1", TransformerEncoder(opt.encoder_options()));
  conv_ = register_module("conv_blocks", ConvBlocks(opt.dim, opt.conv_blocks, opt.conv_kernel));
  encoder2_ = register_module("encoder2", TransformerEncoder(opt.encoder_options()));
}

torch::Tensor ConvolutionalFuserImpl::forward(const torch::Tensor& video, const torch::Tensor& text,
                                              const torch::Tensor& video_valid,
                                              const torch::Tensor& text_valid) {
  auto maybe_conv = [&](ConvPlacement here, torch::Tensor h) {
    return opt_.placement == here ? conv_->forward(h, video_valid) : h;
  };
  auto h = v2t_->forward(video, text, video_valid, text_valid);
  h = maybe_conv(ConvPlacement::kAfterV2T, h);
  h = t2v_->forward(h, text, video_valid, text_valid);
  h = maybe_conv(ConvPlacement::kAfterT2V, h);
  h = encoder1_->forward(h, video_valid);
  h = maybe_conv(ConvPlacement::kBetweenEncoders, h);
  h = encoder2_->forward(h, video_valid);
  h = maybe_conv(ConvPlacement::kAfterEncoder2, h);
  return h;
}

}  // namespace ld_detr
