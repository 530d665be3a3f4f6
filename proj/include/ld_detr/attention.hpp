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

// Attention building blocks shared by the fuser and the decoder.

#ifndef LD_DETR_ATTENTION_HPP_
#define LD_DETR_ATTENTION_HPP_

#include <string>

#include <torch/torch.h>

namespace ld_detr {

/// Divisor applied to query-key scores.
enum class AttentionScale { kSqrtDim, kDim };

AttentionScale parse_attention_scale(const std::string& s);
std::string to_string(AttentionScale s);

/// Softmax along `dim` where positions with valid == false get zero mass.
/// `valid` must broadcast against `scores`. Every slice needs at least one
/// valid entry.
torch::Tensor masked_softmax(const torch::Tensor& scores, const torch::Tensor& valid, std::int64_t dim);

/// length x dim sinusoidal position table.
torch::Tensor sinusoidal_positions(std::int64_t length, std::int64_t dim,
                                   torch::Dtype dtype = torch::kFloat32);

struct AttentionOutput {
  torch::Tensor values;   // b x Lq x d
  torch::Tensor weights;  // b x heads x Lq x Lk
};

class MultiheadAttentionImpl : public torch::nn::Module {
 public:
  MultiheadAttentionImpl(std::int64_t dim, std::int64_t heads, double dropout,
                         AttentionScale scale = AttentionScale::kSqrtDim);

  /// key_valid: b x Lk bool.
  AttentionOutput attend(const torch::Tensor& query, const torch::Tensor& key,
                         const torch::Tensor& value, const torch::Tensor& key_valid);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                        const torch::Tensor& value, const torch::Tensor& key_valid) {
    return attend(query, key, value, key_valid).values;
  }

 private:
  std::int64_t dim_;
  std::int64_t heads_;
  AttentionScale scale_;
  torch::nn::Linear q_proj_{nullptr}, k_proj_{nullptr}, v_proj_{nullptr}, out_proj_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(MultiheadAttention);

class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(std::int64_t dim, std::int64_t hidden, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(FeedForward);

struct TransformerOptions {
  std::int64_t dim = 256;
  std::int64_t heads = 8;
  std::int64_t ffn_dim = 1024;
  double dropout = 0.1;
  std::int64_t layers = 2;
  AttentionScale scale = AttentionScale::kSqrtDim;
  bool positional = true;
};

/// Pre-norm self-attention layer. Positions are added to queries and keys.
class EncoderLayerImpl : public torch::nn::Module {
 public:
  explicit EncoderLayerImpl(const TransformerOptions& opt);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& valid, const torch::Tensor& pos);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  MultiheadAttention attn_{nullptr};
  FeedForward ffn_{nullptr};
  torch::nn::Dropout drop1_{nullptr}, drop2_{nullptr};
};
TORCH_MODULE(EncoderLayer);

/// Stack of encoder layers with a final LayerNorm. Output is zero at
/// mask-false positions.
class TransformerEncoderImpl : public torch::nn::Module {
 public:
  explicit TransformerEncoderImpl(const TransformerOptions& opt);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& valid);

 private:
  TransformerOptions opt_;
  torch::nn::ModuleList layers_;
  torch::nn::LayerNorm final_norm_{nullptr};
};
TORCH_MODULE(TransformerEncoder);

/// Pre-norm decoder layer: self-attention over queries, cross-attention into
/// memory, FFN.
class DecoderLayerImpl : public torch::nn::Module {
 public:
  explicit DecoderLayerImpl(const TransformerOptions& opt);
  torch::Tensor forward(const torch::Tensor& tgt, const torch::Tensor& memory,
                        const torch::Tensor& memory_valid, const torch::Tensor& query_pos,
                        const torch::Tensor& memory_pos);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
  MultiheadAttention self_attn_{nullptr}, cross_attn_{nullptr};
  FeedForward ffn_{nullptr};
  torch::nn::Dropout drop1_{nullptr}, drop2_{nullptr}, drop3_{nullptr};
};
TORCH_MODULE(DecoderLayer);

}  // namespace ld_detr

#endif  // LD_DETR_ATTENTION_HPP_
