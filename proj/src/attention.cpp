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

#include "ld_detr/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ld_detr {

AttentionScale parse_attention_scale(const std::string& s) {
  if (s == "sqrt") return AttentionScale::kSqrtDim;
  if (s == "linear") return AttentionScale::kDim;
  throw std::invalid_argument("attn_scale must be 'sqrt' or 'linear', got '" + s + "'");
}

std::string to_string(AttentionScale s) {
  return s == AttentionScale::kSqrtDim ? "sqrt" : "linear";
}

torch::Tensor masked_softmax(const torch::Tensor& scores, const torch::Tensor& valid, std::int64_t dim) {
  auto v = valid.expand_as(scores);
  if ((v.sum(dim) == 0).any().item<bool>()) {
    throw std::invalid_argument("masked_softmax: a slice has no valid entry");
  }
  auto filled = scores.masked_fill(v.logical_not(), -std::numeric_limits<double>::infinity());
  return torch::softmax(filled, dim);
}

torch::Tensor sinusoidal_positions(std::int64_t length, std::int64_t dim, torch::Dtype dtype) {
  auto pos = torch::arange(length, torch::kFloat64).unsqueeze(1);
  auto i = torch::arange(0, dim, 2, torch::kFloat64);
  auto freq = torch::exp(-std::log(10000.0) * i / static_cast<double>(dim));
  auto table = torch::zeros({length, dim}, torch::kFloat64);
  auto angles = pos * freq.unsqueeze(0);
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, torch::indexing::None, 2)},
                   torch::sin(angles));
  const auto n_cos = dim / 2;
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(1, torch::indexing::None, 2)},
                   torch::cos(angles.narrow(1, 0, n_cos)));
  return table.to(dtype);
}

// ---------------------------------------------------------------------------

MultiheadAttentionImpl::MultiheadAttentionImpl(std::int64_t dim, std::int64_t heads, double dropout,
                                               AttentionScale scale)
    : dim_(dim), heads_(heads), scale_(scale) {
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("attention: dim must be divisible by the head count");
  }
  q_proj_ = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj_ = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj_ = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj_ = register_module("out_proj", torch::nn::Linear(dim, dim));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

AttentionOutput MultiheadAttentionImpl::attend(const torch::Tensor& query, const torch::Tensor& key,
                                               const torch::Tensor& value,
                                               const torch::Tensor& key_valid) {
  const auto b = query.size(0);
  const auto lq = query.size(1);
  const auto lk = key.size(1);
  const auto hd = dim_ / heads_;
  auto split = [&](const torch::Tensor& x, std::int64_t len) {
    return x.view({b, len, heads_, hd}).transpose(1, 2);  // b x h x L x hd
  };
  auto q = split(q_proj_->forward(query), lq);
  auto k = split(k_proj_->forward(key), lk);
  auto v = split(v_proj_->forward(value), lk);
  const double divisor = scale_ == AttentionScale::kSqrtDim ? std::sqrt(static_cast<double>(hd))
                                                            : static_cast<double>(hd);
  auto scores = q.matmul(k.transpose(-2, -1)) / divisor;
  auto weights = masked_softmax(scores, key_valid.view({b, 1, 1, lk}), -1);
  auto mixed = dropout_->forward(weights).matmul(v);  // b x h x Lq x hd
  mixed = mixed.transpose(1, 2).contiguous().view({b, lq, dim_});
  return {out_proj_->forward(mixed), weights};
}

FeedForwardImpl::FeedForwardImpl(std::int64_t dim, std::int64_t hidden, double dropout) {
  fc1_ = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, dim));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
  return fc2_->forward(dropout_->forward(torch::relu(fc1_->forward(x))));
}

// ---------------------------------------------------------------------------

EncoderLayerImpl::EncoderLayerImpl(const TransformerOptions& opt) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  attn_ = register_module("attn", MultiheadAttention(opt.dim, opt.heads, opt.dropout, opt.scale));
  ffn_ = register_module("ffn", FeedForward(opt.dim, opt.ffn_dim, opt.dropout));
  drop1_ = register_module("drop1", torch::nn::Dropout(opt.dropout));
  drop2_ = register_module("drop2", torch::nn::Dropout(opt.dropout));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& valid,
                                        const torch::Tensor& pos) {
  auto h = norm1_->forward(x);
  auto qk = pos.defined() ? h + pos : h;
  auto out = x + drop1_->forward(attn_->forward(qk, qk, h, valid));
  out = out + drop2_->forward(ffn_->forward(norm2_->forward(out)));
  return out * valid.unsqueeze(-1).to(out.dtype());
}

TransformerEncoderImpl::TransformerEncoderImpl(const TransformerOptions& opt) : opt_(opt) {
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < opt.layers; ++i) layers_->push_back(EncoderLayer(opt));
  final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
}

torch::Tensor TransformerEncoderImpl::forward(const torch::Tensor& x, const torch::Tensor& valid) {
  torch::Tensor pos;
  if (opt_.positional) {
    pos = sinusoidal_positions(x.size(1), opt_.dim, x.scalar_type()).unsqueeze(0) *
          valid.unsqueeze(-1).to(x.dtype());
  }
  auto h = x * valid.unsqueeze(-1).to(x.dtype());
  for (const auto& layer : *layers_) h = layer->as<EncoderLayer>()->forward(h, valid, pos);
  return final_norm_->forward(h) * valid.unsqueeze(-1).to(x.dtype());
}

// ---------------------------------------------------------------------------

DecoderLayerImpl::DecoderLayerImpl(const TransformerOptions& opt) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  norm3_ = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  self_attn_ = register_module("self_attn", MultiheadAttention(opt.dim, opt.heads, opt.dropout, opt.scale));
  cross_attn_ = register_module("cross_attn", MultiheadAttention(opt.dim, opt.heads, opt.dropout, opt.scale));
  ffn_ = register_module("ffn", FeedForward(opt.dim, opt.ffn_dim, opt.dropout));
  drop1_ = register_module("drop1", torch::nn::Dropout(opt.dropout));
  drop2_ = register_module("drop2", torch::nn::Dropout(opt.dropout));
  drop3_ = register_module("drop3", torch::nn::Dropout(opt.dropout));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& tgt, const torch::Tensor& memory,
                                        const torch::Tensor& memory_valid,
                                        const torch::Tensor& query_pos,
                                        const torch::Tensor& memory_pos) {
  const auto b = tgt.size(0);
  const auto q = tgt.size(1);
  auto all_queries = torch::ones({b, q}, torch::TensorOptions().dtype(torch::kBool));

  auto h = norm1_->forward(tgt);
  auto qk = h + query_pos;
  auto out = tgt + drop1_->forward(self_attn_->forward(qk, qk, h, all_queries));

  h = norm2_->forward(out);
  auto keys = memory_pos.defined() ? memory + memory_pos : memory;
  out = out + drop2_->forward(cross_attn_->forward(h + query_pos, keys, memory, memory_valid));

  out = out + drop3_->forward(ffn_->forward(norm3_->forward(out)));
  return out;
}

}  // namespace ld_detr
