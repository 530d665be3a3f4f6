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

#include "ld_detr/loop_decoder.hpp"

#include <stdexcept>

namespace ld_detr {

TransformerOptions DecoderOptions::layer_options() const {
  TransformerOptions o;
  o.dim = dim;
  o.heads = heads;
  o.ffn_dim = ffn_dim;
  o.dropout = dropout;
  o.layers = layers;
  o.scale = scale;
  o.positional = positional;
  return o;
}

LoopDecoderImpl::LoopDecoderImpl(const DecoderOptions& opt) : opt_(opt) {
  if (opt.num_queries < 1) throw std::invalid_argument("decoder needs at least one query");
  set_loops(opt.loops);
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < opt.layers; ++i) layers_->push_back(DecoderLayer(opt.layer_options()));
  final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opt.dim})));
  query_pos_ = register_parameter("query_pos", torch::randn({opt.num_queries, opt.dim}));
}

void LoopDecoderImpl::set_loops(std::int64_t loops) {
  if (loops < 1) throw std::invalid_argument("loop count must be >= 1");
  opt_.loops = loops;
}

torch::Tensor LoopDecoderImpl::decode_once(const torch::Tensor& query, const torch::Tensor& memory,
                                           const torch::Tensor& memory_valid) {
  torch::Tensor memory_pos;
  if (opt_.positional) {
    memory_pos = sinusoidal_positions(memory.size(1), opt_.dim, memory.scalar_type()).unsqueeze(0) *
                 memory_valid.unsqueeze(-1).to(memory.dtype());
  }
  auto qpos = query_pos_.unsqueeze(0).expand({query.size(0), -1, -1});
  auto h = query;
  for (const auto& layer : *layers_) {
    h = layer->as<DecoderLayer>()->forward(h, memory, memory_valid, qpos, memory_pos);
  }
  return final_norm_->forward(h);
}

std::vector<torch::Tensor> LoopDecoderImpl::loop_decode(const torch::Tensor& memory,
                                                        const torch::Tensor& memory_valid,
                                                        std::int64_t loops) {
  if (loops < 1) throw std::invalid_argument("loop_decode: loop count must be >= 1");
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(loops));
  auto q = torch::zeros({memory.size(0), opt_.num_queries, opt_.dim}, memory.options());
  for (std::int64_t i = 0; i < loops; ++i) {
    q = decode_once(q, memory, memory_valid);
    out.push_back(q);
  }
  return out;
}

}  // namespace ld_detr
