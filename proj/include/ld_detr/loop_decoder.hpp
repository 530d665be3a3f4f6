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

#ifndef LD_DETR_LOOP_DECODER_HPP_
#define LD_DETR_LOOP_DECODER_HPP_

#include <vector>

#include <torch/torch.h>

#include "ld_detr/attention.hpp"

namespace ld_detr {

struct DecoderOptions {
  std::int64_t dim = 256;
  std::int64_t heads = 8;
  std::int64_t ffn_dim = 1024;
  double dropout = 0.1;
  std::int64_t layers = 2;       // decoder layers inside one application
  std::int64_t num_queries = 10;
  std::int64_t loops = 3;
  AttentionScale scale = AttentionScale::kSqrtDim;
  bool positional = true;

  TransformerOptions layer_options() const;
};

/// One weight-shared transformer decoder applied repeatedly: Q^0 = 0,
/// Q^i = decode_once(Q^{i-1}, memory). The number of loops does not change
/// the parameter set.
class LoopDecoderImpl : public torch::nn::Module {
 public:
  explicit LoopDecoderImpl(const DecoderOptions& opt);

  /// query: b x q x d, memory: b x t x d, memory_valid: b x t.
  torch::Tensor decode_once(const torch::Tensor& query, const torch::Tensor& memory,
                            const torch::Tensor& memory_valid);

  /// Q^1 .. Q^loops. Throws if loops < 1.
  std::vector<torch::Tensor> loop_decode(const torch::Tensor& memory,
                                         const torch::Tensor& memory_valid, std::int64_t loops);

  /// Q^N with N = options().loops.
  torch::Tensor forward(const torch::Tensor& memory, const torch::Tensor& memory_valid) {
    return loop_decode(memory, memory_valid, opt_.loops).back();
  }

  const DecoderOptions& options() const { return opt_; }
  void set_loops(std::int64_t loops);

 private:
  DecoderOptions opt_;
  torch::nn::ModuleList layers_;
  torch::nn::LayerNorm final_norm_{nullptr};
  torch::Tensor query_pos_;  // q x d, learnable
};
TORCH_MODULE(LoopDecoder);

}  // namespace ld_detr

#endif  // LD_DETR_LOOP_DECODER_HPP_
