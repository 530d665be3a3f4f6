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

#ifndef LD_DETR_UNIMODAL_ENCODERS_HPP_
#define LD_DETR_UNIMODAL_ENCODERS_HPP_

#include <torch/torch.h>

namespace ld_detr {

/// Two-layer MLP into the shared latent space:
/// affine -> ReLU -> dropout -> affine -> LayerNorm. Masked rows are zeroed.
class UnimodalEncoderImpl : public torch::nn::Module {
 public:
  UnimodalEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim, double dropout = 0.5);

  /// features: b x x x d_x, mask: b x x (bool). Returns b x x x d.
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& mask);

  std::int64_t input_dim() const { return input_dim_; }
  std::int64_t hidden_dim() const { return hidden_dim_; }

 private:
  std::int64_t input_dim_;
  std::int64_t hidden_dim_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(UnimodalEncoder);

/// Mask-aware mean over axis 1: b x x x d -> b x d. Throws on a row with no
/// valid position.
torch::Tensor global_pool(const torch::Tensor& latent, const torch::Tensor& mask);

/// A trainable encoder paired with its EMA shadow. The shadow's parameters
/// have requires_grad = false and only change through init() / update().
class MomentumEncoderImpl : public torch::nn::Module {
 public:
  MomentumEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim, double momentum = 0.995,
                      double dropout = 0.5);

  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& mask) {
    return main_->forward(features, mask);
  }
  /// Shadow forward pass, always without gradient and without dropout.
  torch::Tensor forward_shadow(const torch::Tensor& features, const torch::Tensor& mask);

  /// shadow <- main, bitwise.
  void init();
  /// shadow <- m * shadow + (1 - m) * main, elementwise.
  void update();

  double momentum() const { return momentum_; }
  void set_momentum(double m);

  UnimodalEncoder& main() { return main_; }
  UnimodalEncoder& shadow() { return shadow_; }

 private:
  double momentum_;
  UnimodalEncoder main_{nullptr};
  UnimodalEncoder shadow_{nullptr};
};
TORCH_MODULE(MomentumEncoder);

}  // namespace ld_detr

#endif  // LD_DETR_UNIMODAL_ENCODERS_HPP_
