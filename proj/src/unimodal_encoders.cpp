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

#include "ld_detr/unimodal_encoders.hpp"

#include <stdexcept>

namespace ld_detr {

UnimodalEncoderImpl::UnimodalEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim,
                                         double dropout)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  fc1_ = register_module("fc1", torch::nn::Linear(input_dim, hidden_dim));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden_dim, hidden_dim));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden_dim})));
}

torch::Tensor UnimodalEncoderImpl::forward(const torch::Tensor& features, const torch::Tensor& mask) {
  if (features.dim() != 3 || features.size(2) != input_dim_) {
    throw std::invalid_argument("UnimodalEncoder: expected b x x x " + std::to_string(input_dim_) +
                                " input, got " + std::to_string(features.size(-1)) + " channels");
  }
  auto h = dropout_->forward(torch::relu(fc1_->forward(features)));
  h = norm_->forward(fc2_->forward(h));
  return h * mask.unsqueeze(-1).to(h.dtype());
}

torch::Tensor global_pool(const torch::Tensor& latent, const torch::Tensor& mask) {
  auto m = mask.to(latent.dtype());
  auto counts = m.sum(1, /*keepdim=*/true);  // b x 1
  if ((counts == 0).any().item<bool>()) {
    throw std::invalid_argument("global_pool: a row has no valid position");
  }
  return (latent * m.unsqueeze(-1)).sum(1) / counts;
}

MomentumEncoderImpl::MomentumEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim,
                                         double momentum, double dropout)
    : momentum_(momentum) {
  set_momentum(momentum);
  main_ = register_module("main", UnimodalEncoder(input_dim, hidden_dim, dropout));
  shadow_ = register_module("shadow", UnimodalEncoder(input_dim, hidden_dim, dropout));
  for (auto& p : shadow_->parameters()) p.set_requires_grad(false);
  init();
}

void MomentumEncoderImpl::set_momentum(double m) {
  if (!(m >= 0.0 && m < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  momentum_ = m;
}

torch::Tensor MomentumEncoderImpl::forward_shadow(const torch::Tensor& features,
                                                  const torch::Tensor& mask) {
  torch::NoGradGuard no_grad;
  const bool was_training = shadow_->is_training();
  shadow_->eval();
  auto out = shadow_->forward(features, mask);
  shadow_->train(was_training);
  return out;
}

void MomentumEncoderImpl::init() {
  torch::NoGradGuard no_grad;
  auto src = main_->parameters();
  auto dst = shadow_->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
}

void MomentumEncoderImpl::update() {
  torch::NoGradGuard no_grad;
  auto src = main_->parameters();
  auto dst = shadow_->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].mul_(momentum_).add_(src[i], 1.0 - momentum_);
  }
}

}  // namespace ld_detr
