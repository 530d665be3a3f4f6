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

#include "ld_detr/distill_align.hpp"

#include <stdexcept>

namespace ld_detr {

namespace {

constexpr double kMinNorm = 1e-12;

torch::Tensor checked_normalize(const torch::Tensor& x, const char* what) {
  auto norms = x.norm(2, -1, /*keepdim=*/true);
  if ((norms < kMinNorm).any().item<bool>()) {
    throw std::invalid_argument(std::string(what) + ": zero-norm row");
  }
  return x / norms;
}

}  // namespace

void AlignConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(lambda_align >= 0.0) || !(lambda_sim >= 0.0)) {
    throw std::invalid_argument("lambda_align and lambda_sim must be non-negative");
  }
  if (queue_len < 0) throw std::invalid_argument("queue_len must be >= 0");
}

// ---------------------------------------------------------------------------

FeatureQueue::FeatureQueue(std::int64_t capacity, std::int64_t dim)
    : capacity_(capacity), storage_(torch::zeros({capacity, dim})) {
  if (capacity < 0 || dim < 1) throw std::invalid_argument("FeatureQueue: bad shape");
}

void FeatureQueue::push(const torch::Tensor& feats) {
  const std::int64_t k = feats.size(0);
  if (k > capacity_) {
    throw std::invalid_argument("FeatureQueue::push: " + std::to_string(k) +
                                " rows exceed capacity " + std::to_string(capacity_));
  }
  if (k == 0) return;
  torch::NoGradGuard no_grad;
  auto rows = checked_normalize(feats.detach().to(storage_.dtype()), "FeatureQueue::push");
  const std::int64_t head = std::min(k, capacity_ - write_ptr_);
  storage_.narrow(0, write_ptr_, head).copy_(rows.narrow(0, 0, head));
  if (head < k) storage_.narrow(0, 0, k - head).copy_(rows.narrow(0, head, k - head));
  write_ptr_ = (write_ptr_ + k) % capacity_;
  fill_ = std::min(fill_ + k, capacity_);
}

torch::Tensor FeatureQueue::contents() const {
  if (fill_ < capacity_) return storage_.narrow(0, 0, fill_).detach();
  // Full: the oldest row sits at the write pointer.
  return torch::cat({storage_.narrow(0, write_ptr_, capacity_ - write_ptr_),
                     storage_.narrow(0, 0, write_ptr_)})
      .detach();
}

void FeatureQueue::restore(std::int64_t write_ptr, std::int64_t fill) {
  if (fill < 0 || fill > capacity_ || write_ptr < 0 || (capacity_ > 0 && write_ptr >= capacity_)) {
    throw std::invalid_argument("FeatureQueue::restore: inconsistent pointer state");
  }
  write_ptr_ = write_ptr;
  fill_ = fill;
}

// ---------------------------------------------------------------------------

torch::Tensor similarity_matrix(const torch::Tensor& g, const torch::Tensor& bank) {
  auto gn = checked_normalize(g, "similarity_matrix");
  auto bn = checked_normalize(bank, "similarity_matrix");
  return gn.matmul(bn.transpose(0, 1));
}

torch::Tensor distill_targets(const torch::Tensor& sim_momentum, double alpha, double tau) {
  torch::NoGradGuard no_grad;
  const auto b = sim_momentum.size(0);
  const auto l = sim_momentum.size(1);
  auto soft = torch::softmax(sim_momentum.detach() / tau, 1);
  auto onehot = torch::eye(b, l, sim_momentum.options());
  return alpha * soft + (1.0 - alpha) * onehot;
}

torch::Tensor alignment_loss(const torch::Tensor& sim, const torch::Tensor& targets, double tau) {
  auto log_probs = torch::log_softmax(sim / tau, 1);
  return -(targets * log_probs).sum(1).mean();
}

torch::Tensor similar_loss(const torch::Tensor& g, const torch::Tensor& positives,
                           torch::nn::Linear& predictor) {
  auto projected = predictor->forward(positives.detach());
  auto gn = checked_normalize(g, "similar_loss");
  auto pn = checked_normalize(projected, "similar_loss");
  return -(gn * pn).sum(1).mean();
}

// ---------------------------------------------------------------------------

DistillAlignImpl::DistillAlignImpl(std::int64_t dim, AlignConfig config)
    : config_(config),
      video_queue_(config.queue_len, dim),
      text_queue_(config.queue_len, dim) {
  config_.validate();
  video_queue_.storage() = register_buffer("video_queue", video_queue_.storage());
  text_queue_.storage() = register_buffer("text_queue", text_queue_.storage());
  v2t_predictor_ = register_module("v2t_predictor", torch::nn::Linear(dim, dim));
  t2v_predictor_ = register_module("t2v_predictor", torch::nn::Linear(dim, dim));
}

torch::Tensor DistillAlignImpl::video_bank(const torch::Tensor& g_mv) const {
  auto batch = g_mv.detach();
  if (video_queue_.fill() == 0) return batch;
  return torch::cat({batch, video_queue_.contents().to(batch.dtype())});
}

torch::Tensor DistillAlignImpl::text_bank(const torch::Tensor& g_mt) const {
  auto batch = g_mt.detach();
  if (text_queue_.fill() == 0) return batch;
  return torch::cat({batch, text_queue_.contents().to(batch.dtype())});
}

AlignLosses DistillAlignImpl::forward(const torch::Tensor& g_v, const torch::Tensor& g_t,
                                      const torch::Tensor& g_mv, const torch::Tensor& g_mt) {
  const auto bank_t = text_bank(g_mt);
  const auto bank_v = video_bank(g_mv);

  AlignLosses out;
  {
    auto sim = similarity_matrix(g_v, bank_t);
    auto targets = distill_targets(similarity_matrix(g_mv.detach(), bank_t), config_.alpha, config_.tau);
    out.v2t = alignment_loss(sim, targets, config_.tau);
  }
  {
    auto sim = similarity_matrix(g_t, bank_v);
    auto targets = distill_targets(similarity_matrix(g_mt.detach(), bank_v), config_.alpha, config_.tau);
    out.t2v = alignment_loss(sim, targets, config_.tau);
  }
  out.v2t_sim = similar_loss(g_v, g_mt, v2t_predictor_);
  out.t2v_sim = similar_loss(g_t, g_mv, t2v_predictor_);
  out.total = config_.lambda_align * (out.v2t + out.t2v) / 2.0 +
              config_.lambda_sim * (out.v2t_sim + out.t2v_sim) / 2.0;
  return out;
}

void DistillAlignImpl::push(const torch::Tensor& g_mv, const torch::Tensor& g_mt) {
  if (config_.queue_len == 0) return;
  // A batch larger than the queue keeps only its most recent rows.
  auto tail = [&](const torch::Tensor& x) {
    const auto k = std::min<std::int64_t>(x.size(0), config_.queue_len);
    return x.narrow(0, x.size(0) - k, k);
  };
  video_queue_.push(tail(g_mv));
  text_queue_.push(tail(g_mt));
}

void DistillAlignImpl::save(torch::serialize::OutputArchive& archive) const {
  torch::nn::Module::save(archive);
  archive.write("queue_state", torch::tensor({video_queue_.write_ptr(), video_queue_.fill(),
                                              text_queue_.write_ptr(), text_queue_.fill()},
                                             torch::kInt64),
                /*is_buffer=*/true);
}

void DistillAlignImpl::load(torch::serialize::InputArchive& archive) {
  torch::nn::Module::load(archive);
  torch::Tensor state;
  archive.read("queue_state", state, /*is_buffer=*/true);
  auto s = state.accessor<std::int64_t, 1>();
  video_queue_.restore(s[0], s[1]);
  text_queue_.restore(s[2], s[3]);
}

}  // namespace ld_detr
