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

#ifndef LD_DETR_DISTILL_ALIGN_HPP_
#define LD_DETR_DISTILL_ALIGN_HPP_

#include <torch/torch.h>

namespace ld_detr {

struct AlignConfig {
  double alpha = 0.4;  // distillation coefficient
  double tau = 0.07;   // softmax temperature on cosine similarities
  double lambda_align = 0.6;
  double lambda_sim = 0.6;
  std::int64_t queue_len = 65536;

  void validate() const;
};

/// Fixed-capacity ring buffer of L2-normalized momentum features. Entries
/// at or beyond fill() are never read.
class FeatureQueue {
 public:
  FeatureQueue(std::int64_t capacity, std::int64_t dim);

  /// Writes k <= capacity rows at the write pointer with wraparound.
  void push(const torch::Tensor& feats);

  /// Valid rows, oldest first: fill x dim. Detached.
  torch::Tensor contents() const;

  std::int64_t capacity() const { return capacity_; }
  std::int64_t dim() const { return storage_.size(1); }
  std::int64_t fill() const { return fill_; }
  std::int64_t write_ptr() const { return write_ptr_; }

  torch::Tensor& storage() { return storage_; }
  const torch::Tensor& storage() const { return storage_; }

  /// Restores pointer state, e.g. from a checkpoint.
  void restore(std::int64_t write_ptr, std::int64_t fill);

 private:
  std::int64_t capacity_;
  std::int64_t write_ptr_ = 0;
  std::int64_t fill_ = 0;
  torch::Tensor storage_;
};

/// Cosine similarity of every row of g (b x d) with every row of bank (L x d).
torch::Tensor similarity_matrix(const torch::Tensor& g, const torch::Tensor& bank);

/// alpha * rowsoftmax(sim_momentum / tau) + (1 - alpha) * onehot(i). The
/// positive for row i is column i. Computed without gradient.
torch::Tensor distill_targets(const torch::Tensor& sim_momentum, double alpha, double tau);

/// Mean over rows of -sum_j target_ij * log softmax(sim / tau)_ij.
torch::Tensor alignment_loss(const torch::Tensor& sim, const torch::Tensor& targets, double tau);

/// -mean_i cos(g_i, predictor(positives_i)); positives are detached.
torch::Tensor similar_loss(const torch::Tensor& g, const torch::Tensor& positives,
                           torch::nn::Linear& predictor);

struct AlignLosses {
  torch::Tensor v2t;
  torch::Tensor t2v;
  torch::Tensor v2t_sim;
  torch::Tensor t2v_sim;
  torch::Tensor total;
};

class DistillAlignImpl : public torch::nn::Module {
 public:
  DistillAlignImpl(std::int64_t dim, AlignConfig config);

  /// g_v, g_t: trainable global features. g_mv, g_mt: momentum global
  /// features of the same batch. Reads the queues, never writes them.
  AlignLosses forward(const torch::Tensor& g_v, const torch::Tensor& g_t,
                      const torch::Tensor& g_mv, const torch::Tensor& g_mt);

  /// Pushes momentum features into both queues.
  void push(const torch::Tensor& g_mv, const torch::Tensor& g_mt);

  /// Current batch momentum features followed by the queue contents.
  torch::Tensor video_bank(const torch::Tensor& g_mv) const;
  torch::Tensor text_bank(const torch::Tensor& g_mt) const;

  /// Queue storage rides along as buffers; pointer state is added here.
  void save(torch::serialize::OutputArchive& archive) const override;
  void load(torch::serialize::InputArchive& archive) override;

  const AlignConfig& config() const { return config_; }
  void set_alpha(double alpha) { config_.alpha = alpha; }
  FeatureQueue& video_queue() { return video_queue_; }
  FeatureQueue& text_queue() { return text_queue_; }
  torch::nn::Linear& v2t_predictor() { return v2t_predictor_; }
  torch::nn::Linear& t2v_predictor() { return t2v_predictor_; }

 private:
  AlignConfig config_;
  FeatureQueue video_queue_;
  FeatureQueue text_queue_;
  torch::nn::Linear v2t_predictor_{nullptr};
  torch::nn::Linear t2v_predictor_{nullptr};
};
TORCH_MODULE(DistillAlign);

}  // namespace ld_detr

#endif  // LD_DETR_DISTILL_ALIGN_HPP_
