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

#ifndef LD_DETR_LOSSES_HPP_
#define LD_DETR_LOSSES_HPP_

#include <span>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "ld_detr/data_model.hpp"
#include "ld_detr/distill_align.hpp"
#include "ld_detr/prediction_heads.hpp"

namespace ld_detr {

struct LossConfig {
  double lambda_l1 = 10.0;
  double lambda_giou = 1.0;
  double lambda_ce = 4.0;
  double background_weight = 0.1;
  double lambda_margin = 1.0;
  double lambda_contrastive = 1.0;
  double margin = 0.2;
  double contrastive_tau = 0.5;
  std::int64_t margin_pairs = 2;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Generalized IoU on 1-D intervals.

/// IoU(a,b) - |hull \ (a u b)| / |hull|. Throws if the hull has zero length.
double span_giou(const MomentSpan& a, const MomentSpan& b);

/// Row-wise gIoU of two k x 2 (center, width) tensors -> k.
torch::Tensor span_giou(const torch::Tensor& a, const torch::Tensor& b);

// ---------------------------------------------------------------------------
// Set matching.

/// (query index, ground-truth index) pairs, sorted by query index.
struct MatchResult {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
};

/// Minimum-cost assignment on a rows x cols matrix (rows <= cols). Returns
/// the column assigned to each row.
std::vector<std::int64_t> solve_assignment(const std::vector<std::vector<double>>& cost);

/// lambda_l1 * |span diff|_1 + lambda_giou * (1 - gIoU) - fg_prob.
double match_cost(const MomentSpan& pred, double fg_prob, const MomentSpan& gt, const LossConfig& cfg);

MatchResult hungarian_match(std::span<const MomentSpan> preds, std::span<const double> fg_probs,
                            std::span<const MomentSpan> gts, const LossConfig& cfg);

/// spans: q x 2, logits: q.
MatchResult hungarian_match(const torch::Tensor& spans, const torch::Tensor& logits,
                            std::span<const MomentSpan> gts, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Moment retrieval loss.

struct MrTerms {
  torch::Tensor l1;
  torch::Tensor giou;  // mean of 1 - gIoU
  torch::Tensor ce;
  torch::Tensor total;
};

/// One sample: spans q x 2, logits q.
MrTerms mr_loss_sample(const torch::Tensor& spans, const torch::Tensor& logits,
                       std::span<const MomentSpan> gts, const MatchResult& match,
                       const LossConfig& cfg);

/// Span terms average over samples that have ground truth; the
/// classification term averages over all samples.
MrTerms mr_loss(const MomentPrediction& pred, const std::vector<Annotation>& annotations,
                const std::vector<MatchResult>& matches, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Highlight detection loss.

/// Up to max_pairs (high, low) clip pairs: highest vs lowest, second highest
/// vs second lowest, kept only when the saliency gap is at least one level.
std::vector<std::pair<std::int64_t, std::int64_t>> margin_pairs(std::span<const double> saliency,
                                                                std::int64_t max_pairs);

/// Integer saliency levels used as rank thresholds: every floor(level)
/// present except the lowest.
std::vector<double> rank_thresholds(std::span<const double> saliency);

struct HdTerms {
  torch::Tensor margin;
  torch::Tensor contrastive;
  torch::Tensor total;
};

/// One sample: scores has exactly saliency.size() entries.
HdTerms hd_loss_sample(const torch::Tensor& scores, std::span<const double> saliency,
                       const LossConfig& cfg);

/// scores: b x t_max. The margin term averages over every sampled pair in
/// the batch; the contrastive term over samples with at least one threshold.
HdTerms hd_loss(const torch::Tensor& scores, const std::vector<Annotation>& annotations,
                const std::vector<std::int64_t>& num_clips, const LossConfig& cfg);

// ---------------------------------------------------------------------------

struct LossBreakdown {
  MrTerms mr;
  HdTerms hd;
  AlignLosses align;
  torch::Tensor total;
};

/// L_mr + L_hd + L_align.
torch::Tensor total_loss(const MrTerms& mr, const HdTerms& hd, const AlignLosses& align);

}  // namespace ld_detr

#endif  // LD_DETR_LOSSES_HPP_
