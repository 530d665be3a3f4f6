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

#ifndef LD_DETR_METRICS_HPP_
#define LD_DETR_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ld_detr/data_model.hpp"

namespace ld_detr {

/// Recall@1 thresholds reported by default.
const std::vector<double>& recall_thresholds();
/// mAP thresholds 0.5:0.05:0.95.
const std::vector<double>& map_thresholds();

/// |a n b| / |a u b| for [s1,e1] and [s2,e2]. Throws when both are empty.
double interval_iou(double s1, double e1, double s2, double e2);
double interval_iou(const MomentSpan& a, const MomentSpan& b);

/// Prediction indices by confidence (descending), then earlier start, then
/// lower index.
std::vector<std::size_t> rank_predictions(std::span<const ScoredSpan> preds);

/// Largest IoU between `pred` and any ground-truth span (0 if none).
double best_iou(const MomentSpan& pred, std::span<const MomentSpan> gts);

/// True iff the top-ranked prediction reaches IoU >= theta with some GT.
bool recall_at_1(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts, double theta);

/// All-points interpolated AP for one query. Predictions are ranked, each is
/// matched greedily to the highest-IoU unmatched GT with IoU >= theta.
double average_precision(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts,
                         double theta);

/// IoU of the top-ranked prediction with its best-matching GT.
double top1_iou(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts);

struct HdResult {
  std::optional<double> ap;  // empty when the sample has no relevant clip
  bool hit_at_1 = false;
};

/// Binary relevance gt >= very_good_level over the valid clips; clips are
/// ranked by predicted saliency, ties by lower index. Empty mask means all
/// clips are valid.
HdResult hd_metrics(std::span<const double> pred, std::span<const double> gt,
                    std::span<const std::uint8_t> mask, double very_good_level);

struct MetricsConfig {
  double very_good_level = 4.0;
};

struct QueryRecord {
  std::string id;
  bool has_moments = false;
  double top1_iou = 0.0;
  std::map<double, bool> r1_at;
  std::map<double, double> ap_at;
  std::optional<double> hd_ap;
  bool hit_at_1 = false;
};

struct EvalReport {
  std::map<double, double> r1_at;
  std::map<double, double> map_at;
  double map_avg = 0.0;
  double miou = 0.0;
  double hd_map = 0.0;
  double hit_at_1 = 0.0;
  std::int64_t num_queries = 0;
  std::vector<QueryRecord> per_query;

  nlohmann::ordered_json to_json(bool include_per_query = true) const;
};

/// Joins predictions to ground truth by id, in ground-truth order. Moment
/// metrics average over queries with at least one GT moment; hd_map over
/// samples with a relevant clip; HIT@1 over all samples.
EvalReport evaluate_predictions(std::span<const QueryPrediction> preds,
                                std::span<const std::string> ids,
                                std::span<const Annotation> annotations,
                                const MetricsConfig& cfg = {});

/// Convenience overload reading every annotation of `dataset`.
EvalReport evaluate_predictions(std::span<const QueryPrediction> preds, const Dataset& dataset,
                                const MetricsConfig& cfg = {});

}  // namespace ld_detr

#endif  // LD_DETR_METRICS_HPP_
