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

#include "ld_detr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace ld_detr {

const std::vector<double>& recall_thresholds() {
  static const std::vector<double> t{0.3, 0.5, 0.7};
  return t;
}

const std::vector<double>& map_thresholds() {
  static const std::vector<double> t{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  return t;
}

double interval_iou(double s1, double e1, double s2, double e2) {
  const double len1 = std::max(0.0, e1 - s1);
  const double len2 = std::max(0.0, e2 - s2);
  if (len1 <= 0.0 && len2 <= 0.0) throw std::invalid_argument("interval_iou: both intervals are empty");
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  return inter / (len1 + len2 - inter);
}

double interval_iou(const MomentSpan& a, const MomentSpan& b) {
  return interval_iou(a.start(), a.end(), b.start(), b.end());
}

std::vector<std::size_t> rank_predictions(std::span<const ScoredSpan> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    if (preds[a].span.start() != preds[b].span.start()) return preds[a].span.start() < preds[b].span.start();
    return a < b;
  });
  return order;
}

double best_iou(const MomentSpan& pred, std::span<const MomentSpan> gts) {
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, interval_iou(pred, g));
  return best;
}

namespace {

const ScoredSpan& top_prediction(std::span<const ScoredSpan> preds) {
  if (preds.empty()) throw std::invalid_argument("at least one prediction per query is required");
  return preds[rank_predictions(preds).front()];
}

}  // namespace

bool recall_at_1(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts, double theta) {
  return best_iou(top_prediction(preds).span, gts) >= theta;
}

double top1_iou(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts) {
  return best_iou(top_prediction(preds).span, gts);
}

double average_precision(std::span<const ScoredSpan> preds, std::span<const MomentSpan> gts,
                         double theta) {
  if (gts.empty() || preds.empty()) return 0.0;
  const auto order = rank_predictions(preds);
  std::vector<char> used(gts.size(), 0);
  std::vector<double> precision, recall;
  double tp = 0.0;
  double seen = 0.0;
  for (std::size_t idx : order) {
    std::int64_t match = -1;
    double match_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double iou = interval_iou(preds[idx].span, gts[g]);
      if (iou >= theta && iou > match_iou) {
        match = static_cast<std::int64_t>(g);
        match_iou = iou;
      }
    }
    seen += 1.0;
    if (match >= 0) {
      used[static_cast<std::size_t>(match)] = 1;
      tp += 1.0;
    }
    precision.push_back(tp / seen);
    recall.push_back(tp / static_cast<double>(gts.size()));
  }
  // Precision envelope, then integrate over the recall steps.
  std::vector<double> mprec{0.0};
  std::vector<double> mrec{0.0};
  mprec.insert(mprec.end(), precision.begin(), precision.end());
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mprec.push_back(0.0);
  mrec.push_back(1.0);
  for (std::size_t i = mprec.size() - 1; i-- > 0;) mprec[i] = std::max(mprec[i], mprec[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mprec[i];
  }
  return ap;
}

HdResult hd_metrics(std::span<const double> pred, std::span<const double> gt,
                    std::span<const std::uint8_t> mask, double very_good_level) {
  if (pred.size() != gt.size()) throw std::invalid_argument("hd_metrics: saliency lengths differ");
  if (!mask.empty() && mask.size() != gt.size()) throw std::invalid_argument("hd_metrics: mask length differs");
  std::vector<std::size_t> clips;
  for (std::size_t c = 0; c < gt.size(); ++c) {
    if (mask.empty() || mask[c] != 0) clips.push_back(c);
  }
  std::stable_sort(clips.begin(), clips.end(), [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
  HdResult r;
  std::int64_t relevant = 0;
  double precision_sum = 0.0;
  for (std::size_t rank = 0; rank < clips.size(); ++rank) {
    if (gt[clips[rank]] >= very_good_level) {
      ++relevant;
      precision_sum += static_cast<double>(relevant) / static_cast<double>(rank + 1);
    }
  }
  if (relevant == 0) return r;
  r.ap = precision_sum / static_cast<double>(relevant);
  r.hit_at_1 = gt[clips.front()] >= very_good_level;
  return r;
}

// ---------------------------------------------------------------------------

EvalReport evaluate_predictions(std::span<const QueryPrediction> preds,
                                std::span<const std::string> ids,
                                std::span<const Annotation> annotations,
                                const MetricsConfig& cfg) {
  if (ids.size() != annotations.size()) throw std::invalid_argument("evaluate: ids and annotations differ in size");
  std::unordered_map<std::string, const QueryPrediction*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate prediction id " + p.id);
  }
  EvalReport report;
  for (double t : recall_thresholds()) report.r1_at[t] = 0.0;
  for (double t : map_thresholds()) report.map_at[t] = 0.0;
  std::int64_t with_moments = 0;
  std::int64_t with_relevant = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = by_id.find(ids[i]);
    if (it == by_id.end()) throw DataError("no prediction for id " + ids[i]);
    const QueryPrediction& p = *it->second;
    const Annotation& a = annotations[i];
    QueryRecord rec;
    rec.id = ids[i];
    rec.has_moments = !a.gt_moments.empty();
    if (rec.has_moments) {
      ++with_moments;
      rec.top1_iou = top1_iou(p.pred_moments, a.gt_moments);
      report.miou += rec.top1_iou;
      for (double t : recall_thresholds()) {
        rec.r1_at[t] = rec.top1_iou >= t;
        report.r1_at[t] += rec.r1_at[t] ? 1.0 : 0.0;
      }
      for (double t : map_thresholds()) {
        rec.ap_at[t] = average_precision(p.pred_moments, a.gt_moments, t);
        report.map_at[t] += rec.ap_at[t];
      }
    }
    const auto hd = hd_metrics(p.pred_saliency, a.saliency, {}, cfg.very_good_level);
    rec.hd_ap = hd.ap;
    rec.hit_at_1 = hd.hit_at_1;
    if (hd.ap) {
      ++with_relevant;
      report.hd_map += *hd.ap;
    }
    report.hit_at_1 += hd.hit_at_1 ? 1.0 : 0.0;
    report.per_query.push_back(std::move(rec));
  }
  report.num_queries = static_cast<std::int64_t>(ids.size());
  const double nm = static_cast<double>(std::max<std::int64_t>(with_moments, 1));
  for (auto& [t, v] : report.r1_at) v /= nm;
  for (auto& [t, v] : report.map_at) v /= nm;
  report.miou /= nm;
  double sum = 0.0;
  for (const auto& [t, v] : report.map_at) sum += v;
  report.map_avg = sum / static_cast<double>(report.map_at.size());
  report.hd_map /= static_cast<double>(std::max<std::int64_t>(with_relevant, 1));
  report.hit_at_1 /= static_cast<double>(std::max<std::int64_t>(report.num_queries, 1));
  return report;
}

EvalReport evaluate_predictions(std::span<const QueryPrediction> preds, const Dataset& dataset,
                                const MetricsConfig& cfg) {
  std::vector<std::string> ids;
  std::vector<Annotation> annotations;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    ids.push_back(dataset.id(i));
    annotations.push_back(dataset.annotation(i));
  }
  return evaluate_predictions(preds, ids, annotations, cfg);
}

// ---------------------------------------------------------------------------

namespace {

std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

template <typename V>
nlohmann::ordered_json keyed(const std::map<double, V>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [t, v] : m) j[threshold_key(t)] = v;
  return j;
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json(bool include_per_query) const {
  nlohmann::ordered_json j;
  j["num_queries"] = num_queries;
  j["r1_at"] = keyed(r1_at);
  j["map_at"] = keyed(map_at);
  j["map_avg"] = map_avg;
  j["miou"] = miou;
  j["hd_map"] = hd_map;
  j["hit_at_1"] = hit_at_1;
  if (include_per_query) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& q : per_query) {
      nlohmann::ordered_json r;
      r["id"] = q.id;
      r["has_moments"] = q.has_moments;
      r["top1_iou"] = q.top1_iou;
      r["r1_at"] = keyed(q.r1_at);
      r["ap_at"] = keyed(q.ap_at);
      r["hd_ap"] = q.hd_ap ? nlohmann::ordered_json(*q.hd_ap) : nlohmann::ordered_json(nullptr);
      r["hit_at_1"] = q.hit_at_1;
      rows.push_back(std::move(r));
    }
    j["per_query"] = std::move(rows);
  }
  return j;
}

}  // namespace ld_detr
