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

// Scalar reference implementations used as test oracles. None of these
// call into the library's metric, matching or queue code.

#ifndef LD_DETR_TESTS_ORACLES_HPP_
#define LD_DETR_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

struct Interval {
  double start;
  double end;
};

/// Case analysis on the relative position of the two intervals.
inline double iou(Interval a, Interval b) {
  const double la = a.end - a.start;
  const double lb = b.end - b.start;
  double inter;
  if (a.end <= b.start || b.end <= a.start) {
    inter = 0.0;
  } else if (a.start <= b.start && b.end <= a.end) {
    inter = lb;
  } else if (b.start <= a.start && a.end <= b.end) {
    inter = la;
  } else if (a.start < b.start) {
    inter = a.end - b.start;
  } else {
    inter = b.end - a.start;
  }
  return inter / (la + lb - inter);
}

inline double giou(Interval a, Interval b) {
  const double lo = a.start < b.start ? a.start : b.start;
  const double hi = a.end > b.end ? a.end : b.end;
  const double hull = hi - lo;
  double inter = 0.0;
  if (!(a.end <= b.start || b.end <= a.start)) {
    inter = (a.end < b.end ? a.end : b.end) - (a.start > b.start ? a.start : b.start);
  }
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni - (hull - uni) / hull;
}

/// Minimum total cost over every injective assignment of the smaller side
/// into the larger one; cost[i][j] with i = prediction, j = GT. Sums in
/// GT order.
inline double exhaustive_min_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t q = cost.size();
  if (q == 0) return 0.0;
  const std::size_t g = cost[0].size();
  if (g == 0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  if (g <= q) {
    // Choose an ordered tuple of distinct predictions for GT 0..g-1.
    std::vector<std::size_t> perm(q);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      double s = 0.0;
      for (std::size_t j = 0; j < g; ++j) s += cost[perm[j]][j];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<std::size_t> perm(g);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      // Prediction i takes GT perm[i]; accumulate in GT order.
      std::vector<double> by_gt(g, 0.0);
      std::vector<char> used(g, 0);
      for (std::size_t i = 0; i < q; ++i) {
        by_gt[perm[i]] = cost[i][perm[i]];
        used[perm[i]] = 1;
      }
      double s = 0.0;
      for (std::size_t j = 0; j < g; ++j) {
        if (used[j]) s += by_gt[j];
      }
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return best;
}

struct Scored {
  Interval span;
  double confidence;
};

/// Ranking: confidence descending, earlier start, lower index. Selection
/// sort so it shares no code with std::sort-based ranking.
inline std::vector<std::size_t> rank(const std::vector<Scored>& preds) {
  std::vector<std::size_t> order;
  std::vector<char> taken(preds.size(), 0);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    std::size_t best = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (taken[i]) continue;
      if (best == preds.size()) {
        best = i;
        continue;
      }
      const auto& a = preds[i];
      const auto& b = preds[best];
      if (a.confidence > b.confidence || (a.confidence == b.confidence && a.span.start < b.span.start)) best = i;
    }
    taken[best] = 1;
    order.push_back(best);
  }
  return order;
}

inline double best_iou(Interval p, const std::vector<Interval>& gts) {
  double b = 0.0;
  for (const auto& g : gts) b = std::max(b, iou(p, g));
  return b;
}

/// AP = sum over ranks k of (recall_k - recall_{k-1}) * max_{j >= k} precision_j.
inline double average_precision(const std::vector<Scored>& preds, const std::vector<Interval>& gts,
                                 double theta) {
  if (gts.empty() || preds.empty()) return 0.0;
  const auto order = rank(preds);
  std::vector<char> used(gts.size(), 0);
  std::vector<int> hit;
  for (std::size_t idx : order) {
    int match = -1;
    double match_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(preds[idx].span, gts[g]);
      if (!used[g] && v >= theta && v > match_iou) {
        match = static_cast<int>(g);
        match_iou = v;
      }
    }
    if (match >= 0) used[static_cast<std::size_t>(match)] = 1;
    hit.push_back(match >= 0 ? 1 : 0);
  }
  const std::size_t n = hit.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += hit[k];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(gts.size());
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] == prev_recall) continue;
    double pmax = 0.0;
    for (std::size_t j = k; j < n; ++j) pmax = std::max(pmax, precision[j]);
    ap += (recall[k] - prev_recall) * pmax;
    prev_recall = recall[k];
  }
  return ap;
}

struct HdOracle {
  bool has_relevant = false;
  double ap = 0.0;
  bool hit = false;
};

/// Non-interpolated AP of binary relevance; counts by nested loops.
inline HdOracle hd(const std::vector<double>& pred, const std::vector<double>& gt, double level) {
  const std::size_t t = pred.size();
  // rank_of[c] = number of clips strictly ahead of c.
  std::vector<std::size_t> rank_of(t, 0);
  for (std::size_t c = 0; c < t; ++c) {
    for (std::size_t o = 0; o < t; ++o) {
      if (pred[o] > pred[c] || (pred[o] == pred[c] && o < c)) ++rank_of[c];
    }
  }
  HdOracle r;
  std::size_t relevant = 0;
  for (std::size_t c = 0; c < t; ++c) relevant += gt[c] >= level ? 1 : 0;
  if (relevant == 0) return r;
  r.has_relevant = true;
  double sum = 0.0;
  for (std::size_t c = 0; c < t; ++c) {
    if (gt[c] < level) continue;
    std::size_t relevant_ahead = 0;
    for (std::size_t o = 0; o < t; ++o) {
      if (gt[o] >= level && rank_of[o] < rank_of[c]) ++relevant_ahead;
    }
    sum += static_cast<double>(relevant_ahead + 1) / static_cast<double>(rank_of[c] + 1);
  }
  r.ap = sum / static_cast<double>(relevant);
  for (std::size_t c = 0; c < t; ++c) {
    if (rank_of[c] == 0) r.hit = gt[c] >= level;
  }
  return r;
}

/// FIFO of fixed capacity holding rows; oldest first.
class RingQueue {
 public:
  explicit RingQueue(std::size_t capacity) : capacity_(capacity) {}
  void push(const std::vector<std::vector<double>>& rows) {
    for (const auto& r : rows) {
      rows_.push_back(r);
      if (rows_.size() > capacity_) rows_.pop_front();
    }
  }
  const std::deque<std::vector<double>>& rows() const { return rows_; }

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> rows_;
};

/// EMA after k updates toward a fixed target: theta + m^k (theta0 - theta).
inline double ema_closed_form(double theta0, double theta, double m, int k) {
  return theta + std::pow(m, k) * (theta0 - theta);
}

}  // namespace oracle

#endif  // LD_DETR_TESTS_ORACLES_HPP_
