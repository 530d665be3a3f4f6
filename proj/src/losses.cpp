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

#include "ld_detr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ld_detr {

void LossConfig::validate() const {
  for (double w : {lambda_l1, lambda_giou, lambda_ce, lambda_margin, lambda_contrastive, background_weight}) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
  if (!std::isfinite(margin)) throw std::invalid_argument("margin must be finite");
  if (!(contrastive_tau > 0.0)) throw std::invalid_argument("contrastive_tau must be positive");
  if (margin_pairs < 0) throw std::invalid_argument("margin_pairs must be >= 0");
}

// ---------------------------------------------------------------------------

double span_giou(const MomentSpan& a, const MomentSpan& b) {
  const double inter = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const double uni = (a.end() - a.start()) + (b.end() - b.start()) - inter;
  const double hull = std::max(a.end(), b.end()) - std::min(a.start(), b.start());
  if (!(hull > 0.0)) throw std::invalid_argument("span_giou: zero-length enclosing interval");
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  return iou - (hull - uni) / hull;
}

torch::Tensor span_giou(const torch::Tensor& a, const torch::Tensor& b) {
  auto a_start = a.select(-1, 0) - a.select(-1, 1) / 2.0;
  auto a_end = a.select(-1, 0) + a.select(-1, 1) / 2.0;
  auto b_start = b.select(-1, 0) - b.select(-1, 1) / 2.0;
  auto b_end = b.select(-1, 0) + b.select(-1, 1) / 2.0;
  auto inter = (torch::min(a_end, b_end) - torch::max(a_start, b_start)).clamp_min(0.0);
  auto uni = (a_end - a_start) + (b_end - b_start) - inter;
  auto hull = torch::max(a_end, b_end) - torch::min(a_start, b_start);
  return inter / uni - (hull - uni) / hull;
}

// ---------------------------------------------------------------------------

std::vector<std::int64_t> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const auto n = static_cast<std::int64_t>(cost.size());
  if (n == 0) return {};
  const auto m = static_cast<std::int64_t>(cost.front().size());
  if (n > m) throw std::invalid_argument("solve_assignment: needs rows <= cols");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Shortest augmenting path with row/column potentials; 1-based, column 0
  // is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::int64_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::int64_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::int64_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::int64_t i0 = owner[j0];
      double delta = kInf;
      std::int64_t j1 = 0;
      for (std::int64_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::int64_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::int64_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::int64_t> assignment(n, -1);
  for (std::int64_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) assignment[owner[j] - 1] = j - 1;
  }
  return assignment;
}

double match_cost(const MomentSpan& pred, double fg_prob, const MomentSpan& gt, const LossConfig& cfg) {
  const double l1 = std::abs(pred.center - gt.center) + std::abs(pred.width - gt.width);
  return cfg.lambda_l1 * l1 + cfg.lambda_giou * (1.0 - span_giou(pred, gt)) - fg_prob;
}

MatchResult hungarian_match(std::span<const MomentSpan> preds, std::span<const double> fg_probs,
                            std::span<const MomentSpan> gts, const LossConfig& cfg) {
  MatchResult result;
  const auto q = static_cast<std::int64_t>(preds.size());
  const auto g = static_cast<std::int64_t>(gts.size());
  if (q == 0 || g == 0) return result;
  if (static_cast<std::int64_t>(fg_probs.size()) != q) {
    throw std::invalid_argument("hungarian_match: one probability per prediction required");
  }
  const bool gt_rows = g <= q;
  std::vector<std::vector<double>> cost(gt_rows ? g : q, std::vector<double>(gt_rows ? q : g));
  for (std::int64_t i = 0; i < q; ++i) {
    for (std::int64_t j = 0; j < g; ++j) {
      const double c = match_cost(preds[i], fg_probs[i], gts[j], cfg);
      if (gt_rows) cost[j][i] = c; else cost[i][j] = c;
    }
  }
  const auto assignment = solve_assignment(cost);
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    const auto row = static_cast<std::int64_t>(r);
    if (gt_rows) result.pairs.emplace_back(assignment[r], row);
    else result.pairs.emplace_back(row, assignment[r]);
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

MatchResult hungarian_match(const torch::Tensor& spans, const torch::Tensor& logits,
                            std::span<const MomentSpan> gts, const LossConfig& cfg) {
  auto s = spans.detach().to(torch::kFloat64).contiguous();
  auto p = torch::sigmoid(logits.detach().to(torch::kFloat64)).contiguous();
  auto sa = s.accessor<double, 2>();
  auto pa = p.accessor<double, 1>();
  std::vector<MomentSpan> preds;
  std::vector<double> probs;
  for (std::int64_t k = 0; k < s.size(0); ++k) {
    preds.push_back({sa[k][0], sa[k][1]});
    probs.push_back(pa[k]);
  }
  return hungarian_match(preds, probs, gts, cfg);
}

// ---------------------------------------------------------------------------

MrTerms mr_loss_sample(const torch::Tensor& spans, const torch::Tensor& logits,
                       std::span<const MomentSpan> gts, const MatchResult& match,
                       const LossConfig& cfg) {
  const auto q = spans.size(0);
  const auto opts = spans.options();
  MrTerms t;
  auto is_fg = torch::zeros({q}, opts);
  if (match.pairs.empty()) {
    t.l1 = torch::zeros({}, opts);
    t.giou = torch::zeros({}, opts);
  } else {
    std::vector<std::int64_t> qi;
    std::vector<double> target;
    for (const auto& [query, gt] : match.pairs) {
      qi.push_back(query);
      target.push_back(gts[static_cast<std::size_t>(gt)].center);
      target.push_back(gts[static_cast<std::size_t>(gt)].width);
    }
    auto index = torch::tensor(qi, torch::kInt64);
    auto matched = spans.index_select(0, index);
    auto tgt = torch::tensor(target, torch::kFloat64).view({-1, 2}).to(opts.dtype());
    t.l1 = (matched - tgt).abs().sum(1).mean();
    t.giou = (1.0 - span_giou(matched, tgt)).mean();
    is_fg.index_fill_(0, index, 1.0);
  }
  // Two-way foreground/background cross-entropy on the confidence logit.
  auto weights = is_fg + (1.0 - is_fg) * cfg.background_weight;
  auto ce = -(is_fg * torch::log_sigmoid(logits) + (1.0 - is_fg) * torch::log_sigmoid(-logits));
  t.ce = (weights * ce).sum() / weights.sum();
  t.total = cfg.lambda_l1 * t.l1 + cfg.lambda_giou * t.giou + cfg.lambda_ce * t.ce;
  return t;
}

MrTerms mr_loss(const MomentPrediction& pred, const std::vector<Annotation>& annotations,
                const std::vector<MatchResult>& matches, const LossConfig& cfg) {
  const auto b = pred.spans.size(0);
  const auto opts = pred.spans.options();
  auto l1 = torch::zeros({}, opts), giou = torch::zeros({}, opts), ce = torch::zeros({}, opts);
  std::int64_t with_gt = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& gts = annotations[static_cast<std::size_t>(i)].gt_moments;
    auto s = mr_loss_sample(pred.spans[i], pred.logits[i], gts, matches[static_cast<std::size_t>(i)], cfg);
    if (!gts.empty()) {
      l1 = l1 + s.l1;
      giou = giou + s.giou;
      ++with_gt;
    }
    ce = ce + s.ce;
  }
  MrTerms t;
  t.l1 = with_gt > 0 ? l1 / static_cast<double>(with_gt) : l1;
  t.giou = with_gt > 0 ? giou / static_cast<double>(with_gt) : giou;
  t.ce = ce / static_cast<double>(b);
  t.total = cfg.lambda_l1 * t.l1 + cfg.lambda_giou * t.giou + cfg.lambda_ce * t.ce;
  return t;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::int64_t, std::int64_t>> margin_pairs(std::span<const double> saliency,
                                                                std::int64_t max_pairs) {
  const auto t = static_cast<std::int64_t>(saliency.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(t));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return saliency[a] > saliency[b]; });
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (std::int64_t k = 0; k < max_pairs && k < t; ++k) {
    const auto high = order[static_cast<std::size_t>(k)];
    const auto low = order[static_cast<std::size_t>(t - 1 - k)];
    if (high == low || k >= t - 1 - k) break;
    if (saliency[high] - saliency[low] >= 1.0) pairs.emplace_back(high, low);
  }
  return pairs;
}

std::vector<double> rank_thresholds(std::span<const double> saliency) {
  std::vector<double> levels;
  for (double s : saliency) levels.push_back(std::floor(s));
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (!levels.empty()) levels.erase(levels.begin());
  return levels;
}

namespace {

torch::Tensor margin_sum(const torch::Tensor& scores,
                         const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs,
                         double margin) {
  auto sum = torch::zeros({}, scores.options());
  for (const auto& [high, low] : pairs) sum = sum + torch::relu(margin + scores[low] - scores[high]);
  return sum;
}

// Mean over thresholds of the InfoNCE loss of each positive against the
// clips ranked below the threshold; undefined tensor when no threshold.
torch::Tensor rank_contrastive(const torch::Tensor& scores, std::span<const double> saliency, double tau) {
  const auto thresholds = rank_thresholds(saliency);
  if (thresholds.empty()) return {};
  auto gt = torch::tensor(std::vector<double>(saliency.begin(), saliency.end()), torch::kFloat64);
  auto logits = scores / tau;
  auto total = torch::zeros({}, scores.options());
  for (double r : thresholds) {
    auto pos = (gt >= r);
    auto neg_logits = logits.masked_select(pos.logical_not());
    auto pos_logits = logits.masked_select(pos);
    // log(exp(p) + sum_neg exp(n)) for every positive p.
    auto neg_lse = torch::logsumexp(neg_logits, 0);
    auto denom = torch::logaddexp(pos_logits, neg_lse.expand_as(pos_logits));
    total = total + (denom - pos_logits).mean();
  }
  return total / static_cast<double>(thresholds.size());
}

}  // namespace

HdTerms hd_loss_sample(const torch::Tensor& scores, std::span<const double> saliency,
                       const LossConfig& cfg) {
  HdTerms t;
  const auto pairs = margin_pairs(saliency, cfg.margin_pairs);
  t.margin = pairs.empty() ? torch::zeros({}, scores.options())
                           : margin_sum(scores, pairs, cfg.margin) / static_cast<double>(pairs.size());
  auto rac = rank_contrastive(scores, saliency, cfg.contrastive_tau);
  t.contrastive = rac.defined() ? rac : torch::zeros({}, scores.options());
  t.total = cfg.lambda_margin * t.margin + cfg.lambda_contrastive * t.contrastive;
  return t;
}

HdTerms hd_loss(const torch::Tensor& scores, const std::vector<Annotation>& annotations,
                const std::vector<std::int64_t>& num_clips, const LossConfig& cfg) {
  const auto b = scores.size(0);
  auto margin = torch::zeros({}, scores.options());
  auto contrastive = torch::zeros({}, scores.options());
  std::int64_t pair_count = 0;
  std::int64_t rac_count = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& sal = annotations[static_cast<std::size_t>(i)].saliency;
    auto s = scores[i].narrow(0, 0, num_clips[static_cast<std::size_t>(i)]);
    const auto pairs = margin_pairs(sal, cfg.margin_pairs);
    margin = margin + margin_sum(s, pairs, cfg.margin);
    pair_count += static_cast<std::int64_t>(pairs.size());
    auto rac = rank_contrastive(s, sal, cfg.contrastive_tau);
    if (rac.defined()) {
      contrastive = contrastive + rac;
      ++rac_count;
    }
  }
  HdTerms t;
  t.margin = pair_count > 0 ? margin / static_cast<double>(pair_count) : margin;
  t.contrastive = rac_count > 0 ? contrastive / static_cast<double>(rac_count) : contrastive;
  t.total = cfg.lambda_margin * t.margin + cfg.lambda_contrastive * t.contrastive;
  return t;
}

torch::Tensor total_loss(const MrTerms& mr, const HdTerms& hd, const AlignLosses& align) {
  return mr.total + hd.total + align.total;
}

}  // namespace ld_detr
