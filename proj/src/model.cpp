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

#include "ld_detr/model.hpp"

#include "ld_detr/metrics.hpp"

namespace ld_detr {

FuserOptions ModelOptions::fuser_options() const {
  FuserOptions f;
  f.dim = dim;
  f.heads = heads;
  f.ffn_dim = ffn_dim;
  f.dropout = dropout;
  f.encoder_layers = encoder_layers;
  f.conv_blocks = conv_blocks;
  f.conv_kernel = conv_kernel;
  f.scale = scale;
  f.placement = placement;
  f.positional = positional;
  return f;
}

DecoderOptions ModelOptions::decoder_options() const {
  DecoderOptions d;
  d.dim = dim;
  d.heads = heads;
  d.ffn_dim = ffn_dim;
  d.dropout = dropout;
  d.layers = decoder_layers;
  d.num_queries = num_queries;
  d.loops = loops;
  d.scale = scale;
  d.positional = positional;
  return d;
}

LdDetrImpl::LdDetrImpl(const ModelOptions& opt) : opt_(opt) {
  opt_.align.validate();
  video_encoder_ = register_module(
      "video_encoder", MomentumEncoder(opt.video_dim, opt.dim, opt.momentum, opt.input_dropout));
  text_encoder_ = register_module(
      "text_encoder", MomentumEncoder(opt.text_dim, opt.dim, opt.momentum, opt.input_dropout));
  align_ = register_module("distill_align", DistillAlign(opt.dim, opt.align));
  fuser_ = register_module("fuser", ConvolutionalFuser(opt.fuser_options()));
  decoder_ = register_module("decoder", LoopDecoder(opt.decoder_options()));
  moment_head_ = register_module("moment_head", MomentHead(opt.dim));
  saliency_head_ = register_module("saliency_head", SaliencyHead(opt.dim));
  video_encoder_->init();
  text_encoder_->init();
}

ModelOutput LdDetrImpl::forward(const Batch& batch, const ForwardOptions& fwd) {
  ModelOutput out;
  const auto& vmask = batch.video_mask;
  const auto& tmask = batch.text_mask;
  out.video_latent = video_encoder_->forward(batch.video, vmask);
  out.text_latent = text_encoder_->forward(batch.text, tmask);
  {
    torch::NoGradGuard no_grad;
    out.momentum_video_global = global_pool(video_encoder_->forward_shadow(batch.video, vmask), vmask);
    out.momentum_text_global = global_pool(text_encoder_->forward_shadow(batch.text, tmask), tmask);
  }
  if (fwd.align) {
    out.align = align_->forward(global_pool(out.video_latent, vmask), global_pool(out.text_latent, tmask),
                                out.momentum_video_global, out.momentum_text_global);
  }
  out.memory = fuser_->forward(out.video_latent, out.text_latent, vmask, tmask);
  const auto decoded = decoder_->loop_decode(out.memory, vmask, opt_.loops);
  if (fwd.per_loop) {
    for (const auto& q : decoded) out.per_loop.push_back(moment_head_->forward(q));
    out.moments = out.per_loop.back();
  } else {
    out.moments = moment_head_->forward(decoded.back());
  }
  out.saliency = saliency_head_->forward(out.memory, out.video_latent, out.moments, batch.num_clips, vmask);
  return out;
}

void LdDetrImpl::momentum_update() {
  video_encoder_->update();
  text_encoder_->update();
}

void LdDetrImpl::queue_push(const ModelOutput& out) {
  align_->push(out.momentum_video_global, out.momentum_text_global);
}

std::int64_t LdDetrImpl::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) n += p.numel();
  }
  return n;
}

// ---------------------------------------------------------------------------

std::vector<MatchResult> match_batch(const MomentPrediction& pred, const Batch& batch,
                                     const LossConfig& cfg) {
  std::vector<MatchResult> matches;
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    matches.push_back(hungarian_match(pred.spans[i], pred.logits[i],
                                      batch.annotations[static_cast<std::size_t>(i)].gt_moments, cfg));
  }
  return matches;
}

LossBreakdown compute_losses(const ModelOutput& out, const Batch& batch, const LossConfig& cfg) {
  LossBreakdown l;
  l.mr = mr_loss(out.moments, batch.annotations, match_batch(out.moments, batch, cfg), cfg);
  l.hd = hd_loss(out.saliency.scores, batch.annotations, batch.num_clips, cfg);
  l.align = out.align;
  if (!l.align.total.defined()) {
    auto zero = torch::zeros({}, out.moments.spans.options());
    l.align = {zero, zero, zero, zero, zero};
  }
  l.total = total_loss(l.mr, l.hd, l.align);
  return l;
}

std::vector<QueryPrediction> to_predictions(const ModelOutput& out, const Batch& batch) {
  auto spans = out.moments.spans.detach().to(torch::kFloat64).contiguous();
  auto probs = torch::sigmoid(out.moments.logits.detach().to(torch::kFloat64)).contiguous();
  auto sal = out.saliency.scores.detach().to(torch::kFloat64).contiguous();
  auto sa = spans.accessor<double, 3>();
  auto pa = probs.accessor<double, 2>();
  auto la = sal.accessor<double, 2>();
  std::vector<QueryPrediction> preds;
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    QueryPrediction p;
    p.id = batch.ids[static_cast<std::size_t>(i)];
    std::vector<ScoredSpan> raw;
    for (std::int64_t k = 0; k < spans.size(1); ++k) {
      raw.push_back({MomentSpan{sa[i][k][0], sa[i][k][1]}.clamped(), pa[i][k]});
    }
    for (std::size_t k : rank_predictions(raw)) p.pred_moments.push_back(raw[k]);
    for (std::int64_t c = 0; c < batch.num_clips[static_cast<std::size_t>(i)]; ++c) {
      p.pred_saliency.push_back(la[i][c]);
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

}  // namespace ld_detr
