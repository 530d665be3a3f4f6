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

#include "ld_detr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ld_detr/batch.hpp"
#include "ld_detr/trainer.hpp"

namespace ld_detr {

namespace {

/// Restores the module's training flag on scope exit.
class EvalScope {
 public:
  explicit EvalScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalScope() { module_.train(was_training_); }
  EvalScope(const EvalScope&) = delete;
  EvalScope& operator=(const EvalScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

ScoredSpan top_span(const MomentPrediction& p, std::int64_t i) {
  auto spans = p.spans[i].detach().to(torch::kFloat64).contiguous();
  auto probs = torch::sigmoid(p.logits[i].detach().to(torch::kFloat64)).contiguous();
  auto sa = spans.accessor<double, 2>();
  auto pa = probs.accessor<double, 1>();
  std::vector<ScoredSpan> raw;
  for (std::int64_t k = 0; k < spans.size(0); ++k) raw.push_back({MomentSpan{sa[k][0], sa[k][1]}.clamped(), pa[k]});
  return raw[rank_predictions(raw).front()];
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::vector<QueryPrediction> predict_dataset(LdDetr& model, const Dataset& data, std::int64_t batch_size,
                                             std::vector<LoopTrace>* traces) {
  if (batch_size < 1) throw std::invalid_argument("predict_dataset: batch_size must be >= 1");
  EvalScope scope(*model);
  torch::NoGradGuard no_grad;
  std::vector<QueryPrediction> preds;
  ForwardOptions fwd;
  fwd.align = false;
  fwd.per_loop = traces != nullptr;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx(std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = pad_batch(data, idx);
    const ModelOutput out = model->forward(batch, fwd);
    auto p = to_predictions(out, batch);
    preds.insert(preds.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    if (traces) {
      for (std::int64_t i = 0; i < batch.size(); ++i) {
        LoopTrace t;
        t.id = batch.ids[static_cast<std::size_t>(i)];
        t.num_clips = batch.num_clips[static_cast<std::size_t>(i)];
        t.clip_duration_s = data.features(idx[static_cast<std::size_t>(i)]).clip_duration_s;
        t.gt_moments = batch.annotations[static_cast<std::size_t>(i)].gt_moments;
        for (const auto& loop : out.per_loop) t.top_per_loop.push_back(top_span(loop, i));
        traces->push_back(std::move(t));
      }
    }
  }
  return preds;
}

EvalReport evaluate_model(LdDetr& model, const Dataset& data, std::int64_t batch_size,
                          const MetricsConfig& cfg) {
  const auto preds = predict_dataset(model, data, batch_size);
  return evaluate_predictions(preds, data, cfg);
}

// ---------------------------------------------------------------------------

std::string render_loop_plot(const LoopTrace& trace) {
  constexpr double kWidth = 640.0, kLeft = 90.0, kRight = 20.0, kPanel = 56.0, kTop = 28.0;
  const double total_s = static_cast<double>(trace.num_clips) * trace.clip_duration_s;
  const double plot_w = kWidth - kLeft - kRight;
  const auto n = static_cast<double>(trace.top_per_loop.size());
  const double height = kTop + n * kPanel + 24.0;
  auto x_of = [&](double normalized) { return kLeft + std::clamp(normalized, 0.0, 1.0) * plot_w; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"13\">" << trace.id << " (" << fmt("%.1f", total_s)
      << " s)</text>\n";
  for (std::size_t l = 0; l < trace.top_per_loop.size(); ++l) {
    const double y = kTop + static_cast<double>(l) * kPanel;
    const auto& pred = trace.top_per_loop[l];
    svg << "<g class=\"loop\" data-loop=\"" << l + 1 << "\">\n";
    svg << "  <text x=\"8\" y=\"" << y + 24 << "\">loop " << l + 1 << "</text>\n";
    svg << "  <line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << y + 40 << "\" y2=\"" << y + 40
        << "\" stroke=\"#999\"/>\n";
    for (const auto& g : trace.gt_moments) {
      svg << "  <rect class=\"gt\" x=\"" << x_of(g.start()) << "\" y=\"" << y + 6 << "\" width=\""
          << x_of(g.end()) - x_of(g.start()) << "\" height=\"14\" fill=\"#4caf50\" opacity=\"0.7\"/>\n";
    }
    svg << "  <rect class=\"pred\" x=\"" << x_of(pred.span.start()) << "\" y=\"" << y + 22 << "\" width=\""
        << x_of(pred.span.end()) - x_of(pred.span.start()) << "\" height=\"14\" fill=\"#1e88e5\" opacity=\"0.8\"/>\n";
    svg << "  <text x=\"" << kLeft + plot_w << "\" y=\"" << y + 52 << "\" text-anchor=\"end\" fill=\"#555\">["
        << fmt("%.1f", pred.span.start() * total_s) << ", " << fmt("%.1f", pred.span.end() * total_s)
        << "] s, p=" << fmt("%.3f", pred.confidence) << "</text>\n";
    svg << "</g>\n";
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << height - 6 << "\" fill=\"#4caf50\">ground truth</text>\n";
  svg << "<text x=\"" << kLeft + 100 << "\" y=\"" << height - 6 << "\" fill=\"#1e88e5\">top-1 prediction</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::size_t write_loop_plots(const std::vector<LoopTrace>& traces, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : traces) {
    std::ofstream out(dir / (t.id + ".svg"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot for " + t.id);
    out << render_loop_plot(t);
  }
  return traces.size();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"alpha", "queue_len", "conv_blocks", "loops", "fuser_placement"};
  return axes;
}

namespace {

std::string axis_key(const std::string& axis) {
  if (axis == "alpha") return "align.alpha";
  if (axis == "queue_len") return "align.queue_len";
  if (axis == "conv_blocks") return "model.conv_blocks";
  if (axis == "loops") return "model.loops";
  if (axis == "fuser_placement") return "model.fuser_placement";
  throw ConfigError("unknown ablation axis '" + axis + "' (alpha, queue_len, conv_blocks, loops, fuser_placement)");
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& axis,
                                      const std::vector<std::string>& values, const Dataset& train,
                                      const Dataset& val, std::ostream* log) {
  const std::string key = axis_key(axis);
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    RunConfig c = base;
    c.set(key, v);
    c.eval_every = 0;
    c.validate();
    configs.push_back(c);
  }
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Trainer trainer(configs[i], train, val);
    trainer.run();
    AblationRow row;
    row.value = values[i];
    row.config_value = configs[i].get(key);
    row.parameter_count = trainer.model()->trainable_parameter_count();
    row.report = evaluate_model(trainer.model(), val.empty() ? train : val, configs[i].batch_size,
                                configs[i].metrics);
    if (log) {
      *log << axis << "=" << row.value << " params=" << row.parameter_count
           << " R1@0.5=" << row.report.r1_at.at(0.5) << " mAP=" << row.report.map_avg
           << " HIT@1=" << row.report.hit_at_1 << '\n';
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::ordered_json ablation_json(const std::string& axis, const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json j;
  j["axis"] = axis;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["value"] = r.value;
    row["config_value"] = r.config_value;
    row["parameter_count"] = r.parameter_count;
    row["report"] = r.report.to_json(false);
    arr.push_back(std::move(row));
  }
  j["rows"] = std::move(arr);
  return j;
}

}  // namespace ld_detr
