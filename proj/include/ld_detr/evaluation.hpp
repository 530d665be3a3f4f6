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

#ifndef LD_DETR_EVALUATION_HPP_
#define LD_DETR_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ld_detr/config.hpp"
#include "ld_detr/data_model.hpp"
#include "ld_detr/metrics.hpp"
#include "ld_detr/model.hpp"

namespace ld_detr {

/// Top-1 span of every decoder loop for one sample.
struct LoopTrace {
  std::string id;
  std::int64_t num_clips = 0;
  double clip_duration_s = 1.0;
  std::vector<MomentSpan> gt_moments;
  std::vector<ScoredSpan> top_per_loop;
};

/// Eval-mode predictions in dataset order. With `traces`, also records the
/// per-loop top-1 spans (this reads the ground-truth moments).
std::vector<QueryPrediction> predict_dataset(LdDetr& model, const Dataset& data, std::int64_t batch_size,
                                             std::vector<LoopTrace>* traces = nullptr);

EvalReport evaluate_model(LdDetr& model, const Dataset& data, std::int64_t batch_size,
                          const MetricsConfig& cfg);

/// SVG with one panel per loop: GT spans and the loop's top-1 span.
std::string render_loop_plot(const LoopTrace& trace);

/// Writes <dir>/<id>.svg for every trace; returns the number of files.
std::size_t write_loop_plots(const std::vector<LoopTrace>& traces, const std::filesystem::path& dir);

/// Axis names accepted by run_ablation.
const std::vector<std::string>& ablation_axes();

struct AblationRow {
  std::string value;
  std::int64_t parameter_count = 0;
  std::string config_value;  // value echoed from the trained config
  EvalReport report;
};

/// Trains one model per value on `train`, evaluates on `val`.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& axis,
                                      const std::vector<std::string>& values, const Dataset& train,
                                      const Dataset& val, std::ostream* log = nullptr);

nlohmann::ordered_json ablation_json(const std::string& axis, const std::vector<AblationRow>& rows);

}  // namespace ld_detr

#endif  // LD_DETR_EVALUATION_HPP_
