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

// ld-detr: synthetic data, training, evaluation, prediction and ablations.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "ld_detr/config.hpp"
#include "ld_detr/data_model.hpp"
#include "ld_detr/evaluation.hpp"
#include "ld_detr/metrics.hpp"
#include "ld_detr/trainer.hpp"

namespace fs = std::filesystem;
using namespace ld_detr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct ConfigArgs {
  std::string path;
  std::string preset;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.path, "key = value config file");
  cmd->add_option("--preset", args.preset, "default, synthetic, overfit or ablation");
  cmd->add_option("--set", args.overrides, "override, key=value (repeatable)");
}

RunConfig resolve_config(const ConfigArgs& args, const std::string& fallback_preset) {
  std::vector<std::pair<std::string, std::string>> overrides;
  overrides.emplace_back("preset", args.preset.empty() ? fallback_preset : args.preset);
  for (const auto& o : args.overrides) overrides.push_back(parse_override(o));
  if (args.path.empty()) return build_config({}, overrides);
  std::ifstream in(args.path);
  if (!in) throw ConfigError("cannot open config " + args.path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto file_entries = parse_key_values(ss.str());
  // A preset named in the file wins over the fallback, not over --preset.
  if (args.preset.empty()) {
    for (const auto& [k, v] : file_entries) {
      if (k == "preset") overrides.front().second = v;
    }
  }
  return build_config(file_entries, overrides);
}

std::pair<Dataset, Dataset> load_splits(const RunConfig& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return synth_splits(cfg.synth, cfg.synth_val_samples);
  const fs::path dir(data_dir);
  Dataset train = load_manifest(dir / "train.jsonl");
  Dataset val = fs::exists(dir / "val.jsonl") ? load_manifest(dir / "val.jsonl") : Dataset();
  return {train, val};
}

void check_dims(const RunConfig& cfg, const Dataset& data) {
  if (data.empty()) return;
  const auto& f = data.features(0);
  if (f.video_feats.cols != cfg.model.video_dim || f.text_feats.cols != cfg.model.text_dim) {
    throw ConfigError("data feature dims (" + std::to_string(f.video_feats.cols) + ", " +
                      std::to_string(f.text_feats.cols) + ") do not match checkpoint dims (" +
                      std::to_string(cfg.model.video_dim) + ", " + std::to_string(cfg.model.text_dim) + ")");
  }
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<std::string> split_values(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"ld-detr: joint video moment retrieval and highlight detection"};
  app.require_subcommand(1);

  // synth-data
  ConfigArgs synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic train/val manifest pair");
  add_config_options(synth, synth_cfg);
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  ConfigArgs train_cfg;
  std::string train_data, train_out, train_resume;
  auto* train = app.add_subcommand("train", "Train a model");
  add_config_options(train, train_cfg);
  train->add_option("--data", train_data, "directory with train.jsonl (and val.jsonl); synthetic if omitted");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // eval
  std::string eval_preds, eval_gt, eval_ckpt, eval_split = "val", eval_data, eval_report;
  double eval_level = 4.0;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions or a checkpoint");
  eval->add_option("--preds", eval_preds, "predictions file (JSON lines)");
  eval->add_option("--gt", eval_gt, "ground-truth manifest");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint");
  eval->add_option("--split", eval_split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--data", eval_data, "data directory (default: the one used for training)");
  eval->add_option("--report", eval_report, "report path ('-' for stdout)");
  eval->add_option("--very-good-level", eval_level, "saliency level counted as relevant (with --preds)");

  // predict
  std::string pred_ckpt, pred_manifest, pred_out, pred_plots;
  auto* predict = app.add_subcommand("predict", "Write predictions for a manifest");
  predict->add_option("--ckpt", pred_ckpt, "checkpoint")->required();
  predict->add_option("--manifest", pred_manifest, "input manifest")->required();
  predict->add_option("--out", pred_out, "predictions file")->required();
  predict->add_option("--per-loop-plots", pred_plots, "directory for per-loop SVG plots");

  // ablate
  ConfigArgs ablate_cfg;
  std::string ablate_axis, ablate_values, ablate_data, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Train one model per value of an axis and compare");
  add_config_options(ablate, ablate_cfg);
  ablate->add_option("--axis", ablate_axis, "alpha, queue_len, conv_blocks, loops or fuser_placement")->required();
  ablate->add_option("--values", ablate_values, "comma-separated values")->required();
  ablate->add_option("--data", ablate_data, "data directory; synthetic if omitted");
  ablate->add_option("--out", ablate_out, "table path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) {
      const RunConfig cfg = resolve_config(synth_cfg, "synthetic");
      const auto [tr, va] = synth_splits(cfg.synth, cfg.synth_val_samples);
      fs::create_directories(synth_out);
      save_manifest(tr, fs::path(synth_out) / "train.jsonl");
      save_manifest(va, fs::path(synth_out) / "val.jsonl");
      std::ofstream(fs::path(synth_out) / "config.txt") << cfg.to_text();
      std::cout << "wrote " << tr.size() << " train and " << va.size() << " val samples to " << synth_out << '\n';
    } else if (*train) {
      RunConfig cfg = resolve_config(train_cfg, "synthetic");
      if (!train_resume.empty()) cfg = read_checkpoint_info(train_resume).config;
      const auto [tr, va] = load_splits(cfg, train_data);
      fs::create_directories(train_out);
      Trainer trainer(cfg, tr, va);
      trainer.set_snapshot_dir(train_out);
      trainer.set_data_dir(train_data.empty() ? "" : fs::absolute(train_data).string());
      if (!train_resume.empty()) trainer.load(fs::path(train_resume));
      std::ofstream log(fs::path(train_out) / "train_log.jsonl", train_resume.empty() ? std::ios::trunc : std::ios::app);
      std::ofstream(fs::path(train_out) / "config.txt") << cfg.to_text();
      const auto records = trainer.run(&log);
      trainer.save(fs::path(train_out) / "model.pt");
      std::cout << "trained " << trainer.steps() << " steps";
      if (!records.empty()) std::cout << ", final loss " << records.back().total;
      std::cout << "; checkpoint " << (fs::path(train_out) / "model.pt").string() << '\n';
      if (trainer.last_eval()) write_json(trainer.last_eval()->to_json(false), (fs::path(train_out) / "val_report.json").string());
    } else if (*eval) {
      if (!eval_preds.empty()) {
        if (eval_gt.empty()) throw ConfigError("--preds requires --gt");
        const auto preds = load_predictions(eval_preds);
        const Dataset gt = load_manifest(eval_gt);
        MetricsConfig mc;
        mc.very_good_level = eval_level;
        write_json(evaluate_predictions(preds, gt, mc).to_json(), eval_report);
      } else {
        if (eval_ckpt.empty()) throw ConfigError("eval needs --preds/--gt or --ckpt");
        RunConfig cfg;
        const auto info = read_checkpoint_info(eval_ckpt);
        LdDetr model = load_model(eval_ckpt, &cfg);
        const auto [tr, va] = load_splits(cfg, eval_data.empty() ? info.data_dir : eval_data);
        const Dataset& data = eval_split == "train" ? tr : va;
        if (data.empty()) throw ConfigError("split '" + eval_split + "' is empty");
        check_dims(cfg, data);
        write_json(evaluate_model(model, data, cfg.batch_size, cfg.metrics).to_json(), eval_report);
      }
    } else if (*predict) {
      RunConfig cfg;
      LdDetr model = load_model(pred_ckpt, &cfg);
      const Dataset data = load_manifest(pred_manifest);
      check_dims(cfg, data);
      std::vector<LoopTrace> traces;
      const auto preds = predict_dataset(model, data, cfg.batch_size, pred_plots.empty() ? nullptr : &traces);
      save_predictions(preds, pred_out);
      std::cout << "wrote " << preds.size() << " predictions to " << pred_out << '\n';
      if (!pred_plots.empty()) {
        const auto n = write_loop_plots(traces, pred_plots);
        std::cout << "wrote " << n << " per-loop plots to " << pred_plots << '\n';
      }
    } else if (*ablate) {
      const RunConfig cfg = resolve_config(ablate_cfg, "ablation");
      const auto [tr, va] = load_splits(cfg, ablate_data);
      const auto rows = run_ablation(cfg, ablate_axis, split_values(ablate_values), tr, va, &std::cerr);
      write_json(ablation_json(ablate_axis, rows), ablate_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
