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

#ifndef LD_DETR_TRAINER_HPP_
#define LD_DETR_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ld_detr/config.hpp"
#include "ld_detr/data_model.hpp"
#include "ld_detr/metrics.hpp"
#include "ld_detr/model.hpp"

namespace ld_detr {

/// Non-finite loss during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::int64_t step = 0;   // 1-based count after this step
  std::int64_t epoch = 0;  // 0-based epoch the step belongs to
  double total = 0.0;
  double mr = 0.0;
  double hd = 0.0;
  double align = 0.0;
};

/// Model, optimizer and data order of one training run. Bit-reproducible
/// on one device for a fixed config.
class Trainer {
 public:
  /// Seeds torch and the sampler from config.seed, then builds the model.
  Trainer(const RunConfig& config, Dataset train, Dataset val = {});

  /// One optimizer step: forward, loss, backward, clip, AdamW, EMA update,
  /// queue push. Throws NumericalError on a non-finite loss after writing a
  /// snapshot when a snapshot directory is set.
  StepRecord step();

  /// Steps until the epoch budget or max_steps is reached. Evaluates the
  /// validation split every eval_every epochs.
  std::vector<StepRecord> run(std::ostream* log = nullptr);

  bool done() const;

  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  /// Restores everything written by save(); dims must match the config.
  void load(const std::filesystem::path& path);
  void load(std::istream& in);

  LdDetr& model() { return model_; }
  const RunConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }
  std::int64_t epoch() const { return epoch_; }
  const std::optional<EvalReport>& last_eval() const { return last_eval_; }

  void set_snapshot_dir(std::filesystem::path dir) { snapshot_dir_ = std::move(dir); }
  void set_data_dir(std::string dir) { data_dir_ = std::move(dir); }

 private:
  void begin_epoch_if_needed();

  RunConfig config_;
  Dataset train_;
  Dataset val_;
  LdDetr model_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  std::vector<torch::Tensor> trainable_;
  std::mt19937_64 rng_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
  std::optional<EvalReport> last_eval_;
  std::optional<std::filesystem::path> snapshot_dir_;
  std::string data_dir_;
  // Private torch generator state, swapped in around every step so that
  // concurrent trainers in one process do not perturb each other.
  torch::Tensor torch_rng_;
};

/// Config text and data directory stored in a checkpoint.
struct CheckpointInfo {
  RunConfig config;
  std::string data_dir;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Model weights from a checkpoint, built from its stored config.
LdDetr load_model(const std::filesystem::path& path, RunConfig* config_out = nullptr);

/// Applies every key of a canonical config text, without the environment.
RunConfig config_from_text(const std::string& text);

}  // namespace ld_detr

#endif  // LD_DETR_TRAINER_HPP_
