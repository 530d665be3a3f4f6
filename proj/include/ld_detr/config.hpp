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

#ifndef LD_DETR_CONFIG_HPP_
#define LD_DETR_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ld_detr/data_model.hpp"
#include "ld_detr/losses.hpp"
#include "ld_detr/metrics.hpp"
#include "ld_detr/model.hpp"

namespace ld_detr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Text form is one `key = value` per line.
struct RunConfig {
  std::string preset = "default";
  std::uint64_t seed = 1;

  // Optimization.
  std::int64_t epochs = 250;
  std::int64_t max_steps = 0;  // 0 = no step cap
  double lr = 1e-4;
  std::int64_t batch_size = 32;
  double weight_decay = 1e-4;
  double grad_clip = 0.1;
  std::int64_t eval_every = 1;  // epochs; 0 disables periodic eval

  ModelOptions model;
  LossConfig loss;
  MetricsConfig metrics;

  // Synthetic data.
  SynthConfig synth;
  std::int64_t synth_val_samples = 64;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;

  /// Canonical text, every key in a fixed order.
  std::string to_text() const;

  /// Sets one key from its text value. Throws ConfigError for unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Text value of one key. Throws ConfigError for unknown keys.
  std::string get(const std::string& key) const;

  /// All keys in canonical order.
  static std::vector<std::string> keys();
};

/// Preset names: default, synthetic, overfit, ablation.
RunConfig preset_config(const std::string& name);

/// Parses `key = value` lines; `#` starts a comment.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

/// Parses "key=value".
std::pair<std::string, std::string> parse_override(const std::string& item);

/// Builds a config: the preset named in the file or overrides (else
/// "default"), then file entries, then overrides, then LD_DETR_SEED.
RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace ld_detr

#endif  // LD_DETR_CONFIG_HPP_
