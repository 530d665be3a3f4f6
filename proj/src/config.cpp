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

#include "ld_detr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace ld_detr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Ref>
Field number_field(std::string key, Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) {
    const T v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [ref, key](RunConfig& c, const std::string& text) { ref(c) = parse_number<T>(key, text); };
  return f;
}

template <typename Ref>
Field bool_field(std::string key, Ref ref) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); };
  f.set = [ref, key](RunConfig& c, const std::string& text) { ref(c) = parse_bool(key, text); };
  return f;
}

template <typename Ref>
Field string_field(std::string key, Ref ref) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); };
  f.set = [ref](RunConfig& c, const std::string& text) { ref(c) = text; };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(string_field("preset", [](RunConfig& c) -> auto& { return c.preset; }));
    t.push_back(number_field("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    t.push_back(number_field("epochs", [](RunConfig& c) -> auto& { return c.epochs; }));
    t.push_back(number_field("max_steps", [](RunConfig& c) -> auto& { return c.max_steps; }));
    t.push_back(number_field("lr", [](RunConfig& c) -> auto& { return c.lr; }));
    t.push_back(number_field("batch_size", [](RunConfig& c) -> auto& { return c.batch_size; }));
    t.push_back(number_field("weight_decay", [](RunConfig& c) -> auto& { return c.weight_decay; }));
    t.push_back(number_field("grad_clip", [](RunConfig& c) -> auto& { return c.grad_clip; }));
    t.push_back(number_field("eval_every", [](RunConfig& c) -> auto& { return c.eval_every; }));

    t.push_back(number_field("model.video_dim", [](RunConfig& c) -> auto& { return c.model.video_dim; }));
    t.push_back(number_field("model.text_dim", [](RunConfig& c) -> auto& { return c.model.text_dim; }));
    t.push_back(number_field("model.dim", [](RunConfig& c) -> auto& { return c.model.dim; }));
    t.push_back(number_field("model.heads", [](RunConfig& c) -> auto& { return c.model.heads; }));
    t.push_back(number_field("model.ffn_dim", [](RunConfig& c) -> auto& { return c.model.ffn_dim; }));
    t.push_back(number_field("model.dropout", [](RunConfig& c) -> auto& { return c.model.dropout; }));
    t.push_back(number_field("model.input_dropout", [](RunConfig& c) -> auto& { return c.model.input_dropout; }));
    t.push_back(number_field("model.encoder_layers", [](RunConfig& c) -> auto& { return c.model.encoder_layers; }));
    t.push_back(number_field("model.decoder_layers", [](RunConfig& c) -> auto& { return c.model.decoder_layers; }));
    t.push_back(number_field("model.conv_blocks", [](RunConfig& c) -> auto& { return c.model.conv_blocks; }));
    t.push_back(number_field("model.conv_kernel", [](RunConfig& c) -> auto& { return c.model.conv_kernel; }));
    t.push_back(number_field("model.num_queries", [](RunConfig& c) -> auto& { return c.model.num_queries; }));
    t.push_back(number_field("model.loops", [](RunConfig& c) -> auto& { return c.model.loops; }));
    t.push_back(number_field("model.momentum", [](RunConfig& c) -> auto& { return c.model.momentum; }));
    {
      Field f;
      f.key = "model.attention_scale";
      f.get = [](const RunConfig& c) { return to_string(c.model.scale); };
      f.set = [](RunConfig& c, const std::string& v) {
        try {
          c.model.scale = parse_attention_scale(v);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      };
      t.push_back(f);
    }
    {
      Field f;
      f.key = "model.fuser_placement";
      f.get = [](const RunConfig& c) { return to_string(c.model.placement); };
      f.set = [](RunConfig& c, const std::string& v) {
        try {
          c.model.placement = parse_conv_placement(v);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      };
      t.push_back(f);
    }
    t.push_back(bool_field("model.positional", [](RunConfig& c) -> auto& { return c.model.positional; }));

    t.push_back(number_field("align.alpha", [](RunConfig& c) -> auto& { return c.model.align.alpha; }));
    t.push_back(number_field("align.tau", [](RunConfig& c) -> auto& { return c.model.align.tau; }));
    t.push_back(number_field("align.lambda_align", [](RunConfig& c) -> auto& { return c.model.align.lambda_align; }));
    t.push_back(number_field("align.lambda_sim", [](RunConfig& c) -> auto& { return c.model.align.lambda_sim; }));
    t.push_back(number_field("align.queue_len", [](RunConfig& c) -> auto& { return c.model.align.queue_len; }));

    t.push_back(number_field("loss.lambda_l1", [](RunConfig& c) -> auto& { return c.loss.lambda_l1; }));
    t.push_back(number_field("loss.lambda_giou", [](RunConfig& c) -> auto& { return c.loss.lambda_giou; }));
    t.push_back(number_field("loss.lambda_ce", [](RunConfig& c) -> auto& { return c.loss.lambda_ce; }));
    t.push_back(number_field("loss.background_weight", [](RunConfig& c) -> auto& { return c.loss.background_weight; }));
    t.push_back(number_field("loss.lambda_margin", [](RunConfig& c) -> auto& { return c.loss.lambda_margin; }));
    t.push_back(number_field("loss.lambda_contrastive", [](RunConfig& c) -> auto& { return c.loss.lambda_contrastive; }));
    t.push_back(number_field("loss.margin", [](RunConfig& c) -> auto& { return c.loss.margin; }));
    t.push_back(number_field("loss.contrastive_tau", [](RunConfig& c) -> auto& { return c.loss.contrastive_tau; }));
    t.push_back(number_field("loss.margin_pairs", [](RunConfig& c) -> auto& { return c.loss.margin_pairs; }));

    t.push_back(number_field("metrics.very_good_level", [](RunConfig& c) -> auto& { return c.metrics.very_good_level; }));

    t.push_back(number_field("synth.num_samples", [](RunConfig& c) -> auto& { return c.synth.num_samples; }));
    t.push_back(number_field("synth.val_samples", [](RunConfig& c) -> auto& { return c.synth_val_samples; }));
    t.push_back(number_field("synth.min_clips", [](RunConfig& c) -> auto& { return c.synth.min_clips; }));
    t.push_back(number_field("synth.max_clips", [](RunConfig& c) -> auto& { return c.synth.max_clips; }));
    t.push_back(number_field("synth.min_tokens", [](RunConfig& c) -> auto& { return c.synth.min_tokens; }));
    t.push_back(number_field("synth.max_tokens", [](RunConfig& c) -> auto& { return c.synth.max_tokens; }));
    t.push_back(number_field("synth.video_dim", [](RunConfig& c) -> auto& { return c.synth.video_dim; }));
    t.push_back(number_field("synth.text_dim", [](RunConfig& c) -> auto& { return c.synth.text_dim; }));
    t.push_back(number_field("synth.pattern_bank_size", [](RunConfig& c) -> auto& { return c.synth.pattern_bank_size; }));
    t.push_back(number_field("synth.noise_std", [](RunConfig& c) -> auto& { return c.synth.noise_std; }));
    t.push_back(number_field("synth.min_moments", [](RunConfig& c) -> auto& { return c.synth.min_moments; }));
    t.push_back(number_field("synth.max_moments", [](RunConfig& c) -> auto& { return c.synth.max_moments; }));
    t.push_back(number_field("synth.clip_duration_s", [](RunConfig& c) -> auto& { return c.synth.clip_duration_s; }));
    t.push_back(number_field("synth.seed", [](RunConfig& c) -> auto& { return c.synth.seed; }));
    t.push_back(string_field("synth.id_prefix", [](RunConfig& c) -> auto& { return c.synth.id_prefix; }));
    return t;
  }();
  return table;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

void RunConfig::validate() const {
  check(epochs >= 1, "epochs must be >= 1");
  check(max_steps >= 0, "max_steps must be >= 0");
  check(std::isfinite(lr) && lr > 0.0, "lr must be positive");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
  check(std::isfinite(grad_clip) && grad_clip >= 0.0, "grad_clip must be >= 0 (0 disables clipping)");
  check(eval_every >= 0, "eval_every must be >= 0");
  const auto& m = model;
  check(m.video_dim >= 1 && m.text_dim >= 1, "model input dims must be >= 1");
  check(m.dim >= 1 && m.heads >= 1 && m.dim % m.heads == 0, "model.dim must be a positive multiple of model.heads");
  check(m.ffn_dim >= 1, "model.ffn_dim must be >= 1");
  check(m.dropout >= 0.0 && m.dropout < 1.0, "model.dropout must be in [0,1)");
  check(m.input_dropout >= 0.0 && m.input_dropout < 1.0, "model.input_dropout must be in [0,1)");
  check(m.encoder_layers >= 1 && m.decoder_layers >= 1, "encoder/decoder layers must be >= 1");
  check(m.conv_blocks >= 0, "model.conv_blocks must be >= 0");
  check(m.conv_kernel >= 1 && m.conv_kernel % 2 == 1, "model.conv_kernel must be odd and >= 1");
  check(m.num_queries >= 1, "model.num_queries must be >= 1");
  check(m.loops >= 1, "model.loops must be >= 1");
  check(m.momentum >= 0.0 && m.momentum < 1.0, "model.momentum must be in [0,1)");
  try {
    m.align.validate();
    loss.validate();
    synth.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  check(std::isfinite(metrics.very_good_level), "metrics.very_good_level must be finite");
  check(synth_val_samples >= 0, "synth.val_samples must be >= 0");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& f : fields()) {
    if (f.key == key) return f.get(*this);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "default") return c;
  if (name != "synthetic" && name != "overfit" && name != "ablation") {
    throw ConfigError("unknown preset '" + name + "' (default, synthetic, overfit, ablation)");
  }
  // Desk-scale synthetic benchmark.
  c.model.dim = 128;
  c.model.ffn_dim = 512;
  c.model.video_dim = c.synth.video_dim;
  c.model.text_dim = c.synth.text_dim;
  c.model.align.queue_len = 128;
  c.synth.num_samples = 256;
  c.synth_val_samples = 64;
  c.epochs = 40;
  if (name == "overfit") {
    c.synth.num_samples = 8;
    c.synth_val_samples = 0;
    c.batch_size = 8;
    c.epochs = 200;
    c.max_steps = 200;
    c.eval_every = 0;
    c.lr = 1e-3;
  } else if (name == "ablation") {
    c.epochs = 4;
  }
  return c;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::pair<std::string, std::string> parse_override(const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || trim(item.substr(0, eq)).empty()) {
    throw ConfigError("override '" + item + "' must look like key=value");
  }
  return {trim(item.substr(0, eq)), trim(item.substr(eq + 1))};
}

RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::string preset = "default";
  for (const auto* list : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *list) {
      if (k == "preset") preset = v;
    }
  }
  RunConfig c = preset_config(preset);
  for (const auto* list : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *list) {
      if (k != "preset") c.set(k, v);
    }
  }
  if (const char* env = std::getenv("LD_DETR_SEED"); env != nullptr && *env != '\0') {
    c.set("seed", env);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return build_config(parse_key_values(ss.str()), overrides);
}

}  // namespace ld_detr
