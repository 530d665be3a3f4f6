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

#include "ld_detr/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include "ld_detr/batch.hpp"
#include "ld_detr/evaluation.hpp"

namespace ld_detr {

namespace {

torch::Tensor text_tensor(const std::string& s) {
  auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kUInt8);
  std::copy(s.begin(), s.end(), reinterpret_cast<char*>(t.data_ptr<std::uint8_t>()));
  return t;
}

std::string tensor_text(const torch::Tensor& t) {
  auto c = t.contiguous();
  const char* p = reinterpret_cast<const char*>(c.data_ptr<std::uint8_t>());
  return std::string(p, p + c.numel());
}

torch::Tensor scalar64(std::int64_t v) { return torch::tensor(v, torch::kInt64); }

std::int64_t read_int(torch::serialize::InputArchive& a, const std::string& key) {
  torch::Tensor t;
  a.read(key, t);
  return t.item<std::int64_t>();
}

std::string read_text(torch::serialize::InputArchive& a, const std::string& key) {
  torch::Tensor t;
  a.read(key, t);
  return tensor_text(t);
}

torch::Tensor torch_rng_state() {
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  return gen.get_state();
}

void set_torch_rng_state(const torch::Tensor& state) {
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(state);
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

// Installs `state` as the default generator state for the scope, then
// stores the advanced state back and restores the previous global state.
class RngScope {
 public:
  explicit RngScope(torch::Tensor& state) : state_(state), saved_(torch_rng_state()) {
    set_torch_rng_state(state_);
  }
  ~RngScope() {
    state_ = torch_rng_state();
    set_torch_rng_state(saved_);
  }
  RngScope(const RngScope&) = delete;
  RngScope& operator=(const RngScope&) = delete;

 private:
  torch::Tensor& state_;
  torch::Tensor saved_;
};

bool all_finite(const torch::Tensor& t) { return !t.defined() || torch::isfinite(t).all().item<bool>(); }

// Keys that fix the parameter shapes of a model.
bool same_architecture(const RunConfig& a, const RunConfig& b) {
  for (const auto& k : RunConfig::keys()) {
    if (k.rfind("model.", 0) != 0 && k != "align.queue_len") continue;
    if (a.get(k) != b.get(k)) return false;
  }
  return true;
}

}  // namespace

RunConfig config_from_text(const std::string& text) {
  RunConfig c;
  for (const auto& [k, v] : parse_key_values(text)) c.set(k, v);
  c.validate();
  return c;
}

Trainer::Trainer(const RunConfig& config, Dataset train, Dataset val)
    : config_(config), train_(std::move(train)), val_(std::move(val)), rng_(config.seed) {
  config_.validate();
  if (train_.empty()) throw ConfigError("training split is empty");
  const auto& f = train_.features(0);
  if (f.video_feats.cols != config_.model.video_dim || f.text_feats.cols != config_.model.text_dim) {
    throw ConfigError("data feature dims (" + std::to_string(f.video_feats.cols) + ", " +
                      std::to_string(f.text_feats.cols) + ") do not match model.video_dim/model.text_dim (" +
                      std::to_string(config_.model.video_dim) + ", " + std::to_string(config_.model.text_dim) +
                      ")");
  }
  const auto global = torch_rng_state();
  torch::manual_seed(config_.seed);
  model_ = LdDetr(config_.model);
  torch_rng_ = torch_rng_state();
  set_torch_rng_state(global);
  for (const auto& p : model_->parameters()) {
    if (p.requires_grad()) trainable_.push_back(p);
  }
  optimizer_ = std::make_unique<torch::optim::AdamW>(
      trainable_, torch::optim::AdamWOptions(config_.lr).weight_decay(config_.weight_decay));
}

bool Trainer::done() const {
  if (config_.max_steps > 0 && step_ >= config_.max_steps) return true;
  const bool epoch_finished = !order_.empty() && cursor_ >= static_cast<std::int64_t>(order_.size());
  return epoch_ + (epoch_finished ? 1 : 0) >= config_.epochs;
}

void Trainer::begin_epoch_if_needed() {
  if (!order_.empty() && cursor_ < static_cast<std::int64_t>(order_.size())) return;
  if (!order_.empty()) ++epoch_;
  order_.resize(train_.size());
  std::iota(order_.begin(), order_.end(), std::int64_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

StepRecord Trainer::step() {
  begin_epoch_if_needed();
  const auto n = static_cast<std::int64_t>(order_.size());
  const auto end = std::min(n, cursor_ + config_.batch_size);
  std::vector<std::size_t> idx(order_.begin() + cursor_, order_.begin() + end);
  const Batch batch = pad_batch(train_, idx);
  RngScope rng_scope(torch_rng_);

  model_->train();
  const ModelOutput out = model_->forward(batch);
  StepRecord rec;
  rec.epoch = epoch_;
  const bool outputs_finite = all_finite(out.moments.spans) && all_finite(out.moments.logits) &&
                              all_finite(out.saliency.scores);
  LossBreakdown loss;
  if (outputs_finite) {
    loss = compute_losses(out, batch, config_.loss);
    rec.total = scalar(loss.total);
    rec.mr = scalar(loss.mr.total);
    rec.hd = scalar(loss.hd.total);
    rec.align = scalar(loss.align.total);
  } else {
    rec.total = std::numeric_limits<double>::quiet_NaN();
  }
  if (!std::isfinite(rec.total)) {
    std::ostringstream msg;
    msg << "non-finite " << (outputs_finite ? "loss" : "model output") << " at step " << step_ + 1 << " (epoch "
        << epoch_ << "): total=" << rec.total << " mr=" << rec.mr << " hd=" << rec.hd << " align=" << rec.align
        << "; batch ids:";
    for (const auto& id : batch.ids) msg << ' ' << id;
    if (snapshot_dir_) {
      std::filesystem::create_directories(*snapshot_dir_);
      save(*snapshot_dir_ / "nan_snapshot.pt");
      std::ofstream(*snapshot_dir_ / "nan_snapshot.txt") << msg.str() << '\n';
      msg << "; snapshot written to " << (*snapshot_dir_ / "nan_snapshot.pt").string();
    }
    throw NumericalError(msg.str());
  }

  optimizer_->zero_grad();
  loss.total.backward();
  if (config_.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(trainable_, config_.grad_clip);
  optimizer_->step();
  {
    torch::NoGradGuard no_grad;
    model_->momentum_update();
    model_->queue_push(out);
  }
  cursor_ = end;
  ++step_;
  rec.step = step_;
  return rec;
}

std::vector<StepRecord> Trainer::run(std::ostream* log) {
  std::vector<StepRecord> records;
  while (!done()) {
    const auto rec = step();
    records.push_back(rec);
    if (log) {
      *log << "{\"step\":" << rec.step << ",\"epoch\":" << rec.epoch << ",\"loss\":" << rec.total
           << ",\"mr\":" << rec.mr << ",\"hd\":" << rec.hd << ",\"align\":" << rec.align << "}\n";
    }
    const bool epoch_end = cursor_ >= static_cast<std::int64_t>(order_.size());
    if (epoch_end && config_.eval_every > 0 && !val_.empty() && (epoch_ + 1) % config_.eval_every == 0) {
      last_eval_ = evaluate_model(model_, val_, config_.batch_size, config_.metrics);
      if (log) {
        nlohmann::ordered_json j;
        j["epoch"] = epoch_;
        j["val"] = last_eval_->to_json(false);
        *log << j.dump() << '\n';
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------

void Trainer::save(std::ostream& out) const {
  torch::serialize::OutputArchive archive;
  torch::serialize::OutputArchive model_archive;
  model_->save(model_archive);
  archive.write("model", model_archive);

  // Optimizer state keyed by parameter position, not by address.
  const auto& state = optimizer_->state();
  archive.write("optim/count", scalar64(static_cast<std::int64_t>(trainable_.size())));
  for (std::size_t i = 0; i < trainable_.size(); ++i) {
    const std::string prefix = "optim/" + std::to_string(i) + "/";
    auto it = state.find(trainable_[i].unsafeGetTensorImpl());
    if (it == state.end()) {
      archive.write(prefix + "step", scalar64(0));
      continue;
    }
    const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    archive.write(prefix + "step", scalar64(s.step()));
    archive.write(prefix + "exp_avg", s.exp_avg(), true);
    archive.write(prefix + "exp_avg_sq", s.exp_avg_sq(), true);
  }

  std::ostringstream rng_text;
  rng_text << rng_;
  archive.write("meta/step", scalar64(step_));
  archive.write("meta/epoch", scalar64(epoch_));
  archive.write("meta/cursor", scalar64(cursor_));
  archive.write("meta/order", torch::tensor(order_, torch::kInt64));
  archive.write("meta/torch_rng", torch_rng_);
  archive.write("meta/rng", text_tensor(rng_text.str()));
  archive.write("meta/config", text_tensor(config_.to_text()));
  archive.write("meta/data_dir", text_tensor(data_dir_));
  archive.save_to(out);
}

void Trainer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save(out);
}

void Trainer::load(std::istream& in) {
  torch::serialize::InputArchive archive;
  archive.load_from(in);
  const RunConfig stored = config_from_text(read_text(archive, "meta/config"));
  if (!same_architecture(stored, config_)) {
    throw ConfigError("checkpoint model configuration differs from the trainer's");
  }
  torch::serialize::InputArchive model_archive;
  archive.read("model", model_archive);
  model_->load(model_archive);

  const auto count = read_int(archive, "optim/count");
  if (count != static_cast<std::int64_t>(trainable_.size())) {
    throw ConfigError("checkpoint optimizer has " + std::to_string(count) + " parameters, model has " +
                      std::to_string(trainable_.size()));
  }
  auto& state = optimizer_->state();
  state.clear();
  for (std::size_t i = 0; i < trainable_.size(); ++i) {
    const std::string prefix = "optim/" + std::to_string(i) + "/";
    const auto steps = read_int(archive, prefix + "step");
    if (steps == 0) continue;
    auto s = std::make_unique<torch::optim::AdamWParamState>();
    torch::Tensor exp_avg, exp_avg_sq;
    archive.read(prefix + "exp_avg", exp_avg, true);
    archive.read(prefix + "exp_avg_sq", exp_avg_sq, true);
    s->step(steps);
    s->exp_avg(exp_avg);
    s->exp_avg_sq(exp_avg_sq);
    state[trainable_[i].unsafeGetTensorImpl()] = std::move(s);
  }

  step_ = read_int(archive, "meta/step");
  epoch_ = read_int(archive, "meta/epoch");
  cursor_ = read_int(archive, "meta/cursor");
  torch::Tensor order;
  archive.read("meta/order", order);
  order_.assign(order.data_ptr<std::int64_t>(), order.data_ptr<std::int64_t>() + order.numel());
  torch::Tensor torch_rng;
  archive.read("meta/torch_rng", torch_rng);
  torch_rng_ = torch_rng;
  std::istringstream rng_text(read_text(archive, "meta/rng"));
  rng_text >> rng_;
  data_dir_ = read_text(archive, "meta/data_dir");
  // The run continues under the stored hyperparameters.
  config_ = stored;
  for (auto& group : optimizer_->param_groups()) {
    auto& o = static_cast<torch::optim::AdamWOptions&>(group.options());
    o.lr(config_.lr);
    o.weight_decay(config_.weight_decay);
  }
}

void Trainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  load(in);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  CheckpointInfo info;
  info.config = config_from_text(read_text(archive, "meta/config"));
  info.data_dir = read_text(archive, "meta/data_dir");
  return info;
}

LdDetr load_model(const std::filesystem::path& path, RunConfig* config_out) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  const RunConfig cfg = config_from_text(read_text(archive, "meta/config"));
  LdDetr model(cfg.model);
  torch::serialize::InputArchive model_archive;
  archive.read("model", model_archive);
  model->load(model_archive);
  if (config_out) *config_out = cfg;
  return model;
}

}  // namespace ld_detr
