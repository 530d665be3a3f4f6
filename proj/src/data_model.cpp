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

#include "ld_detr/data_model.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ld_detr {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kSpanEps = 1e-6;

static_assert(std::endian::native == std::endian::little,
              "manifest matrices are stored little-endian");

std::string sample_error(const std::string& id, const std::string& field,
                         const std::string& what) {
  return "sample '" + id + "': field '" + field + "': " + what;
}

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

bool any_true(const std::vector<std::uint8_t>& mask) {
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

template <typename T>
T require(const ordered_json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError("line " + std::to_string(line_no) + ": missing key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": key '" + key + "': " + e.what());
  }
}

}  // namespace

MomentSpan MomentSpan::clamped() const {
  double s = std::clamp(start(), 0.0, 1.0);
  double e = std::clamp(end(), 0.0, 1.0);
  if (e - s < kSpanEps) {
    // Degenerate after clipping: keep a minimal interval inside [0,1].
    s = std::min(s, 1.0 - kSpanEps);
    e = s + kSpanEps;
  }
  return from_bounds(s, e);
}

void validate_sample(const Sample& s) {
  const auto& f = s.features;
  if (f.video_feats.rows < 1 || f.video_feats.cols < 1) {
    throw DataError(sample_error(s.id, "video_feats", "needs t >= 1 clips and d_v >= 1"));
  }
  if (f.text_feats.rows < 1 || f.text_feats.cols < 1) {
    throw DataError(sample_error(s.id, "text_feats", "needs n >= 1 tokens and d_t >= 1"));
  }
  if (static_cast<std::int64_t>(f.video_feats.values.size()) !=
      f.video_feats.rows * f.video_feats.cols) {
    throw DataError(sample_error(s.id, "video_feats", "value count does not match shape"));
  }
  if (static_cast<std::int64_t>(f.text_feats.values.size()) !=
      f.text_feats.rows * f.text_feats.cols) {
    throw DataError(sample_error(s.id, "text_feats", "value count does not match shape"));
  }
  if (!all_finite(f.video_feats.values)) {
    throw DataError(sample_error(s.id, "video_feats", "contains NaN or Inf"));
  }
  if (!all_finite(f.text_feats.values)) {
    throw DataError(sample_error(s.id, "text_feats", "contains NaN or Inf"));
  }
  if (static_cast<std::int64_t>(f.video_mask.size()) != f.video_feats.rows ||
      !any_true(f.video_mask)) {
    throw DataError(sample_error(s.id, "video_mask", "length must equal t with >= 1 valid clip"));
  }
  if (static_cast<std::int64_t>(f.text_mask.size()) != f.text_feats.rows ||
      !any_true(f.text_mask)) {
    throw DataError(sample_error(s.id, "text_mask", "length must equal n with >= 1 valid token"));
  }
  if (!(f.clip_duration_s > 0.0) || !std::isfinite(f.clip_duration_s)) {
    throw DataError(sample_error(s.id, "clip_duration_s", "must be positive"));
  }
  if (static_cast<std::int64_t>(s.annotation.saliency.size()) != f.video_feats.rows) {
    throw DataError(sample_error(s.id, "saliency", "length must equal t"));
  }
  for (double v : s.annotation.saliency) {
    if (!std::isfinite(v)) throw DataError(sample_error(s.id, "saliency", "contains NaN or Inf"));
  }
  for (const auto& m : s.annotation.gt_moments) {
    if (!(m.width > 0.0) || m.width > 1.0 + kSpanEps) {
      throw DataError(sample_error(s.id, "gt_moments", "width must be in (0,1]"));
    }
    if (m.start() < -kSpanEps || m.end() > 1.0 + kSpanEps) {
      throw DataError(sample_error(s.id, "gt_moments", "span leaves [0,1]"));
    }
  }
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<Sample> samples)
    : samples_(std::make_shared<const std::vector<Sample>>(std::move(samples))) {}

const Annotation& Dataset::annotation(std::size_t i) const {
  note_access();
  return (*samples_)[i].annotation;
}

const Sample& Dataset::sample(std::size_t i) const {
  note_access();
  return (*samples_)[i];
}

const std::vector<Sample>& Dataset::samples_untracked() const {
  static const std::vector<Sample> kEmpty;
  return samples_ ? *samples_ : kEmpty;
}

// ---------------------------------------------------------------------------

std::string encode_matrix_b64(const Matrix& m) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.values.data());
  const int n = static_cast<int>(m.values.size() * sizeof(float));
  std::string out(4 * ((n + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes, n);
  out.resize(static_cast<std::size_t>(written));
  return out;
}

Matrix decode_matrix_b64(const std::string& b64, std::int64_t rows, std::int64_t cols) {
  if (b64.size() % 4 != 0) throw DataError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> raw(b64.size() / 4 * 3);
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(b64.data()),
                                static_cast<int>(b64.size()));
  if (n < 0) throw DataError("malformed base64 payload");
  std::size_t pad = 0;
  if (!b64.empty() && b64.back() == '=') ++pad;
  if (b64.size() > 1 && b64[b64.size() - 2] == '=') ++pad;
  const std::size_t bytes = static_cast<std::size_t>(n) - pad;
  const std::size_t expected = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (bytes != expected) {
    throw DataError("matrix payload has " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected));
  }
  Matrix m(rows, cols);
  std::memcpy(m.values.data(), raw.data(), expected);
  return m;
}

std::string manifest_line(const Sample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["t"] = s.features.video_feats.rows;
  j["n"] = s.features.text_feats.rows;
  j["d_v"] = s.features.video_feats.cols;
  j["d_t"] = s.features.text_feats.cols;
  j["clip_duration_s"] = s.features.clip_duration_s;
  j["video_feats_b64"] = encode_matrix_b64(s.features.video_feats);
  j["text_feats_b64"] = encode_matrix_b64(s.features.text_feats);
  auto moments = ordered_json::array();
  for (const auto& m : s.annotation.gt_moments) moments.push_back({m.center, m.width});
  j["gt_moments"] = std::move(moments);
  j["saliency"] = s.annotation.saliency;
  return j.dump();
}

Sample parse_manifest_line(const std::string& line, std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("line " + std::to_string(line_no) + ": JSON parse error: " + e.what());
  }
  Sample s;
  s.id = require<std::string>(j, "id", line_no);
  const auto t = require<std::int64_t>(j, "t", line_no);
  const auto n = require<std::int64_t>(j, "n", line_no);
  const auto d_v = require<std::int64_t>(j, "d_v", line_no);
  const auto d_t = require<std::int64_t>(j, "d_t", line_no);
  const auto where = [&](const std::string& msg) {
    return "line " + std::to_string(line_no) + ": " + msg;
  };
  if (t < 1 || d_v < 1) throw DataError(where(sample_error(s.id, "video_feats", "t and d_v must be >= 1")));
  if (n < 1 || d_t < 1) throw DataError(where(sample_error(s.id, "text_feats", "n and d_t must be >= 1")));
  s.features.clip_duration_s = require<double>(j, "clip_duration_s", line_no);
  try {
    s.features.video_feats = decode_matrix_b64(require<std::string>(j, "video_feats_b64", line_no), t, d_v);
  } catch (const DataError& e) {
    throw DataError(where(sample_error(s.id, "video_feats", e.what())));
  }
  try {
    s.features.text_feats = decode_matrix_b64(require<std::string>(j, "text_feats_b64", line_no), n, d_t);
  } catch (const DataError& e) {
    throw DataError(where(sample_error(s.id, "text_feats", e.what())));
  }
  s.features.video_mask.assign(static_cast<std::size_t>(t), 1);
  s.features.text_mask.assign(static_cast<std::size_t>(n), 1);
  for (const auto& pair : require<std::vector<std::vector<double>>>(j, "gt_moments", line_no)) {
    if (pair.size() != 2) {
      throw DataError(where(sample_error(s.id, "gt_moments", "entries must be [center,width]")));
    }
    s.annotation.gt_moments.push_back({pair[0], pair[1]});
  }
  s.annotation.saliency = require<std::vector<double>>(j, "saliency", line_no);
  try {
    validate_sample(s);
  } catch (const DataError& e) {
    throw DataError(where(e.what()));
  }
  return s;
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    samples.push_back(parse_manifest_line(line, line_no));
  }
  return Dataset(std::move(samples));
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& s : dataset.samples_untracked()) out << manifest_line(s) << '\n';
}

// ---------------------------------------------------------------------------

std::string prediction_line(const QueryPrediction& p) {
  ordered_json j;
  j["id"] = p.id;
  auto moments = ordered_json::array();
  for (const auto& m : p.pred_moments) moments.push_back({m.span.center, m.span.width, m.confidence});
  j["pred_moments"] = std::move(moments);
  j["pred_saliency"] = p.pred_saliency;
  return j.dump();
}

QueryPrediction parse_prediction_line(const std::string& line, std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("line " + std::to_string(line_no) + ": JSON parse error: " + e.what());
  }
  QueryPrediction p;
  p.id = require<std::string>(j, "id", line_no);
  for (const auto& triple : require<std::vector<std::vector<double>>>(j, "pred_moments", line_no)) {
    if (triple.size() != 3) {
      throw DataError("line " + std::to_string(line_no) +
                      ": pred_moments entries must be [center,width,confidence]");
    }
    p.pred_moments.push_back({{triple[0], triple[1]}, triple[2]});
  }
  p.pred_saliency = require<std::vector<double>>(j, "pred_saliency", line_no);
  return p;
}

std::vector<QueryPrediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::vector<QueryPrediction> preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    preds.push_back(parse_prediction_line(line, line_no));
  }
  return preds;
}

void save_predictions(const std::vector<QueryPrediction>& preds,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions " + path.string());
  for (const auto& p : preds) out << prediction_line(p) << '\n';
}

// ---------------------------------------------------------------------------

std::pair<double, double> span_to_seconds(const MomentSpan& span, std::int64_t num_clips,
                                          double clip_duration_s) {
  const double total = static_cast<double>(num_clips) * clip_duration_s;
  return {span.start() * total, span.end() * total};
}

MomentSpan span_from_seconds(double start_s, double end_s, std::int64_t num_clips,
                             double clip_duration_s) {
  const double total = static_cast<double>(num_clips) * clip_duration_s;
  return MomentSpan::from_bounds(start_s / total, end_s / total);
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw DataError(std::string("invalid synth config: ") + what);
  };
  check(num_samples >= 1, "num_samples must be >= 1");
  check(min_clips >= 1 && max_clips >= min_clips, "clip range must satisfy 1 <= min <= max");
  check(min_tokens >= 1 && max_tokens >= min_tokens, "token range must satisfy 1 <= min <= max");
  check(video_dim >= 1 && text_dim >= 1, "feature dims must be >= 1");
  check(pattern_bank_size >= 1, "pattern_bank_size must be >= 1");
  check(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std must be >= 0");
  check(min_moments >= 1 && max_moments >= min_moments, "moment range must satisfy 1 <= min <= max");
  check(clip_duration_s > 0.0, "clip_duration_s must be positive");
}

namespace {

struct PlantedMoment {
  std::int64_t first_clip;
  std::int64_t length;
};

// Non-overlapping moments on the clip grid. Falls back to fewer moments when
// the video is too short to fit the requested count.
std::vector<PlantedMoment> place_moments(std::mt19937_64& rng, std::int64_t t,
                                         std::int64_t count) {
  const std::int64_t min_len = std::max<std::int64_t>(1, t / 8);
  const std::int64_t max_len = std::max(min_len, t / 3);
  std::vector<PlantedMoment> placed;
  std::vector<std::uint8_t> used(static_cast<std::size_t>(t), 0);
  for (std::int64_t k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 32; ++attempt) {
      const std::int64_t len = std::uniform_int_distribution<std::int64_t>(min_len, max_len)(rng);
      if (len > t) continue;
      const std::int64_t first = std::uniform_int_distribution<std::int64_t>(0, t - len)(rng);
      bool free = true;
      // One clip of clearance keeps neighbouring moments distinct.
      for (std::int64_t c = std::max<std::int64_t>(0, first - 1);
           c < std::min(t, first + len + 1); ++c) {
        if (used[static_cast<std::size_t>(c)]) free = false;
      }
      if (!free) continue;
      for (std::int64_t c = first; c < first + len; ++c) used[static_cast<std::size_t>(c)] = 1;
      placed.push_back({first, len});
      break;
    }
  }
  if (placed.empty()) placed.push_back({0, t});
  std::sort(placed.begin(), placed.end(),
            [](const PlantedMoment& a, const PlantedMoment& b) { return a.first_clip < b.first_clip; });
  return placed;
}

double planted_amplitude(std::int64_t clip, const PlantedMoment& m) {
  const double u = (static_cast<double>(clip - m.first_clip) + 0.5) / static_cast<double>(m.length);
  const double dist = std::abs(u - 0.5);
  if (dist <= 0.25) return 1.0;
  return 1.0 - (dist - 0.25) / 0.25 * 0.5;
}

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix text_protos(config.pattern_bank_size, config.text_dim);
  Matrix visual_sigs(config.pattern_bank_size, config.video_dim);
  for (auto& v : text_protos.values) v = static_cast<float>(normal(rng));
  for (auto& v : visual_sigs.values) v = static_cast<float>(normal(rng));

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(config.num_samples));
  for (std::int64_t i = 0; i < config.num_samples; ++i) {
    const auto t = std::uniform_int_distribution<std::int64_t>(config.min_clips, config.max_clips)(rng);
    const auto n = std::uniform_int_distribution<std::int64_t>(config.min_tokens, config.max_tokens)(rng);
    const auto pattern =
        std::uniform_int_distribution<std::int64_t>(0, config.pattern_bank_size - 1)(rng);
    const auto count =
        std::uniform_int_distribution<std::int64_t>(config.min_moments, config.max_moments)(rng);
    const auto moments = place_moments(rng, t, count);

    Sample s;
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%05lld", config.id_prefix.c_str(), static_cast<long long>(i));
    s.id = id;
    auto& f = s.features;
    f.clip_duration_s = config.clip_duration_s;
    f.video_feats = Matrix(t, config.video_dim);
    f.text_feats = Matrix(n, config.text_dim);
    f.video_mask.assign(static_cast<std::size_t>(t), 1);
    f.text_mask.assign(static_cast<std::size_t>(n), 1);

    for (std::int64_t tok = 0; tok < n; ++tok) {
      for (std::int64_t c = 0; c < config.text_dim; ++c) {
        f.text_feats.at(tok, c) = static_cast<float>(text_protos.at(pattern, c) +
                                                     config.noise_std * normal(rng));
      }
    }

    std::vector<double> amplitude(static_cast<std::size_t>(t), 0.0);
    for (const auto& m : moments) {
      for (std::int64_t c = m.first_clip; c < m.first_clip + m.length; ++c) {
        amplitude[static_cast<std::size_t>(c)] = planted_amplitude(c, m);
      }
    }
    for (std::int64_t clip = 0; clip < t; ++clip) {
      const double a = amplitude[static_cast<std::size_t>(clip)];
      for (std::int64_t c = 0; c < config.video_dim; ++c) {
        f.video_feats.at(clip, c) = static_cast<float>(config.noise_std * normal(rng) +
                                                       a * visual_sigs.at(pattern, c));
      }
    }

    s.annotation.saliency.resize(static_cast<std::size_t>(t));
    for (std::int64_t clip = 0; clip < t; ++clip) {
      const double a = amplitude[static_cast<std::size_t>(clip)];
      s.annotation.saliency[static_cast<std::size_t>(clip)] = 4.0 * a * a;
    }
    for (const auto& m : moments) {
      s.annotation.gt_moments.push_back(
          MomentSpan::from_bounds(static_cast<double>(m.first_clip) / static_cast<double>(t),
                                  static_cast<double>(m.first_clip + m.length) / static_cast<double>(t)));
    }
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples));
}

std::pair<Dataset, Dataset> synth_splits(const SynthConfig& config, std::int64_t val_samples) {
  if (val_samples < 0) throw DataError("invalid synth config: val_samples must be >= 0");
  SynthConfig all = config;
  all.num_samples = config.num_samples + val_samples;
  const Dataset full = synth_generate(all);
  const auto& samples = full.samples_untracked();
  const auto split = samples.begin() + config.num_samples;
  return {Dataset(std::vector<Sample>(samples.begin(), split)), Dataset(std::vector<Sample>(split, samples.end()))};
}

}  // namespace ld_detr
