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

#ifndef LD_DETR_DATA_MODEL_HPP_
#define LD_DETR_DATA_MODEL_HPP_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ld_detr {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 matrix. Rows are clips or tokens.
struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> values;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  float& at(std::int64_t r, std::int64_t c) { return values[r * cols + c]; }
  float at(std::int64_t r, std::int64_t c) const { return values[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

/// Normalized temporal interval: center and width as fractions of the video.
struct MomentSpan {
  double center = 0.5;
  double width = 1.0;

  double start() const { return center - width / 2.0; }
  double end() const { return center + width / 2.0; }

  static MomentSpan from_bounds(double start, double end) {
    return {(start + end) / 2.0, end - start};
  }
  /// Clips the interval to [0,1], keeping it non-empty.
  MomentSpan clamped() const;

  bool operator==(const MomentSpan&) const = default;
};

struct FeatureBundle {
  Matrix video_feats;  // t x d_v
  Matrix text_feats;   // n x d_t
  std::vector<std::uint8_t> video_mask;
  std::vector<std::uint8_t> text_mask;
  double clip_duration_s = 2.0;

  std::int64_t num_clips() const { return video_feats.rows; }
  std::int64_t num_tokens() const { return text_feats.rows; }

  bool operator==(const FeatureBundle&) const = default;
};

struct Annotation {
  std::vector<MomentSpan> gt_moments;
  std::vector<double> saliency;  // one score per clip, 0-4 scale

  bool operator==(const Annotation&) const = default;
};

struct Sample {
  std::string id;
  FeatureBundle features;
  Annotation annotation;

  bool operator==(const Sample&) const = default;
};

/// Throws DataError naming the offending field and sample id.
void validate_sample(const Sample& sample);

/// Immutable, cheaply copyable collection of samples.
///
/// Annotation reads go through annotation() / sample() and can be counted
/// with an attached tracker, which is how tests prove that a training pass
/// never looks at held-out labels.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Sample> samples);

  std::size_t size() const { return samples_ ? samples_->size() : 0; }
  bool empty() const { return size() == 0; }

  const std::string& id(std::size_t i) const { return (*samples_)[i].id; }
  const FeatureBundle& features(std::size_t i) const { return (*samples_)[i].features; }
  const Annotation& annotation(std::size_t i) const;
  const Sample& sample(std::size_t i) const;

  /// Raw access for serialization; not tracked.
  const std::vector<Sample>& samples_untracked() const;

  void attach_access_counter(std::shared_ptr<std::atomic<std::int64_t>> counter) {
    access_counter_ = std::move(counter);
  }

 private:
  void note_access() const {
    if (access_counter_) access_counter_->fetch_add(1, std::memory_order_relaxed);
  }

  std::shared_ptr<const std::vector<Sample>> samples_;
  std::shared_ptr<std::atomic<std::int64_t>> access_counter_;
};

// ---------------------------------------------------------------------------
// Manifest (JSON lines, base64 little-endian float32 matrices).

std::string encode_matrix_b64(const Matrix& m);
Matrix decode_matrix_b64(const std::string& b64, std::int64_t rows, std::int64_t cols);

std::string manifest_line(const Sample& sample);
/// Parses one manifest line. line_no is used in error messages only.
Sample parse_manifest_line(const std::string& line, std::size_t line_no);

Dataset load_manifest(const std::filesystem::path& path);
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Prediction interchange (JSON lines).

struct ScoredSpan {
  MomentSpan span;
  double confidence = 0.0;
};

struct QueryPrediction {
  std::string id;
  std::vector<ScoredSpan> pred_moments;
  std::vector<double> pred_saliency;
};

std::string prediction_line(const QueryPrediction& pred);
QueryPrediction parse_prediction_line(const std::string& line, std::size_t line_no);
std::vector<QueryPrediction> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::vector<QueryPrediction>& preds,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Span views in seconds.

std::pair<double, double> span_to_seconds(const MomentSpan& span, std::int64_t num_clips,
                                          double clip_duration_s);
MomentSpan span_from_seconds(double start_s, double end_s, std::int64_t num_clips,
                             double clip_duration_s);

// ---------------------------------------------------------------------------
// Synthetic data with planted moments.

struct SynthConfig {
  std::int64_t num_samples = 256;
  std::int64_t min_clips = 20;
  std::int64_t max_clips = 40;
  std::int64_t min_tokens = 5;
  std::int64_t max_tokens = 12;
  std::int64_t video_dim = 64;
  std::int64_t text_dim = 64;
  std::int64_t pattern_bank_size = 16;
  double noise_std = 0.5;
  std::int64_t min_moments = 1;
  std::int64_t max_moments = 2;
  double clip_duration_s = 2.0;
  std::uint64_t seed = 7;
  std::string id_prefix = "synth";

  void validate() const;
};

/// Pure function of the config (seed included).
///
/// Each sample draws a pattern id. Its query tokens are the pattern's text
/// prototype plus noise. Its video is background noise; clips inside each
/// ground-truth moment get the pattern's visual signature added with an
/// amplitude that plateaus at 1 in the middle half of the moment and falls
/// to 0.5 at the edges. Saliency is the planted signal energy of the clip
/// relative to the peak, scaled to [0,4].
Dataset synth_generate(const SynthConfig& config);

/// Generates num_samples + val_samples samples from one pattern bank and
/// splits them into (train, val) in generation order.
std::pair<Dataset, Dataset> synth_splits(const SynthConfig& config, std::int64_t val_samples);

}  // namespace ld_detr

#endif  // LD_DETR_DATA_MODEL_HPP_
