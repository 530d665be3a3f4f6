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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "ld_detr/data_model.hpp"

using namespace ld_detr;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth(std::uint64_t seed = 3) {
  SynthConfig s;
  s.num_samples = 12;
  s.min_clips = 8;
  s.max_clips = 16;
  s.video_dim = 5;
  s.text_dim = 4;
  s.seed = seed;
  return s;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("ld_detr_test_" + name); }

}  // namespace

TEST_CASE("MomentSpan bounds and clamping") {
  const auto m = MomentSpan::from_bounds(0.2, 0.6);
  CHECK(m.center == doctest::Approx(0.4));
  CHECK(m.width == doctest::Approx(0.4));
  const auto c = MomentSpan{0.95, 0.3}.clamped();
  CHECK(c.start() == doctest::Approx(0.8));
  CHECK(c.end() == doctest::Approx(1.0));
  const auto d = MomentSpan{1.5, 0.2}.clamped();
  CHECK(d.width > 0.0);
  CHECK(d.end() <= 1.0 + 1e-12);
}

TEST_CASE("span seconds conversion round-trips") {
  const auto m = span_from_seconds(4.0, 10.0, 10, 2.0);
  CHECK(m.start() == doctest::Approx(0.2));
  CHECK(m.end() == doctest::Approx(0.5));
  const auto [s, e] = span_to_seconds(m, 10, 2.0);
  CHECK(s == doctest::Approx(4.0));
  CHECK(e == doctest::Approx(10.0));
}

TEST_CASE("matrix base64 round trip is exact") {
  Matrix m(3, 2);
  m.values = {1.5f, -2.25f, 3.0e-8f, 1e30f, -0.0f, 7.0f};
  const auto back = decode_matrix_b64(encode_matrix_b64(m), 3, 2);
  CHECK(back == m);
  CHECK_THROWS_AS(decode_matrix_b64(encode_matrix_b64(m), 2, 2), DataError);
  CHECK_THROWS_AS(decode_matrix_b64("abc", 1, 1), DataError);
}

TEST_CASE("synthetic data is deterministic and well formed") {
  const auto a = synth_generate(small_synth(3));
  const auto b = synth_generate(small_synth(3));
  const auto c = synth_generate(small_synth(4));
  CHECK(a.samples_untracked() == b.samples_untracked());
  CHECK_FALSE(a.samples_untracked() == c.samples_untracked());
  for (const auto& s : a.samples_untracked()) {
    validate_sample(s);
    const auto t = s.features.num_clips();
    CHECK(t >= 8);
    CHECK(t <= 16);
    CHECK(static_cast<std::int64_t>(s.annotation.saliency.size()) == t);
    REQUIRE_FALSE(s.annotation.gt_moments.empty());
    bool has_top_level = false;
    for (const auto& m : s.annotation.gt_moments) {
      // Moments lie on the clip grid.
      const double first = m.start() * static_cast<double>(t);
      const double last = m.end() * static_cast<double>(t);
      CHECK(std::abs(first - std::round(first)) < 1e-9);
      CHECK(std::abs(last - std::round(last)) < 1e-9);
      for (auto k = static_cast<std::int64_t>(std::round(first)); k < static_cast<std::int64_t>(std::round(last)); ++k) {
        CHECK(s.annotation.saliency[static_cast<std::size_t>(k)] > 1.0);
        if (s.annotation.saliency[static_cast<std::size_t>(k)] >= 4.0) has_top_level = true;
      }
    }
    CHECK(has_top_level);
    // Background clips carry zero saliency.
    for (std::int64_t k = 0; k < t; ++k) {
      const double center = (static_cast<double>(k) + 0.5) / static_cast<double>(t);
      bool inside = false;
      for (const auto& m : s.annotation.gt_moments) inside = inside || (center > m.start() && center < m.end());
      if (!inside) CHECK(s.annotation.saliency[static_cast<std::size_t>(k)] == 0.0);
    }
  }
}

TEST_CASE("synthetic splits share one generator run") {
  auto cfg = small_synth(5);
  const auto [train, val] = synth_splits(cfg, 4);
  CHECK(train.size() == 12);
  CHECK(val.size() == 4);
  auto all = cfg;
  all.num_samples = 16;
  const auto full = synth_generate(all);
  CHECK(val.samples_untracked().front() == full.samples_untracked()[12]);
}

TEST_CASE("manifest round trip preserves every field") {
  const auto data = synth_generate(small_synth(6));
  const auto path = temp_file("manifest.jsonl");
  save_manifest(data, path);
  const auto back = load_manifest(path);
  fs::remove(path);
  CHECK(back.samples_untracked() == data.samples_untracked());
}

TEST_CASE("manifest errors carry line number, field and id") {
  const auto data = synth_generate(small_synth(7));
  const std::string good = manifest_line(data.samples_untracked()[0]);
  SUBCASE("parse error") {
    const auto msg = error_of([] { parse_manifest_line("{not json", 5); });
    CHECK(msg.find("line 5") != std::string::npos);
  }
  SUBCASE("missing key") {
    auto j = nlohmann::json::parse(good);
    j.erase("saliency");
    const auto msg = error_of([&] { parse_manifest_line(j.dump(), 3); });
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("saliency") != std::string::npos);
  }
  SUBCASE("invariant violation names field and sample") {
    auto j = nlohmann::json::parse(good);
    j["saliency"].push_back(1.0);
    const auto msg = error_of([&] { parse_manifest_line(j.dump(), 9); });
    CHECK(msg.find("saliency") != std::string::npos);
    CHECK(msg.find(data.samples_untracked()[0].id) != std::string::npos);
  }
  SUBCASE("span outside the video") {
    auto j = nlohmann::json::parse(good);
    j["gt_moments"] = {{0.95, 0.5}};
    const auto msg = error_of([&] { parse_manifest_line(j.dump(), 2); });
    CHECK(msg.find("gt_moments") != std::string::npos);
  }
  SUBCASE("load reports the failing line") {
    const auto path = temp_file("bad_manifest.jsonl");
    std::ofstream(path) << good << "\n" << good << "\n{\"id\":1}\n";
    const auto msg = error_of([&] { load_manifest(path); });
    fs::remove(path);
    CHECK(msg.find("line 3") != std::string::npos);
  }
}

TEST_CASE("validate_sample rejects broken bundles") {
  auto s = synth_generate(small_synth(8)).samples_untracked()[0];
  SUBCASE("NaN feature") {
    s.features.video_feats.values[0] = std::nanf("");
    CHECK(error_of([&] { validate_sample(s); }).find("video_feats") != std::string::npos);
  }
  SUBCASE("all-false mask") {
    s.features.text_mask.assign(s.features.text_mask.size(), 0);
    CHECK(error_of([&] { validate_sample(s); }).find("text_mask") != std::string::npos);
  }
  SUBCASE("non-positive clip duration") {
    s.features.clip_duration_s = 0.0;
    CHECK(error_of([&] { validate_sample(s); }).find("clip_duration_s") != std::string::npos);
  }
}

TEST_CASE("annotation reads are counted, feature reads are not") {
  auto data = synth_generate(small_synth(9));
  auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
  data.attach_access_counter(counter);
  (void)data.features(0);
  (void)data.id(1);
  CHECK(counter->load() == 0);
  (void)data.annotation(2);
  (void)data.sample(3);
  CHECK(counter->load() == 2);
}

TEST_CASE("prediction file round trip") {
  std::vector<QueryPrediction> preds(2);
  preds[0] = {"a", {{{0.3, 0.2}, 0.9}, {{0.7, 0.1}, 0.123456789012345}}, {0.1, -2.5, 3.25}};
  preds[1] = {"b", {{{0.5, 1.0}, 0.5}}, {1.0}};
  const auto path = temp_file("preds.jsonl");
  save_predictions(preds, path);
  const auto back = load_predictions(path);
  fs::remove(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].pred_moments[1].confidence == preds[0].pred_moments[1].confidence);
  CHECK(back[0].pred_moments[1].span == preds[0].pred_moments[1].span);
  CHECK(back[0].pred_saliency == preds[0].pred_saliency);
  CHECK_THROWS_AS(parse_prediction_line("{\"id\":\"x\",\"pred_moments\":[[0.1,0.2]],\"pred_saliency\":[]}", 4),
                  DataError);
}

TEST_CASE("synth config validation") {
  auto s = small_synth();
  s.min_clips = 0;
  CHECK_THROWS_AS(synth_generate(s), DataError);
  s = small_synth();
  s.noise_std = -1.0;
  CHECK_THROWS_AS(synth_generate(s), DataError);
}
