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

// Drives the ld-detr executable end to end through a temporary directory.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ld_detr/data_model.hpp"
#include "ld_detr/metrics.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ld_detr_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(LD_DETR_CLI) + " " + args + " > " + (work_dir() / "stdout.txt").string() +
                          " 2> " + (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

const std::string kTiny =
    "--set model.dim=16 model.heads=2 model.ffn_dim=32 model.conv_blocks=1 model.num_queries=4 model.loops=2 "
    "align.queue_len=8 synth.num_samples=6 synth.val_samples=3 synth.video_dim=8 synth.text_dim=6 "
    "model.video_dim=8 model.text_dim=6 synth.min_clips=6 synth.max_clips=10 epochs=1 batch_size=3";

}  // namespace

TEST_CASE("usage and configuration errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("train") == 2);
  CHECK(run("synth-data --out " + path("x") + " --set nope=1") == 2);
  CHECK(run("synth-data --out " + path("x") + " --set model.loops=0") == 2);
  CHECK(run("synth-data --out " + path("x") + " --preset huge") == 2);
  CHECK(slurp(work_dir() / "stderr.txt").find("huge") != std::string::npos);
  CHECK(run("eval --preds " + path("missing.jsonl")) == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("data errors exit with code 1 and name the file position") {
  std::ofstream(path("bad.jsonl")) << "{\"id\": 3}\n";
  CHECK(run("eval --preds " + path("bad.jsonl") + " --gt " + path("bad.jsonl")) == 1);
  CHECK(slurp(work_dir() / "stderr.txt").find("line 1") != std::string::npos);
}

TEST_CASE("synth, train, predict and eval round trip") {
  REQUIRE(run("synth-data --out " + path("data") + " " + kTiny) == 0);
  const auto val = ld_detr::load_manifest(path("data/val.jsonl"));
  CHECK(val.size() == 3);
  CHECK(ld_detr::load_manifest(path("data/train.jsonl")).size() == 6);

  REQUIRE(run("train --data " + path("data") + " --out " + path("run") + " " + kTiny) == 0);
  CHECK(fs::exists(path("run/model.pt")));
  CHECK(fs::exists(path("run/config.txt")));
  CHECK(fs::exists(path("run/val_report.json")));
  // Two steps, one JSON object per line plus the epoch evaluation.
  std::ifstream log(path("run/train_log.jsonl"));
  std::string line;
  int steps = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("step")) ++steps;
  }
  CHECK(steps == 2);

  REQUIRE(run("predict --ckpt " + path("run/model.pt") + " --manifest " + path("data/val.jsonl") + " --out " +
              path("preds.jsonl") + " --per-loop-plots " + path("plots")) == 0);
  const auto preds = ld_detr::load_predictions(path("preds.jsonl"));
  REQUIRE(preds.size() == 3);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].pred_moments.size() == 4);
    const auto svg = slurp(work_dir() / "plots" / (val.id(i) + ".svg"));
    std::size_t groups = 0;
    for (auto p = svg.find("<g class=\"loop\""); p != std::string::npos; p = svg.find("<g class=\"loop\"", p + 1)) ++groups;
    CHECK(groups == 2);
  }

  REQUIRE(run("eval --preds " + path("preds.jsonl") + " --gt " + path("data/val.jsonl") + " --report " +
              path("from_preds.json")) == 0);
  REQUIRE(run("eval --ckpt " + path("run/model.pt") + " --split val --report " + path("from_ckpt.json")) == 0);
  const auto a = slurp(work_dir() / "from_preds.json");
  CHECK(a == slurp(work_dir() / "from_ckpt.json"));
  REQUIRE(run("eval --ckpt " + path("run/model.pt") + " --split val --report " + path("again.json")) == 0);
  CHECK(a == slurp(work_dir() / "again.json"));
  const auto j = nlohmann::json::parse(a);
  CHECK(j["num_queries"] == 3);
  CHECK(j.contains("r1_at"));
  CHECK(j.contains("hit_at_1"));

  // Resume extends the run without error.
  CHECK(run("train --resume " + path("run/model.pt") + " --data " + path("data") + " --out " + path("run2")) == 0);
}

TEST_CASE("feature dims that disagree with the checkpoint exit with code 2") {
  REQUIRE(fs::exists(path("run/model.pt")));
  const std::string other = "--set synth.num_samples=2 synth.val_samples=1 synth.video_dim=5 model.video_dim=5";
  REQUIRE(run("synth-data --out " + path("other") + " " + other) == 0);
  CHECK(run("predict --ckpt " + path("run/model.pt") + " --manifest " + path("other/val.jsonl") + " --out " +
            path("p.jsonl")) == 2);
  CHECK(slurp(work_dir() / "stderr.txt").find("dims") != std::string::npos);
}
