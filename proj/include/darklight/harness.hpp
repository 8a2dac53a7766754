// Copyright 2026 The darklight Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "darklight/dai_net.hpp"
#include "darklight/retinex.hpp"
#include "darklight/scenes.hpp"
#include "json.hpp"

namespace darklight {

// One row of the component ladder.
struct AblationConfig {
  std::string name = "baseline";
  bool disp = false;                  // train on the synthetic low-light member too
  std::optional<DecoderTarget> rd;    // auxiliary decoder and its target
  bool lp = false;                    // image penalty on interchanged reconstructions
  bool lrc = false;                   // redecomposition coherence
  std::optional<MfaDistance> mfa;     // feature alignment distance

  void validate() const;
  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& j);
};

// The eleven ladder rows in table order: baseline, disp, rd_r, rd_l, rd_rl,
// rd_r_lp, rd_r_lrc, rd_r_lp_lrc, full (KL), full_l1, full_l2.
const std::vector<AblationConfig>& ladder_configs();
const AblationConfig& ladder_config(const std::string& name);

struct TrainConfig {
  AblationConfig ablation;
  BackboneConfig backbone;
  int decoder_depth = 2;
  LossWeights weights;
  SsimConfig ssim;
  int steps = 500;
  int batch = 8;
  double lr = 3e-3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Frozen-decomposer outputs for both members of a training pair.
struct PseudoTruth {
  DecompositionPair n;
  DecompositionPair l;
};
std::vector<PseudoTruth> compute_pseudo_truth(const DecompNet& net, const std::vector<PairedSample>& pairs);

struct StepLog {
  int step = 0;
  std::map<std::string, double> components;
  double total = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  DaiNet net;
  std::vector<StepLog> log;
};

// Thrown on a non-finite loss; carries the weights from before the failing step.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int step, WeightArchive last_good)
      : std::runtime_error(what), step_(step), last_good_(std::move(last_good)) {}
  int step() const { return step_; }
  const WeightArchive& last_good() const { return last_good_; }

 private:
  int step_;
  WeightArchive last_good_;
};

// `pseudo` must be parallel to `pairs` when the configuration decodes.
// Each step's losses go to `log_jsonl` as one JSON line when given.
TrainResult train(const TrainConfig& cfg, const std::vector<PairedSample>& pairs,
                  const std::vector<PseudoTruth>* pseudo = nullptr, std::ostream* log_jsonl = nullptr);

// Builds every loss component for one pair under `cfg` (shared by train and
// the gradient tests).
LossComponents pair_components(const DaiNet& net, const TrainConfig& cfg, const PairedSample& pair,
                               const PseudoTruth* pseudo);

// ---- evaluation ------------------------------------------------------------

struct PrPoint {
  double score = 0, precision = 0, recall = 0;
};

struct EvalReport {
  double map_50 = 0;
  std::vector<PrPoint> curve;  // one point per ranked detection
  std::size_t images = 0, ground_truth = 0, detections = 0, true_positives = 0;

  nlohmann::json to_json() const;
};

// Ranks all detections by score (ties by image, then input order), matches
// each to the highest-IoU unmatched box of its image at IoU >= threshold, and
// integrates the all-point interpolated precision over recall.
EvalReport average_precision(const std::vector<std::vector<Detection>>& detections,
                             const std::vector<std::vector<Box>>& ground_truth, double iou_threshold = 0.5);

// Runs only the detection path of `net`.
EvalReport evaluate_map(const DaiNet& net, const std::vector<Scene>& dataset, double iou_threshold = 0.5);

struct ChannelStats {
  std::vector<double> welllit;
  std::vector<double> dark;
  double correlation = 0;  // Pearson
};
constexpr std::size_t kMinStatsImages = 32;
ChannelStats channel_stats(const DaiNet& net, const std::vector<Tensor>& welllit, const std::vector<Tensor>& dark);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// ---- benchmark ---------------------------------------------------------------

struct BenchmarkConfig {
  SceneSpec scenes;
  std::size_t train_scenes = 2000;
  std::size_t test_scenes = 500;
  std::size_t stats_images = 64;
  TrainConfig train;  // ablation and seed are overridden per run

  nlohmann::json to_json() const;
  static BenchmarkConfig from_json(const nlohmann::json& j);
};

// Per-seed data: training pairs, the dark test set (degradation draws from a
// disjoint seed range) and pseudo ground truth, built once per seed.
struct SeedData {
  std::uint64_t seed = 0;
  std::vector<PairedSample> train;
  std::vector<Scene> dark_test;
  std::vector<Scene> welllit_test;
  std::vector<PseudoTruth> pseudo;
};
SeedData make_seed_data(const BenchmarkConfig& cfg, std::uint64_t seed, const DecompNet* decomposer);

struct RunResult {
  std::string config;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double map_50 = 0;
  double correlation = 0;
  double seconds = 0;
  // Mean total loss over the first and last kTrendWindow steps.
  double first_window_loss = 0, last_window_loss = 0;
};
constexpr std::size_t kTrendWindow = 50;

struct LadderRow {
  std::string config;
  std::vector<RunResult> runs;
  double mean = 0, stddev = 0;  // over successful runs
  std::size_t failures = 0;
};

struct AblationOptions {
  BenchmarkConfig bench;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> configs;  // empty: all ladder rows
  std::function<void(const RunResult&)> on_run;
  std::function<void(const std::string&)> progress;
};

// Trains every configuration on identical per-seed data. A crashing run is
// recorded and the rest continue.
std::vector<LadderRow> run_ablation(const AblationOptions& opt, const DecompNet& decomposer);
void write_ablation_csv(std::ostream& out, const std::vector<LadderRow>& rows);

}  // namespace darklight
