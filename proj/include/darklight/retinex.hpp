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
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "darklight/metrics.hpp"
#include "darklight/nn.hpp"
#include "darklight/sample.hpp"
#include "json.hpp"

namespace darklight {

struct DecompositionPair {
  Tensor reflectance;   // [3, H, W]
  Tensor illumination;  // [1, H, W]
};

struct DecompLossWeights {
  double lambda_smooth = 0.5;
  double lambda_ir = 0.01;
  double edge_weight = 10.0;  // exponent weight inside the smoothness term
  SsimConfig ssim;
};

struct DecompLossTerms {
  Tensor recon;
  Tensor smooth;
  Tensor ir;
  Tensor total;
};

// L_recon + lambda_smooth * L_smooth + lambda_ir * L_ir over a well-lit (n)
// and low-light (l) pair.
DecompLossTerms decomposition_loss(const DecompositionPair& pair_n, const DecompositionPair& pair_l,
                                   const Tensor& img_n, const Tensor& img_l,
                                   const DecompLossWeights& w = {});

// Edge-aware illumination smoothness of one pair:
// mean(|dL/dx| exp(-k |dR/dx|) + |dL/dy| exp(-k |dR/dy|)), |dR| channel-averaged.
Tensor illumination_smoothness(const DecompositionPair& pair, double edge_weight);
// mse(a, b) + 1 - ssim(a, b)
Tensor reflectance_invariance(const Tensor& r_l, const Tensor& r_n, const SsimConfig& cfg = {});

struct DecompNetConfig {
  int channels = 16;
  int depth = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static DecompNetConfig from_json(const nlohmann::json& j);
};

class DecompNet {
 public:
  // Unloaded: decompose() throws until weights are initialized or loaded.
  explicit DecompNet(DecompNetConfig cfg = {});

  static DecompNet initialized(const DecompNetConfig& cfg, std::uint64_t seed);
  static DecompNet load(const std::filesystem::path& payload);
  void save(const std::filesystem::path& payload) const;

  DecompositionPair decompose(const Tensor& img) const;

  bool loaded() const { return loaded_; }
  const DecompNetConfig& config() const { return cfg_; }
  nn::Parameters& parameters() { return params_; }
  const nn::Parameters& parameters() const { return params_; }
  std::uint64_t seed() const { return seed_; }

 private:
  void build(std::mt19937_64& rng);

  DecompNetConfig cfg_;
  std::vector<nn::Conv> trunk_;
  nn::Conv head_r_;
  nn::Conv head_l_;
  nn::Parameters params_;
  std::uint64_t seed_ = 0;
  bool loaded_ = false;
};

struct PretrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  int batch = 4;
  int crop = 32;  // square training crop; 0 trains on full images
  std::uint64_t seed = 0;
  // Called after every epoch with (epoch, mean training loss).
  std::function<void(int, double)> on_epoch;
};

struct PretrainResult {
  DecompNet net;
  std::vector<double> epoch_loss;
};

// Trains a freshly initialized net on the pairs. Throws std::runtime_error on
// a non-finite loss.
PretrainResult pretrain(const std::vector<PairedSample>& corpus, const DecompNetConfig& cfg,
                        const PretrainOptions& opt = {});

// Mean |R * L - I| over the images.
double reconstruction_error(const DecompNet& net, const std::vector<Tensor>& images);

}  // namespace darklight
