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
#include <map>
#include <string>
#include <vector>

#include "darklight/metrics.hpp"
#include "darklight/nn.hpp"
#include "darklight/retinex.hpp"
#include "darklight/sample.hpp"
#include "json.hpp"

namespace darklight {

// Grid detector backbone: `blocks` conv3x3+ReLU blocks, channel widths
// base * 2^(i/2), 2x2 average pooling before block 1 and before every even
// block after it. g_f is the first `split_index` blocks.
struct BackboneConfig {
  int split_index = 2;
  int blocks = 6;
  int base_channels = 16;

  void validate() const;
  std::size_t channels(int block) const;
  bool pools_before(int block) const;
  std::size_t stride() const;          // input pixels per grid cell
  std::size_t feature_stride() const;  // input pixels per g_f pixel
  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

// What the auxiliary decoder regresses: reflectance (3 channels),
// illumination (1) or both (4, reflectance first).
enum class DecoderTarget { kReflectance, kIllumination, kBoth };
std::string to_string(DecoderTarget t);
DecoderTarget decoder_target_from_string(const std::string& s);

struct ReflectanceDecoderConfig {
  int depth = 2;  // conv layers including the output conv
  int kernel = 3;
  DecoderTarget target = DecoderTarget::kReflectance;

  void validate() const;
  std::size_t out_channels() const;
  nlohmann::json to_json() const;
  static ReflectanceDecoderConfig from_json(const nlohmann::json& j);
};

constexpr int kBoxChannels = 5;  // objectness logit, tx, ty, tw, th

struct SplitOutput {
  Tensor features;  // g_f activation [C, H/s, W/s]
  Tensor raw;       // head output [5, H/stride, W/stride]
};

class DaiNet {
 public:
  DaiNet(BackboneConfig backbone, ReflectanceDecoderConfig decoder, std::uint64_t seed);

  // One pass through g_b that also returns the g_f activation.
  SplitOutput forward_split(const Tensor& img) const;
  // g_f only.
  Tensor features(const Tensor& img) const;
  // Decoder output at input resolution, in (0, 1).
  Tensor reflectance_decode(const Tensor& f) const;

  const BackboneConfig& backbone() const { return backbone_; }
  const ReflectanceDecoderConfig& decoder() const { return decoder_; }
  std::uint64_t seed() const { return seed_; }
  nn::Parameters& parameters() { return params_; }
  const nn::Parameters& parameters() const { return params_; }

  // Weights plus the metadata load() needs to rebuild the architecture.
  WeightArchive archive(nlohmann::json extra = nlohmann::json::object()) const;
  void save(const std::filesystem::path& payload, nlohmann::json extra = nlohmann::json::object()) const;
  static DaiNet load(const std::filesystem::path& payload);

 private:
  Tensor run_blocks(Tensor x, int begin, int end) const;

  BackboneConfig backbone_;
  ReflectanceDecoderConfig decoder_;
  std::uint64_t seed_;
  std::vector<nn::Conv> blocks_;
  nn::Conv head_;
  std::vector<nn::Conv> dec_;
  nn::Parameters params_;
};

// ---- losses ---------------------------------------------------------------

struct LossWeights {
  double lambda_smooth = 0.5;
  double lambda_ir = 0.01;
  double lambda_mfa = 0.1;
  double lambda_rc = 0.001;
  double lambda_p = 0.001;
  double lambda_det = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

struct FeaturePair {
  Tensor f_n;  // well-lit
  Tensor f_l;  // low-light
};

enum class MfaDistance { kKL, kL1, kL2 };
std::string to_string(MfaDistance d);
MfaDistance mfa_distance_from_string(const std::string& s);

// Channel distribution of a feature map: softmax(max(spatial_mean(f), 1e-8)).
Tensor channel_distribution(const Tensor& f);
// KL: KL(p_n || p_l) + KL(p_l || p_n) over channel distributions.
// L1 / L2: mean |v_n - v_l| / mean (v_n - v_l)^2 over the spatially averaged
// feature vectors themselves.
Tensor mfa_loss(const FeaturePair& pair, MfaDistance d = MfaDistance::kKL);

// mae(r, r_hat) + 1 - ssim(r, r_hat)
Tensor ref_loss(const Tensor& r, const Tensor& r_hat, const SsimConfig& cfg = {});

struct InterchangeState {
  Tensor r1_n, r1_l;
  Tensor l_hat_n, l_hat_l;
  Tensor i2_n, i2_l;
  Tensor r2_n, r2_l;
};

struct Interchanged {
  Tensor i2_l;  // clamp(r1_n * l_hat_l)
  Tensor i2_n;  // clamp(r1_l * l_hat_n)
};
// Products are clamped to [0, 1] with a straight-through gradient.
Interchanged interchange_reconstruct(const Tensor& r1_n, const Tensor& r1_l, const Tensor& l_hat_n,
                                     const Tensor& l_hat_l);

// mean |r1_n - r2_l| + mean |r1_l - r2_n|
Tensor rc_loss(const InterchangeState& s);
// mae(i2_l, img_l) + mae(i2_n, img_n)
Tensor penalty_loss(const Tensor& i2_l, const Tensor& i2_n, const Tensor& img_l, const Tensor& img_n);

// Center-in-cell targets on a grid of `stride`-pixel cells. When several boxes
// fall in one cell the largest wins.
struct GridTargets {
  std::size_t rows = 0, cols = 0;
  Tensor objectness;  // [1, rows, cols] in {0, 1}
  Tensor offsets;     // [4, rows, cols]: cell-relative center, ln(size / stride)
  Tensor mask;        // [1, rows, cols], equals objectness
  std::size_t positives = 0;
};
GridTargets assign_targets(const std::vector<Box>& boxes, std::size_t rows, std::size_t cols, std::size_t stride);

constexpr double kObjectnessClamp = 1e-4;

// Mean over cells of BCE(clamp(sigmoid(obj)), target) plus the L1 box-offset
// error summed over the four offsets and averaged over positive cells.
Tensor detection_loss(const Tensor& raw, const GridTargets& targets);
Tensor detection_loss(const Tensor& raw, const std::vector<Box>& boxes, std::size_t stride);

struct Detection {
  Box box;
  double score = 0;
};
// Decodes head output to boxes with score >= min_score, greedy NMS at
// nms_iou, at most max_detections kept.
std::vector<Detection> decode_detections(const Tensor& raw, std::size_t stride, double min_score = 0.01,
                                         double nms_iou = 0.5, std::size_t max_detections = 100);

// Components of the training objective. Undefined tensors count as absent.
struct LossComponents {
  Tensor det, mfa, rc, p, ref, recon, smooth, ir;
};

// det*lambda_det + lambda_mfa*mfa + lambda_rc*rc + lambda_p*p + ref
//   + recon + lambda_smooth*smooth + lambda_ir*ir.
// Throws std::runtime_error naming the first non-finite component.
Tensor total_loss(const LossComponents& c, const LossWeights& w);
// Component values by log name (L_det, L_mfa, ...); absent components are 0.
std::map<std::string, double> component_values(const LossComponents& c);

}  // namespace darklight
