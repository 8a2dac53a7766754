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

#include "darklight/dai_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace darklight {

// ---- configuration --------------------------------------------------------

void BackboneConfig::validate() const {
  if (blocks < 2) throw std::invalid_argument("BackboneConfig: need at least 2 blocks");
  if (split_index < 1 || split_index >= blocks) {
    throw std::invalid_argument("BackboneConfig: split_index must satisfy 1 <= M < blocks");
  }
  if (base_channels < 1) throw std::invalid_argument("BackboneConfig: base_channels must be >= 1");
}

std::size_t BackboneConfig::channels(int block) const {
  return static_cast<std::size_t>(base_channels) << (block / 2);
}

bool BackboneConfig::pools_before(int block) const { return block == 1 || (block >= 2 && block % 2 == 0); }

std::size_t BackboneConfig::stride() const {
  std::size_t s = 1;
  for (int b = 0; b < blocks; ++b) s *= pools_before(b) ? 2 : 1;
  return s;
}

std::size_t BackboneConfig::feature_stride() const {
  std::size_t s = 1;
  for (int b = 0; b < split_index; ++b) s *= pools_before(b) ? 2 : 1;
  return s;
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"split_index", split_index}, {"blocks", blocks}, {"base_channels", base_channels}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.split_index = j.value("split_index", c.split_index);
  c.blocks = j.value("blocks", c.blocks);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.validate();
  return c;
}

std::string to_string(DecoderTarget t) {
  switch (t) {
    case DecoderTarget::kReflectance: return "R";
    case DecoderTarget::kIllumination: return "L";
    case DecoderTarget::kBoth: return "R+L";
  }
  return "?";
}

DecoderTarget decoder_target_from_string(const std::string& s) {
  if (s == "R") return DecoderTarget::kReflectance;
  if (s == "L") return DecoderTarget::kIllumination;
  if (s == "R+L") return DecoderTarget::kBoth;
  throw std::invalid_argument("unknown decoder target '" + s + "' (expected R, L or R+L)");
}

void ReflectanceDecoderConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("ReflectanceDecoderConfig: depth must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("ReflectanceDecoderConfig: kernel must be odd");
}

std::size_t ReflectanceDecoderConfig::out_channels() const {
  switch (target) {
    case DecoderTarget::kReflectance: return 3;
    case DecoderTarget::kIllumination: return 1;
    case DecoderTarget::kBoth: return 4;
  }
  return 3;
}

nlohmann::json ReflectanceDecoderConfig::to_json() const {
  return {{"depth", depth}, {"kernel", kernel}, {"target", to_string(target)}};
}

ReflectanceDecoderConfig ReflectanceDecoderConfig::from_json(const nlohmann::json& j) {
  ReflectanceDecoderConfig c;
  c.depth = j.value("depth", c.depth);
  c.kernel = j.value("kernel", c.kernel);
  c.target = decoder_target_from_string(j.value("target", std::string("R")));
  c.validate();
  return c;
}

// ---- network --------------------------------------------------------------

DaiNet::DaiNet(BackboneConfig backbone, ReflectanceDecoderConfig decoder, std::uint64_t seed)
    : backbone_(backbone), decoder_(decoder), seed_(seed) {
  backbone_.validate();
  decoder_.validate();
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::size_t in = 3;
  for (int b = 0; b < backbone_.blocks; ++b) {
    blocks_.push_back(nn::make_conv(in, backbone_.channels(b), 3, rng));
    params_.add_conv("block" + std::to_string(b), blocks_.back());
    in = backbone_.channels(b);
  }
  head_ = nn::make_conv(in, kBoxChannels, 1, rng);
  head_.bias.mutable_data()[0] = -4.0;  // start with few confident cells
  params_.add_conv("head", head_);

  std::mt19937_64 dec_rng(derive_seed(seed, 2));
  const std::size_t c = backbone_.channels(backbone_.split_index - 1);
  const auto k = static_cast<std::size_t>(decoder_.kernel);
  for (int i = 0; i + 1 < decoder_.depth; ++i) {
    dec_.push_back(nn::make_conv(c, c, k, dec_rng));
    params_.add_conv("decoder" + std::to_string(i), dec_.back());
  }
  dec_.push_back(nn::make_conv(c, decoder_.out_channels(), k, dec_rng));
  params_.add_conv("decoder_out", dec_.back());
}

Tensor DaiNet::run_blocks(Tensor x, int begin, int end) const {
  for (int b = begin; b < end; ++b) {
    if (backbone_.pools_before(b)) x = avg_pool2(x);
    x = relu(blocks_[b](x));
  }
  return x;
}

SplitOutput DaiNet::forward_split(const Tensor& img) const {
  const auto& s = img.shape();
  const std::size_t st = backbone_.stride();
  if (s.size() != 3 || s[0] != 3 || s[1] % st != 0 || s[2] % st != 0) {
    throw std::invalid_argument("DaiNet::forward_split: expected [3,H,W] with H, W multiples of " +
                                std::to_string(st) + ", got " + shape_to_string(s));
  }
  SplitOutput out;
  out.features = run_blocks(img, 0, backbone_.split_index);
  out.raw = head_(run_blocks(out.features, backbone_.split_index, backbone_.blocks));
  return out;
}

Tensor DaiNet::features(const Tensor& img) const {
  const auto& s = img.shape();
  if (s.size() != 3 || s[0] != 3) throw std::invalid_argument("DaiNet::features: expected [3,H,W]");
  return run_blocks(img, 0, backbone_.split_index);
}

Tensor DaiNet::reflectance_decode(const Tensor& f) const {
  Tensor x = f;
  for (std::size_t i = 0; i + 1 < dec_.size(); ++i) x = relu(dec_[i](x));
  // Every conv runs at feature resolution; only the final map is upsampled.
  return upsample_nearest(sigmoid(dec_.back()(x)), backbone_.feature_stride());
}

WeightArchive DaiNet::archive(nlohmann::json extra) const {
  nlohmann::json meta = {{"kind", "dai_net"},
                         {"backbone", backbone_.to_json()},
                         {"decoder", decoder_.to_json()},
                         {"seed", seed_}};
  meta["extra"] = std::move(extra);
  return params_.to_archive(std::move(meta));
}

void DaiNet::save(const std::filesystem::path& payload, nlohmann::json extra) const {
  save_weights(payload, archive(std::move(extra)));
}

DaiNet DaiNet::load(const std::filesystem::path& payload) {
  const WeightArchive a = load_weights(payload);
  if (a.metadata.value("kind", "") != "dai_net") {
    throw std::runtime_error("DaiNet::load: " + payload.string() + " is not a detector archive");
  }
  DaiNet net(BackboneConfig::from_json(a.metadata.at("backbone")),
             ReflectanceDecoderConfig::from_json(a.metadata.at("decoder")), a.metadata.value("seed", std::uint64_t{0}));
  net.params_.assign(a);
  return net;
}

// ---- losses ---------------------------------------------------------------

void LossWeights::validate() const {
  for (double v : {lambda_smooth, lambda_ir, lambda_mfa, lambda_rc, lambda_p, lambda_det}) {
    if (!(v >= 0)) throw std::invalid_argument("LossWeights: weights must be >= 0");
  }
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda_smooth", lambda_smooth}, {"lambda_ir", lambda_ir}, {"lambda_mfa", lambda_mfa},
          {"lambda_rc", lambda_rc},         {"lambda_p", lambda_p},   {"lambda_det", lambda_det}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_smooth = j.value("lambda_smooth", w.lambda_smooth);
  w.lambda_ir = j.value("lambda_ir", w.lambda_ir);
  w.lambda_mfa = j.value("lambda_mfa", w.lambda_mfa);
  w.lambda_rc = j.value("lambda_rc", w.lambda_rc);
  w.lambda_p = j.value("lambda_p", w.lambda_p);
  w.lambda_det = j.value("lambda_det", w.lambda_det);
  w.validate();
  return w;
}

std::string to_string(MfaDistance d) {
  switch (d) {
    case MfaDistance::kKL: return "KL";
    case MfaDistance::kL1: return "L1";
    case MfaDistance::kL2: return "L2";
  }
  return "?";
}

MfaDistance mfa_distance_from_string(const std::string& s) {
  if (s == "KL") return MfaDistance::kKL;
  if (s == "L1") return MfaDistance::kL1;
  if (s == "L2") return MfaDistance::kL2;
  throw std::invalid_argument("unknown feature-alignment distance '" + s + "' (expected KL, L1 or L2)");
}

Tensor channel_distribution(const Tensor& f) {
  if (f.rank() != 3 || f.dim(0) == 0) {
    throw std::invalid_argument("channel_distribution: expected [C,H,W] with C >= 1, got " + shape_to_string(f.shape()));
  }
  const Tensor v = clamp(spatial_mean(f), 1e-8, std::numeric_limits<double>::infinity());
  const double top = *std::max_element(v.data().begin(), v.data().end());
  const Tensor e = exp(v - top);
  return e / sum(e);
}

Tensor mfa_loss(const FeaturePair& pair, MfaDistance d) {
  if (pair.f_n.shape() != pair.f_l.shape()) {
    throw std::invalid_argument("mfa_loss: feature shapes differ: " + shape_to_string(pair.f_n.shape()) + " vs " +
                                shape_to_string(pair.f_l.shape()));
  }
  if (d == MfaDistance::kKL) {
    const Tensor p = channel_distribution(pair.f_n), q = channel_distribution(pair.f_l);
    return kl_divergence(p, q) + kl_divergence(q, p);
  }
  if (pair.f_n.rank() != 3 || pair.f_n.dim(0) == 0) throw std::invalid_argument("mfa_loss: expected [C,H,W], C >= 1");
  const Tensor diff = spatial_mean(pair.f_n) - spatial_mean(pair.f_l);
  return d == MfaDistance::kL1 ? mean(abs(diff)) : mean(square(diff));
}

Tensor ref_loss(const Tensor& r, const Tensor& r_hat, const SsimConfig& cfg) {
  return mae(r, r_hat) + (1.0 - ssim(r, r_hat, cfg));
}

Interchanged interchange_reconstruct(const Tensor& r1_n, const Tensor& r1_l, const Tensor& l_hat_n,
                                     const Tensor& l_hat_l) {
  const auto check = [](const Tensor& r, const Tensor& l) {
    if (r.rank() != 3 || l.rank() != 3 || l.dim(0) != 1 || r.dim(1) != l.dim(1) || r.dim(2) != l.dim(2)) {
      throw std::invalid_argument("interchange_reconstruct: misaligned " + shape_to_string(r.shape()) + " and " +
                                  shape_to_string(l.shape()));
    }
  };
  check(r1_n, l_hat_l);
  check(r1_l, l_hat_n);
  return {clamp(r1_n * l_hat_l, 0.0, 1.0, ClampGrad::kStraightThrough),
          clamp(r1_l * l_hat_n, 0.0, 1.0, ClampGrad::kStraightThrough)};
}

Tensor rc_loss(const InterchangeState& s) {
  if (!s.r2_n.defined() || !s.r2_l.defined()) throw std::invalid_argument("rc_loss: second-round reflectances missing");
  if (!s.r1_n.defined() || !s.r1_l.defined()) throw std::invalid_argument("rc_loss: first-round reflectances missing");
  return mae(s.r1_n, s.r2_l) + mae(s.r1_l, s.r2_n);
}

Tensor penalty_loss(const Tensor& i2_l, const Tensor& i2_n, const Tensor& img_l, const Tensor& img_n) {
  return mae(i2_l, img_l) + mae(i2_n, img_n);
}

GridTargets assign_targets(const std::vector<Box>& boxes, std::size_t rows, std::size_t cols, std::size_t stride) {
  GridTargets t;
  t.rows = rows;
  t.cols = cols;
  const std::size_t cells = rows * cols;
  std::vector<double> obj(cells, 0.0), off(4 * cells, 0.0), best_area(cells, 0.0);
  const double s = static_cast<double>(stride);
  for (const Box& b : boxes) {
    if (!(b.width() > 0 && b.height() > 0)) throw std::invalid_argument("assign_targets: degenerate box");
    const double cx = 0.5 * (b.x0 + b.x1) / s, cy = 0.5 * (b.y0 + b.y1) / s;
    const auto col = static_cast<std::size_t>(std::clamp(std::floor(cx), 0.0, double(cols - 1)));
    const auto row = static_cast<std::size_t>(std::clamp(std::floor(cy), 0.0, double(rows - 1)));
    const std::size_t i = row * cols + col;
    if (b.area() <= best_area[i]) continue;
    best_area[i] = b.area();
    obj[i] = 1.0;
    off[0 * cells + i] = cx - double(col);
    off[1 * cells + i] = cy - double(row);
    off[2 * cells + i] = std::log(b.width() / s);
    off[3 * cells + i] = std::log(b.height() / s);
  }
  t.positives = static_cast<std::size_t>(std::count(obj.begin(), obj.end(), 1.0));
  t.objectness = Tensor({1, rows, cols}, obj);
  t.mask = t.objectness;
  t.offsets = Tensor({4, rows, cols}, std::move(off));
  return t;
}

Tensor detection_loss(const Tensor& raw, const GridTargets& t) {
  if (raw.rank() != 3 || raw.dim(0) != kBoxChannels || raw.dim(1) != t.rows || raw.dim(2) != t.cols) {
    throw std::invalid_argument("detection_loss: head output " + shape_to_string(raw.shape()) +
                                " does not match the target grid");
  }
  const Tensor p = clamp(sigmoid(slice_leading(raw, 0, 1)), kObjectnessClamp, 1.0 - kObjectnessClamp);
  const Tensor& y = t.objectness;
  const Tensor bce = -mean(y * log(p) + (1.0 - y) * log(1.0 - p));
  if (t.positives == 0) return bce;
  const Tensor xy = abs(sigmoid(slice_leading(raw, 1, 3)) - slice_leading(t.offsets, 0, 2)) * t.mask;
  const Tensor wh = abs(slice_leading(raw, 3, 5) - slice_leading(t.offsets, 2, 4)) * t.mask;
  return bce + (sum(xy) + sum(wh)) * (1.0 / static_cast<double>(t.positives));
}

Tensor detection_loss(const Tensor& raw, const std::vector<Box>& boxes, std::size_t stride) {
  if (raw.rank() != 3) throw std::invalid_argument("detection_loss: head output must be [5,rows,cols]");
  return detection_loss(raw, assign_targets(boxes, raw.dim(1), raw.dim(2), stride));
}

std::vector<Detection> decode_detections(const Tensor& raw, std::size_t stride, double min_score, double nms_iou,
                                         std::size_t max_detections) {
  if (raw.rank() != 3 || raw.dim(0) != kBoxChannels) throw std::invalid_argument("decode_detections: bad head output");
  const std::size_t rows = raw.dim(1), cols = raw.dim(2), cells = rows * cols;
  const auto v = raw.data();
  const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double s = static_cast<double>(stride), h = double(rows) * s, w = double(cols) * s;
  std::vector<Detection> cand;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      const double score = sig(v[i]);
      if (score < min_score) continue;
      const double cx = (double(c) + sig(v[cells + i])) * s, cy = (double(r) + sig(v[2 * cells + i])) * s;
      const double bw = s * std::exp(std::min(v[3 * cells + i], 10.0));
      const double bh = s * std::exp(std::min(v[4 * cells + i], 10.0));
      Box b{std::max(0.0, cx - bw / 2), std::max(0.0, cy - bh / 2), std::min(w, cx + bw / 2), std::min(h, cy + bh / 2)};
      if (b.width() > 0 && b.height() > 0) cand.push_back({b, score});
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : cand) {
    if (kept.size() >= max_detections) break;
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](const Detection& k) { return iou(k.box, d.box) > nms_iou; });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

namespace {

const std::array<std::pair<const char*, Tensor LossComponents::*>, 8> kComponents{{
    {"L_det", &LossComponents::det},
    {"L_mfa", &LossComponents::mfa},
    {"L_rc", &LossComponents::rc},
    {"L_p", &LossComponents::p},
    {"L_ref", &LossComponents::ref},
    {"L_recon", &LossComponents::recon},
    {"L_smooth", &LossComponents::smooth},
    {"L_ir", &LossComponents::ir},
}};

}  // namespace

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  for (const auto& [name, member] : kComponents) {
    const Tensor& t = c.*member;
    if (t.defined() && !std::isfinite(t.item())) {
      throw std::runtime_error(std::string("total_loss: component ") + name + " is not finite");
    }
  }
  const std::array<double, 8> weight{w.lambda_det, w.lambda_mfa, w.lambda_rc, w.lambda_p,
                                     1.0,          1.0,          w.lambda_smooth, w.lambda_ir};
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < kComponents.size(); ++i) {
    const Tensor& t = c.*kComponents[i].second;
    if (t.defined()) total = total + t * weight[i];
  }
  return total;
}

std::map<std::string, double> component_values(const LossComponents& c) {
  std::map<std::string, double> out;
  for (const auto& [name, member] : kComponents) {
    const Tensor& t = c.*member;
    out[name] = t.defined() ? t.item() : 0.0;
  }
  return out;
}

}  // namespace darklight
