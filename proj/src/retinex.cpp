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

#include "darklight/retinex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "darklight/metrics.hpp"

namespace darklight {

namespace {

void check_pair(const DecompositionPair& p, const Tensor& img, const char* which) {
  const auto& s = img.shape();
  if (s.size() != 3 || s[0] != 3) throw std::invalid_argument(std::string(which) + ": image must be [3,H,W]");
  const Shape r{3, s[1], s[2]}, l{1, s[1], s[2]};
  if (p.reflectance.shape() != r || p.illumination.shape() != l) {
    throw std::invalid_argument(std::string(which) + ": decomposition " + shape_to_string(p.reflectance.shape()) +
                                "/" + shape_to_string(p.illumination.shape()) + " does not match image " +
                                shape_to_string(s));
  }
}

Tensor crop(const Tensor& img, std::size_t y0, std::size_t x0, std::size_t size) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<double> v(c * size * size);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) v[(ch * size + y) * size + x] = img.data()[(ch * h + y0 + y) * w + x0 + x];
  return Tensor({c, size, size}, std::move(v));
}

}  // namespace

Tensor illumination_smoothness(const DecompositionPair& p, double edge_weight) {
  const Tensor& r = p.reflectance;
  const Tensor& l = p.illumination;
  const Tensor wx = exp(channel_mean(abs(diff_x(r))) * -edge_weight);
  const Tensor wy = exp(channel_mean(abs(diff_y(r))) * -edge_weight);
  return mean(abs(diff_x(l)) * wx + abs(diff_y(l)) * wy);
}

Tensor reflectance_invariance(const Tensor& r_l, const Tensor& r_n, const SsimConfig& cfg) {
  return mse(r_l, r_n) + (1.0 - ssim(r_l, r_n, cfg));
}

DecompLossTerms decomposition_loss(const DecompositionPair& pair_n, const DecompositionPair& pair_l,
                                   const Tensor& img_n, const Tensor& img_l, const DecompLossWeights& w) {
  check_pair(pair_n, img_n, "decomposition_loss (well-lit)");
  check_pair(pair_l, img_l, "decomposition_loss (low-light)");
  if (img_n.shape() != img_l.shape()) throw std::invalid_argument("decomposition_loss: pair images differ in shape");
  if (w.lambda_smooth < 0 || w.lambda_ir < 0) throw std::invalid_argument("decomposition_loss: negative weight");
  DecompLossTerms t;
  t.recon = mae(pair_l.reflectance * pair_l.illumination, img_l) +
            mae(pair_n.reflectance * pair_n.illumination, img_n);
  t.smooth = illumination_smoothness(pair_l, w.edge_weight) + illumination_smoothness(pair_n, w.edge_weight);
  t.ir = reflectance_invariance(pair_l.reflectance, pair_n.reflectance, w.ssim);
  t.total = t.recon + w.lambda_smooth * t.smooth + w.lambda_ir * t.ir;
  return t;
}

void DecompNetConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("DecompNetConfig: channels must be >= 1");
  if (depth < 2) throw std::invalid_argument("DecompNetConfig: depth must be >= 2");
}

nlohmann::json DecompNetConfig::to_json() const { return {{"channels", channels}, {"depth", depth}}; }

DecompNetConfig DecompNetConfig::from_json(const nlohmann::json& j) {
  DecompNetConfig c;
  c.channels = j.value("channels", c.channels);
  c.depth = j.value("depth", c.depth);
  c.validate();
  return c;
}

DecompNet::DecompNet(DecompNetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(0);
  build(rng);
}

void DecompNet::build(std::mt19937_64& rng) {
  const auto c = static_cast<std::size_t>(cfg_.channels);
  trunk_.clear();
  params_ = nn::Parameters();
  for (int i = 0; i < cfg_.depth; ++i) {
    trunk_.push_back(nn::make_conv(i == 0 ? 3 : c, c, 3, rng));
    params_.add_conv("trunk" + std::to_string(i), trunk_.back());
  }
  head_r_ = nn::make_conv(c, 3, 3, rng);
  head_l_ = nn::make_conv(c, 1, 3, rng);
  params_.add_conv("head_r", head_r_);
  params_.add_conv("head_l", head_l_);
}

DecompNet DecompNet::initialized(const DecompNetConfig& cfg, std::uint64_t seed) {
  DecompNet net(cfg);
  std::mt19937_64 rng(derive_seed(seed, 0xdec0));
  net.build(rng);
  net.seed_ = seed;
  net.loaded_ = true;
  return net;
}

DecompNet DecompNet::load(const std::filesystem::path& payload) {
  const WeightArchive a = load_weights(payload);
  if (a.metadata.value("kind", "") != "decomp") {
    throw std::runtime_error("DecompNet::load: " + payload.string() + " is not a decomposition archive");
  }
  DecompNet net(DecompNetConfig::from_json(a.metadata.at("config")));
  net.params_.assign(a);
  net.seed_ = a.metadata.value("seed", std::uint64_t{0});
  net.loaded_ = true;
  return net;
}

void DecompNet::save(const std::filesystem::path& payload) const {
  if (!loaded_) throw std::logic_error("DecompNet::save: weights not initialized");
  save_weights(payload, params_.to_archive({{"kind", "decomp"}, {"config", cfg_.to_json()}, {"seed", seed_}}));
}

DecompositionPair DecompNet::decompose(const Tensor& img) const {
  if (!loaded_) throw std::logic_error("DecompNet::decompose: weights not loaded");
  const auto& s = img.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw std::invalid_argument("DecompNet::decompose: expected [3,H,W], got " + shape_to_string(s));
  }
  Tensor x = img;
  for (const auto& conv : trunk_) x = relu(conv(x));
  return {sigmoid(head_r_(x)), sigmoid(head_l_(x))};
}

PretrainResult pretrain(const std::vector<PairedSample>& corpus, const DecompNetConfig& cfg,
                        const PretrainOptions& opt) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (opt.epochs < 0 || opt.batch < 1 || opt.crop < 0) throw std::invalid_argument("pretrain: invalid options");
  PretrainResult res{DecompNet::initialized(cfg, opt.seed), {}};
  if (opt.epochs == 0) return res;

  nn::Adam adam(res.net.parameters(), {.lr = opt.lr});
  std::mt19937_64 rng(derive_seed(opt.seed, 0x9e7a));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const DecompLossWeights weights;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      Tape tape;
      Tensor loss = Tensor::scalar(0.0);
      for (std::size_t k = start; k < end; ++k) {
        const PairedSample& s = corpus[order[k]];
        Tensor in_n = s.well_lit, in_l = s.low_light;
        const std::size_t h = in_n.dim(1), w = in_n.dim(2);
        if (opt.crop > 0 && static_cast<std::size_t>(opt.crop) < std::min(h, w)) {
          const auto size = static_cast<std::size_t>(opt.crop);
          const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, h - size)(rng);
          const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, w - size)(rng);
          in_n = crop(in_n, y0, x0, size);
          in_l = crop(in_l, y0, x0, size);
        }
        const auto terms = decomposition_loss(res.net.decompose(in_n), res.net.decompose(in_l), in_n, in_l, weights);
        loss = loss + terms.total;
      }
      loss = loss * (1.0 / static_cast<double>(end - start));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "pretrain: non-finite loss " << value << " at epoch " << epoch << ", batch " << batches;
        throw std::runtime_error(msg.str());
      }
      tape.backward(loss);
      adam.step();
      acc += value;
      ++batches;
    }
    res.epoch_loss.push_back(acc / static_cast<double>(batches));
    if (opt.on_epoch) opt.on_epoch(epoch, res.epoch_loss.back());
  }
  return res;
}

double reconstruction_error(const DecompNet& net, const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("reconstruction_error: no images");
  double acc = 0.0;
  for (const auto& img : images) {
    const auto d = net.decompose(img);
    acc += mae(d.reflectance * d.illumination, img).item();
  }
  return acc / static_cast<double>(images.size());
}

}  // namespace darklight
