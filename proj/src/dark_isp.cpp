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

#include "darklight/dark_isp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace darklight {

namespace {

constexpr double kSrgbKnee = 0.04045;
constexpr double kLinearKnee = 0.0031308;
constexpr double kSlope = 12.92;

double checked_unit(double v, bool strict, const char* op) {
  if (v >= 0.0 && v <= 1.0) return v;
  if (strict) {
    throw std::domain_error(std::string(op) + ": value " + std::to_string(v) + " outside [0,1]");
  }
  return std::clamp(v, 0.0, 1.0);
}

Tensor map_values(const Tensor& img, bool strict, const char* op, double (*fn)(double, double),
                  double gamma) {
  std::vector<double> out(img.numel());
  auto in = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(checked_unit(in[i], strict, op), gamma);
  return Tensor(img.shape(), std::move(out));
}

}  // namespace

void DarkIspParams::validate() const {
  if (!(gamma >= 1.0 && gamma <= 3.0)) throw std::invalid_argument("DarkIspParams: gamma outside [1,3]");
  for (double g : wb_gains) {
    if (!(g > 0.0)) throw std::invalid_argument("DarkIspParams: white-balance gains must be > 0");
  }
  if (!(attenuation > 0.0 && attenuation <= 1.0)) {
    throw std::invalid_argument("DarkIspParams: attenuation must lie in (0,1]");
  }
  if (!(shot_noise >= 0.0) || !(read_noise >= 0.0)) {
    throw std::invalid_argument("DarkIspParams: noise coefficients must be >= 0");
  }
  if (quant_bits < 0 || quant_bits > 16) {
    throw std::invalid_argument("DarkIspParams: quant_bits must be in [0,16]");
  }
}

nlohmann::json DarkIspParams::to_json() const {
  return {{"gamma", gamma},          {"wb_gains", wb_gains},     {"attenuation", attenuation},
          {"shot_noise", shot_noise}, {"read_noise", read_noise}, {"quant_bits", quant_bits},
          {"seed", seed}};
}

DarkIspParams DarkIspParams::from_json(const nlohmann::json& j) {
  DarkIspParams p;
  p.gamma = j.at("gamma").get<double>();
  p.wb_gains = j.at("wb_gains").get<std::array<double, 3>>();
  p.attenuation = j.at("attenuation").get<double>();
  p.shot_noise = j.at("shot_noise").get<double>();
  p.read_noise = j.at("read_noise").get<double>();
  p.quant_bits = j.at("quant_bits").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

double srgb_to_linear(double v, double gamma) {
  return v <= kSrgbKnee ? v / kSlope : std::pow((v + 0.055) / 1.055, gamma);
}

double linear_to_srgb(double v, double gamma) {
  return v <= kLinearKnee ? v * kSlope : 1.055 * std::pow(v, 1.0 / gamma) - 0.055;
}

Tensor srgb_to_linear(const Tensor& img, bool strict, double gamma) {
  return map_values(img, strict, "srgb_to_linear", [](double v, double g) { return srgb_to_linear(v, g); },
                    gamma);
}

Tensor linear_to_srgb(const Tensor& img, bool strict, double gamma) {
  return map_values(img, strict, "linear_to_srgb", [](double v, double g) { return linear_to_srgb(v, g); },
                    gamma);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
  std::uint64_t z = global_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DarkIspParams sample_params(std::uint64_t rng_seed) {
  std::mt19937_64 rng(derive_seed(rng_seed, 0));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  DarkIspParams p;
  for (double& g : p.wb_gains) g = uniform(kWbGainMin, kWbGainMax);
  p.attenuation = uniform(kAttenuationMin, kAttenuationMax);
  p.shot_noise = uniform(kNoiseMin, kNoiseMax);
  p.read_noise = uniform(kNoiseMin, kNoiseMax);
  p.quant_bits = 8;
  p.seed = derive_seed(rng_seed, 1);
  return p;
}

Tensor synthesize_low_light(const Tensor& img_srgb, const DarkIspParams& p) {
  p.validate();
  if (img_srgb.rank() != 3 || img_srgb.dim(0) != 3) {
    throw std::invalid_argument("synthesize_low_light: expected a [3,H,W] image, got " +
                                shape_to_string(img_srgb.shape()));
  }
  const std::size_t plane = img_srgb.dim(1) * img_srgb.dim(2);
  const Tensor linear = srgb_to_linear(img_srgb, false, p.gamma);
  auto in = linear.data();
  std::vector<double> out(in.size());
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double levels = p.quant_bits > 0 ? std::ldexp(1.0, p.quant_bits) - 1.0 : 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double gain = p.wb_gains[c];
    for (std::size_t i = 0; i < plane; ++i) {
      double v = in[c * plane + i] / gain * p.attenuation;
      const double variance = p.shot_noise * std::max(v, 0.0) + p.read_noise * p.read_noise;
      if (variance > 0.0) v += std::sqrt(variance) * normal(rng);
      v = std::clamp(v, 0.0, 1.0);
      if (levels > 0.0) v = std::round(v * levels) / levels;
      out[c * plane + i] = linear_to_srgb(std::clamp(v * gain, 0.0, 1.0), p.gamma);
    }
  }
  return Tensor(img_srgb.shape(), std::move(out));
}

}  // namespace darklight
