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

#include <array>
#include <cstdint>

#include "darklight/tensor.hpp"
#include "json.hpp"

namespace darklight {

// Parameters of one low-light degradation. Ranges used by sample_params():
// wb_gains [0.7, 1.3], attenuation [0.05, 0.4], shot_noise and read_noise
// [1e-4, 1e-2].
struct DarkIspParams {
  double gamma = 2.4;  // exponent of the sRGB power segment (~2.2 overall)
  std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
  double attenuation = 1.0;
  double shot_noise = 0.0;  // variance per unit linear signal
  double read_noise = 0.0;  // standard deviation, linear domain
  int quant_bits = 8;       // 0 disables quantization
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static DarkIspParams from_json(const nlohmann::json& j);
};

inline constexpr double kAttenuationMin = 0.05;
inline constexpr double kAttenuationMax = 0.4;
inline constexpr double kWbGainMin = 0.7;
inline constexpr double kWbGainMax = 1.3;
inline constexpr double kNoiseMin = 1e-4;
inline constexpr double kNoiseMax = 1e-2;

double srgb_to_linear(double v, double gamma = 2.4);
double linear_to_srgb(double v, double gamma = 2.4);
// Out-of-range values are clamped; strict mode throws std::domain_error instead.
Tensor srgb_to_linear(const Tensor& img, bool strict = false, double gamma = 2.4);
Tensor linear_to_srgb(const Tensor& img, bool strict = false, double gamma = 2.4);

// SplitMix64 mix of (global seed, index): independent per-sample streams.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

DarkIspParams sample_params(std::uint64_t rng_seed);

// decode -> inverse white balance -> attenuate -> shot + read noise -> clamp
// -> quantize -> white balance -> encode. Input is a [3, H, W] sRGB image.
Tensor synthesize_low_light(const Tensor& img_srgb, const DarkIspParams& p);

}  // namespace darklight
