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

#include <vector>

#include "darklight/tensor.hpp"

namespace darklight {

// Gaussian-windowed SSIM settings. Defaults are the usual 11x11, sigma 1.5,
// k1 = 0.01, k2 = 0.03 on a unit dynamic range.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
  // Normalized 1-D taps; the 2-D window is their outer product.
  std::vector<double> taps() const;
};

// Mean of the local SSIM map over every valid window position and channel.
// Inputs are [C, H, W]; the result is a differentiable scalar.
Tensor ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

// KL(p || q) = sum p_i ln(p_i / q_i) for strictly positive probability vectors.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

struct SpatialGradient {
  Tensor gx;
  Tensor gy;
};
SpatialGradient spatial_gradient(const Tensor& img);

Tensor mae(const Tensor& a, const Tensor& b);
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace darklight
