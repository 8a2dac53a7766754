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

// Dark ISP property checks shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "darklight/dark_isp.hpp"

#ifndef DARKLIGHT_TEST_DATA_DIR
#error "DARKLIGHT_TEST_DATA_DIR must point at tests/data"
#endif

namespace darklight::testing {

inline Tensor isp_test_image(std::size_t h, std::size_t w) {
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        v[(c * h + y) * w + x] = static_cast<double>((x * 7 + y * 3 + c * 5) % 17) / 16.0;
  return Tensor({3, h, w}, std::move(v));
}

inline bool check_param_ranges(int n) {
  for (int s = 0; s < n; ++s) {
    const auto p = sample_params(static_cast<std::uint64_t>(s));
    for (double g : p.wb_gains) {
      if (g < kWbGainMin || g > kWbGainMax) return false;
    }
    if (p.attenuation < kAttenuationMin || p.attenuation > kAttenuationMax) return false;
    if (p.shot_noise < kNoiseMin || p.shot_noise > kNoiseMax) return false;
    if (p.read_noise < kNoiseMin || p.read_noise > kNoiseMax) return false;
    if (p.quant_bits != 8) return false;
  }
  return true;
}

// Linear-domain |mean(out) - a * mean(in)| with noise and quantization off.
inline double darkening_identity_error() {
  const Tensor img = isp_test_image(16, 16);
  double worst = 0.0;
  for (double a : {0.05, 0.1, 0.25, 0.4}) {
    DarkIspParams p;
    p.attenuation = a;
    p.wb_gains = {0.8, 1.0, 1.25};
    p.quant_bits = 0;
    const Tensor lin_in = srgb_to_linear(img);
    const Tensor lin_out = srgb_to_linear(synthesize_low_light(img, p));
    double mi = 0, mo = 0;
    for (std::size_t i = 0; i < img.numel(); ++i) {
      mi += lin_in.data()[i];
      mo += lin_out.data()[i];
    }
    mi /= static_cast<double>(img.numel());
    mo /= static_cast<double>(img.numel());
    worst = std::max(worst, std::abs(mo - a * mi));
  }
  return worst;
}

struct NoiseStats {
  double max_mean_error_sigmas = 0.0;   // |sample mean| / expected sigma
  double max_variance_rel_error = 0.0;  // |sample var / expected var - 1|
};

// Attenuation 1, unit gains, quantization off; `draws` seeds per pixel.
inline NoiseStats noise_statistics(int draws) {
  const std::size_t h = 2, w = 2, n = 3 * h * w;
  std::vector<double> lin(n);
  for (std::size_t i = 0; i < n; ++i) lin[i] = 0.15 + 0.05 * static_cast<double>(i);
  std::vector<double> srgb(n);
  for (std::size_t i = 0; i < n; ++i) srgb[i] = linear_to_srgb(lin[i]);
  const Tensor img({3, h, w}, srgb);
  const Tensor lin_in = srgb_to_linear(img);
  DarkIspParams p;
  p.shot_noise = 0.008;
  p.read_noise = 0.006;
  p.quant_bits = 0;
  std::vector<double> s1(n, 0.0), s2(n, 0.0);
  for (int d = 0; d < draws; ++d) {
    p.seed = derive_seed(2024, static_cast<std::uint64_t>(d));
    const Tensor out = srgb_to_linear(synthesize_low_light(img, p));
    for (std::size_t i = 0; i < n; ++i) {
      const double e = out.data()[i] - lin_in.data()[i];
      s1[i] += e;
      s2[i] += e * e;
    }
  }
  NoiseStats st;
  for (std::size_t i = 0; i < n; ++i) {
    const double expected = p.shot_noise * lin_in.data()[i] + p.read_noise * p.read_noise;
    const double m = s1[i] / draws;
    const double var = s2[i] / draws - m * m;
    st.max_mean_error_sigmas = std::max(st.max_mean_error_sigmas, std::abs(m) / std::sqrt(expected));
    st.max_variance_rel_error = std::max(st.max_variance_rel_error, std::abs(var / expected - 1.0));
  }
  return st;
}

inline DarkIspParams golden_params() {
  DarkIspParams p;
  p.wb_gains = {0.9, 1.1, 1.2};
  p.attenuation = 0.2;
  p.shot_noise = 0.005;
  p.read_noise = 0.003;
  p.quant_bits = 8;
  p.seed = 42;
  return p;
}

// Compares the 8x8 synthesis against the committed little-endian float64
// golden. Set DARKLIGHT_REGENERATE_GOLDEN=1 to rewrite it.
inline bool golden_matches() {
  const std::filesystem::path path = std::filesystem::path(DARKLIGHT_TEST_DATA_DIR) / "dark_isp_golden_8x8.bin";
  const Tensor out = synthesize_low_light(isp_test_image(8, 8), golden_params());
  std::vector<unsigned char> bytes;
  for (double v : out.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  if (std::getenv("DARKLIGHT_REGENERATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "missing golden file " << path << '\n';
    return false;
  }
  std::vector<unsigned char> golden((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return golden == bytes;
}

}  // namespace darklight::testing
