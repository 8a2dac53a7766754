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

#include <cmath>
#include <filesystem>
#include <random>

#include "darklight/dark_isp.hpp"
#include "doctest.h"
#include "isp_checks.hpp"

using namespace darklight;

TEST_CASE("sRGB transfer: fixed points, formula and inverse pair") {
  CHECK(srgb_to_linear(0.0) == 0.0);
  CHECK(srgb_to_linear(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(srgb_to_linear(0.5) - std::pow((0.5 + 0.055) / 1.055, 2.4)) <= 1e-15);
  CHECK(std::abs(srgb_to_linear(0.5) - 0.21404) <= 1e-5);
  CHECK(srgb_to_linear(0.02) == doctest::Approx(0.02 / 12.92));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    CHECK(std::abs(linear_to_srgb(srgb_to_linear(x)) - x) <= 1e-9);
  }
}

TEST_CASE("sRGB transfer: out-of-range clamps, strict mode throws") {
  Tensor bad({1, 1, 2}, {-0.5, 1.5});
  Tensor clamped = srgb_to_linear(bad);
  CHECK(clamped.data()[0] == 0.0);
  CHECK(clamped.data()[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(srgb_to_linear(bad, true), std::domain_error);
  CHECK_THROWS_AS(linear_to_srgb(bad, true), std::domain_error);
}

TEST_CASE("sample_params: determinism and ranges") {
  const auto a = sample_params(77);
  const auto b = sample_params(77);
  CHECK(a.to_json() == b.to_json());
  CHECK(sample_params(78).to_json() != a.to_json());
  CHECK(testing::check_param_ranges(10000));
  CHECK(DarkIspParams::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("sample_params: attenuation mean is the midpoint of its range") {
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s) acc += sample_params(s).attenuation;
  CHECK(std::abs(acc / 10000 - 0.225) <= 0.01 * 0.225);
}

TEST_CASE("synthesize_low_light: neutral parameters only quantize") {
  const Tensor img = testing::isp_test_image(8, 8);
  DarkIspParams p;  // unit gains, attenuation 1, no noise, 8 bits
  const Tensor out = synthesize_low_light(img, p);
  const Tensor lin_in = srgb_to_linear(img);
  const Tensor lin_out = srgb_to_linear(out);
  for (std::size_t i = 0; i < img.numel(); ++i) {
    CHECK(std::abs(lin_out.data()[i] - lin_in.data()[i]) <= 1.0 / 256.0);
    const double q = std::round(lin_in.data()[i] * 255.0) / 255.0;
    CHECK(std::abs(lin_out.data()[i] - q) <= 1e-12);
  }
}

TEST_CASE("synthesize_low_light: darkening") {
  const Tensor img = testing::isp_test_image(8, 8);
  DarkIspParams p;
  p.attenuation = 0.1;
  const Tensor out = synthesize_low_light(img, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double mi = 0, mo = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      mi += img.data()[c * 64 + i];
      mo += out.data()[c * 64 + i];
    }
    CHECK(mo < mi);
  }
  CHECK(testing::darkening_identity_error() <= 1e-6);
}

TEST_CASE("synthesize_low_light: noise statistics") {
  const auto stats = testing::noise_statistics(10000);
  CHECK(stats.max_mean_error_sigmas <= 0.05);
  CHECK(stats.max_variance_rel_error <= 0.05);
}

TEST_CASE("synthesize_low_light: golden output and determinism") {
  CHECK(testing::golden_matches());
  const Tensor img = testing::isp_test_image(8, 8);
  const auto p = sample_params(5);
  const Tensor a = synthesize_low_light(img, p);
  const Tensor b = synthesize_low_light(img, p);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  CHECK_THROWS_AS(synthesize_low_light(Tensor::ones({1, 8, 8}), p), std::invalid_argument);
  DarkIspParams bad = p;
  bad.attenuation = 0.0;
  CHECK_THROWS_AS(synthesize_low_light(img, bad), std::invalid_argument);
}
