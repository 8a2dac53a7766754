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

#include "darklight/metrics.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace darklight;
using darklight::testing::grad_check;
using darklight::testing::random_tensor;

TEST_CASE("ssim: identity and constant-image closed form") {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({3, 16, 16}, rng, 0, 1, false);
  CHECK(std::abs(ssim(x, x).item() - 1.0) <= 1e-12);

  SsimConfig cfg;
  const double c1 = cfg.c1();
  const double expected = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  const double got = ssim(Tensor::full({1, 12, 12}, 0.2), Tensor::full({1, 12, 12}, 0.8)).item();
  CHECK(std::abs(got - expected) <= 1e-12);
  CHECK(got < 1.0);
}

TEST_CASE("ssim: matches the per-window loop oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({trial % 2 ? 3u : 1u, 16, 16}, rng, 0, 1, false);
    Tensor b = random_tensor(a.shape(), rng, 0, 1, false);
    CHECK(std::abs(ssim(a, b).item() - testing::ssim_window_oracle(a, b, SsimConfig{})) <= 1e-10);
  }
  SsimConfig small{.window = 5, .sigma = 0.8};
  Tensor a = random_tensor({2, 9, 7}, rng, 0, 1, false);
  Tensor b = random_tensor({2, 9, 7}, rng, 0, 1, false);
  CHECK(std::abs(ssim(a, b, small).item() - testing::ssim_window_oracle(a, b, small)) <= 1e-10);
}

TEST_CASE("ssim: symmetry, strictness and errors") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10; ++i) {
    Tensor a = random_tensor({3, 12, 12}, rng, 0, 1, false);
    Tensor b = random_tensor({3, 12, 12}, rng, 0, 1, false);
    const double ab = ssim(a, b).item();
    CHECK(std::abs(ab - ssim(b, a).item()) <= 1e-12);
    CHECK(ab < 1.0);
    CHECK(ab >= -1.0);
  }
  CHECK_THROWS_AS(ssim(Tensor::ones({1, 8, 8}), Tensor::ones({1, 8, 8})), std::invalid_argument);
  CHECK_THROWS_AS(ssim(Tensor::ones({1, 12, 12}), Tensor::ones({1, 12, 11})), std::invalid_argument);
  CHECK_THROWS_AS((SsimConfig{.window = 4}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((SsimConfig{.window = 1}).validate(), std::invalid_argument);
}

TEST_CASE("kl_divergence: examples, Gibbs inequality, zero iff equal") {
  Tensor p({2}, {0.5, 0.5});
  Tensor q({2}, {0.25, 0.75});
  CHECK(kl_divergence(p, p).item() == 0.0);
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(std::abs(kl_divergence(p, q).item() - expected) <= 1e-15);
  CHECK(std::abs(kl_divergence(p, q).item() - 0.14384) <= 1e-5);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  auto random_dist = [&](std::size_t n) {
    std::vector<double> v(n);
    double s = 0;
    for (double& x : v) s += (x = u(rng));
    for (double& x : v) x /= s;
    return Tensor({n}, v);
  };
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 7);
    Tensor a = random_dist(n);
    Tensor b = random_dist(n);
    const double d = kl_divergence(a, b).item();
    CHECK(d >= 0.0);
    CHECK(d > 1e-12);  // distinct continuous draws
    CHECK(std::abs(kl_divergence(a, a).item()) <= 1e-15);
  }
  CHECK_THROWS_AS(kl_divergence(Tensor({2}, {1.0, 0.0}), p), std::domain_error);
  CHECK_THROWS_AS(kl_divergence(Tensor({2}, {0.6, 0.6}), p), std::domain_error);
  CHECK_THROWS_AS(kl_divergence(Tensor({3}, {0.2, 0.3, 0.5}), p), std::invalid_argument);
}

TEST_CASE("spatial_gradient: constant, ramp and subtraction oracle") {
  auto g0 = spatial_gradient(Tensor::full({2, 5, 5}, 0.3));
  for (double v : g0.gx.data()) CHECK(v == 0.0);
  for (double v : g0.gy.data()) CHECK(v == 0.0);

  const std::size_t W = 8, H = 4;
  std::vector<double> ramp(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) ramp[y * W + x] = static_cast<double>(x) / W;
  auto g = spatial_gradient(Tensor({1, H, W}, ramp));
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x + 1 < W; ++x) CHECK(std::abs(g.gx.data()[y * W + x] - 1.0 / W) <= 1e-15);
  for (double v : g.gy.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(10);
  Tensor r = random_tensor({1, 4, 4}, rng, 0, 1, false);
  auto gr = spatial_gradient(r);
  auto d = r.data();
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const double ex = x + 1 < 4 ? d[y * 4 + x + 1] - d[y * 4 + x] : 0.0;
      const double ey = y + 1 < 4 ? d[(y + 1) * 4 + x] - d[y * 4 + x] : 0.0;
      CHECK(gr.gx.data()[y * 4 + x] == ex);
      CHECK(gr.gy.data()[y * 4 + x] == ey);
    }
  CHECK_THROWS_AS(spatial_gradient(Tensor::ones({1, 1, 4})), std::invalid_argument);
}

TEST_CASE("mae / mse: examples and direct loop") {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({2, 3, 3}, rng, 0, 1, false);
  CHECK(mae(x, x).item() == 0.0);
  CHECK(mae(Tensor({2}, {0, 1}), Tensor({2}, {1, 1})).item() == 0.5);
  Tensor y = random_tensor({2, 3, 3}, rng, 0, 1, false);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += (x.data()[i] - y.data()[i]) * (x.data()[i] - y.data()[i]);
  CHECK(std::abs(mse(x, y).item() - acc / x.numel()) <= 1e-15);
  CHECK_THROWS_AS(mae(x, Tensor::ones({2, 3, 2})), std::invalid_argument);
  CHECK_THROWS_AS(mse(x, Tensor::ones({18})), std::invalid_argument);
}

TEST_CASE("metrics pass the finite-difference gradient check") {
  std::mt19937_64 rng(14);
  auto img = [&](const Shape& s) { return random_tensor(s, rng, 0.05, 0.95); };
  SsimConfig small{.window = 5, .sigma = 1.0};
  CHECK(grad_check([&](auto& l) { return ssim(l[0], l[1], small); }, {img({2, 8, 8}), img({2, 8, 8})})
            .max_rel_error <= 1e-4);
  CHECK(grad_check([](auto& l) { return ssim(l[0], l[1]); }, {img({1, 12, 12}), img({1, 12, 12})})
            .max_rel_error <= 1e-4);
  CHECK(grad_check([](auto& l) { return mae(l[0], l[1]) + mse(l[0], l[1]); }, {img({3, 4, 4}), img({3, 4, 4})})
            .max_rel_error <= 1e-4);
  CHECK(grad_check([](auto& l) {
          auto g = spatial_gradient(l[0]);
          return sum(square(g.gx) * 0.5 + abs(g.gy));
        }, {img({2, 5, 5})}).max_rel_error <= 1e-4);
  // Softmax keeps both arguments on the simplex while the leaves move freely.
  auto softmax = [](const Tensor& v) {
    Tensor e = exp(v);
    return e / sum(e);
  };
  CHECK(grad_check([&](auto& l) { return kl_divergence(softmax(l[0]), softmax(l[1])); },
                   {random_tensor({5}, rng), random_tensor({5}, rng)}).max_rel_error <= 1e-4);
}
