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

#include "darklight/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace darklight {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

void SsimConfig::validate() const {
  if (window < 3 || window % 2 == 0) {
    throw std::invalid_argument("SsimConfig: window must be odd and >= 3, got " + std::to_string(window));
  }
  if (!(sigma > 0.0) || !(c1() > 0.0) || !(c2() > 0.0)) {
    throw std::invalid_argument("SsimConfig: sigma, c1 and c2 must be positive");
  }
}

std::vector<double> SsimConfig::taps() const {
  validate();
  std::vector<double> t(static_cast<std::size_t>(window));
  const double centre = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - centre;
    t[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += t[static_cast<std::size_t>(i)];
  }
  for (double& v : t) v /= total;
  return t;
}

Tensor ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 3) {
    throw std::invalid_argument("ssim: expected [C,H,W], got " + shape_to_string(a.shape()));
  }
  const auto taps = cfg.taps();
  const auto win = static_cast<std::size_t>(cfg.window);
  if (a.dim(1) < win || a.dim(2) < win) {
    throw std::invalid_argument("ssim: image " + shape_to_string(a.shape()) +
                                " is smaller than the " + std::to_string(win) + "x" +
                                std::to_string(win) + " window");
  }
  auto filt = [&](const Tensor& t) { return separable_filter_valid(t, taps); };
  const Tensor mu_a = filt(a);
  const Tensor mu_b = filt(b);
  const Tensor mu_aa = mu_a * mu_a;
  const Tensor mu_bb = mu_b * mu_b;
  const Tensor mu_ab = mu_a * mu_b;
  const Tensor var_a = filt(a * a) - mu_aa;
  const Tensor var_b = filt(b * b) - mu_bb;
  const Tensor cov = filt(a * b) - mu_ab;
  const Tensor num = (2.0 * mu_ab + cfg.c1()) * (2.0 * cov + cfg.c2());
  const Tensor den = (mu_aa + mu_bb + cfg.c1()) * (var_a + var_b + cfg.c2());
  return mean(num / den);
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  require_same_shape(p, q, "kl_divergence");
  if (p.rank() != 1 || p.numel() == 0) {
    throw std::invalid_argument("kl_divergence: expected non-empty vectors, got " +
                                shape_to_string(p.shape()));
  }
  for (const Tensor* t : {&p, &q}) {
    double total = 0.0;
    for (double v : t->data()) {
      if (!(v > 0.0)) {
        throw std::domain_error("kl_divergence: entries must be strictly positive, got " +
                                std::to_string(v));
      }
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::domain_error("kl_divergence: entries sum to " + std::to_string(total) + ", not 1");
    }
  }
  return sum(p * (log(p) - log(q)));
}

SpatialGradient spatial_gradient(const Tensor& img) { return {diff_x(img), diff_y(img)}; }

Tensor mae(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mae");
  return mean(abs(a - b));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  return mean(square(a - b));
}

}  // namespace darklight
