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

#include "darklight/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace darklight::nn {

Tensor Conv::operator()(const Tensor& x) const {
  const int pad = static_cast<int>(weight.dim(2) / 2);
  return conv2d(x, weight, 1, pad) + bias;
}

Conv make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng) {
  if (in == 0 || out == 0 || kernel % 2 == 0) {
    throw std::invalid_argument("make_conv: need positive channels and an odd kernel");
  }
  const std::size_t fan_in = in * kernel * kernel;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(out * fan_in);
  for (auto& v : w) v = u(rng);
  Conv c;
  c.weight = Tensor({out, in, kernel, kernel}, std::move(w), true);
  c.bias = Tensor({out, 1, 1}, std::vector<double>(out, 0.0), true);
  return c;
}

void Parameters::add(std::string name, Tensor t) {
  for (const auto& it : items_) {
    if (it.name == name) throw std::invalid_argument("duplicate parameter " + name);
  }
  t.set_requires_grad(true);
  items_.push_back({std::move(name), std::move(t)});
}

void Parameters::add_conv(const std::string& prefix, const Conv& conv) {
  add(prefix + ".weight", conv.weight);
  add(prefix + ".bias", conv.bias);
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.tensor.numel();
  return n;
}

void Parameters::zero_grad() {
  for (auto& it : items_) it.tensor.zero_grad();
}

WeightArchive Parameters::to_archive(nlohmann::json metadata) const {
  WeightArchive a;
  for (const auto& it : items_) a.tensors.push_back({it.name, it.tensor.detach()});
  a.metadata = std::move(metadata);
  return a;
}

void Parameters::assign(const WeightArchive& archive) {
  for (auto& it : items_) {
    const Tensor& src = archive.at(it.name);
    if (src.shape() != it.tensor.shape()) {
      throw std::invalid_argument("parameter " + it.name + ": archive shape " + shape_to_string(src.shape()) +
                                  " != " + shape_to_string(it.tensor.shape()));
    }
    auto dst = it.tensor.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

Adam::Adam(const Parameters& params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0) || cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1 || !(cfg.eps > 0)) {
    throw std::invalid_argument("Adam: invalid hyperparameters");
  }
  for (const auto& it : params.items()) {
    params_.push_back(it.tensor);
    m_.emplace_back(it.tensor.numel(), 0.0);
    v_.emplace_back(it.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p];
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
    t.zero_grad();
  }
}

}  // namespace darklight::nn
